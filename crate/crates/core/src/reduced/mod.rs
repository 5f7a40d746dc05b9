//! Reduced form of the trend-cycle model: aggregation of the two shock
//! moving averages in the fractional lag operator into one, the implied
//! autocovariances, variance identification, the fractional
//! Beveridge-Nelson decomposition and the log-periodogram diagnostic.

mod autocov;
mod bn;
mod gph;

pub use autocov::{autocov_convolution, autocov_reduced, identify_sigmas, IDENTIFICATION_LIMIT};
pub use bn::{bn_decompose, theta_u, BnShocks};
pub use gph::{gph_estimate, gph_regression, GphEstimate, GPH_MIN_LEN};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::{CoeffSeq, VarsigmaTable};
use crate::ssmodel::{ModelSpec, Params};

/// Single-shock representation `z_t = psi(L_d) u_t` of an aggregate of two
/// correlated moving averages in `L_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedForm {
    pub d: f64,
    /// Coefficients in powers of `L_d`, `psi_0 = 1`.
    pub psi: CoeffSeq,
    /// Coefficients in the standard lag, `c_0 = 1`.
    pub c_std: CoeffSeq,
    /// Variance of `u_t`, `sigma_eta2 + sigma_eps2 + 2 sigma_eta_eps`.
    pub sigma_u2: f64,
}

fn check_q(q: &Matrix2<f64>) -> Result<()> {
    let (se, sx, sc) = (q[(0, 0)], q[(0, 1)], q[(1, 1)]);
    if !(se.is_finite() && sx.is_finite() && sc.is_finite()) || q[(1, 0)] != sx {
        return Err(Error::InvalidParams(
            "shock covariance must be finite and symmetric".into(),
        ));
    }
    let scale = se.abs().max(sc.abs());
    if se < 0.0 || sc < 0.0 || se * sc - sx * sx < -1e-12 * scale * scale {
        return Err(Error::InvalidParams(
            "shock covariance is not positive semidefinite".into(),
        ));
    }
    Ok(())
}

/// Aggregates `h(L_d) eta_t + h_tilde(L_d) eps_t` over `n` lags.
///
/// The standard-lag weights of the two parts are `g_l`, `g~_l`, and `c_l`
/// matches `c_l^2 sigma_u2 = g_l^2 s_eta2 + g~_l^2 s_eps2 + 2 g_l g~_l s_eta_eps`.
/// The sign of `c_l` is that of the covariance between the aggregate and
/// `eta_{t-l} + eps_{t-l}`, zero counting as positive. The coefficients in
/// `L_d` then solve `sum_{k<=l} varsigma_{k,l} psi_k = c_l` by forward
/// substitution.
pub fn aggregate_ma(
    h: &[f64],
    h_tilde: &[f64],
    q: &Matrix2<f64>,
    d: f64,
    n: usize,
) -> Result<ReducedForm> {
    if h.first() != Some(&1.0) || h_tilde.first() != Some(&1.0) {
        return Err(Error::InvalidInput(
            "both moving-average polynomials need a leading coefficient of 1".into(),
        ));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidInput(format!("d = {d} must be positive")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("length n must be at least 1".into()));
    }
    check_q(q)?;
    let (se, sx, sc) = (q[(0, 0)], q[(0, 1)], q[(1, 1)]);
    let sigma_u2 = se + sc + 2.0 * sx;
    if !(sigma_u2 > 1e-14 * (se + sc)) {
        return Err(Error::InvalidParams(format!(
            "aggregate shock variance {sigma_u2:e} is not positive"
        )));
    }

    let table = VarsigmaTable::new(d, n.saturating_sub(1), n)?;
    let weight = |coef: &[f64], l: usize| -> f64 {
        (1..=l.min(coef.len().saturating_sub(1)))
            .map(|k| table.get(k, l) * coef[k])
            .sum()
    };
    let mut c = vec![0.0; n];
    c[0] = 1.0;
    for (l, cl) in c.iter_mut().enumerate().skip(1) {
        let (g, gt) = (weight(h, l), weight(h_tilde, l));
        let sq = g * g * se + gt * gt * sc + 2.0 * g * gt * sx;
        let sign = if g * (se + sx) + gt * (sx + sc) < 0.0 {
            -1.0
        } else {
            1.0
        };
        *cl = sign * (sq.max(0.0) / sigma_u2).sqrt();
    }

    let mut psi = vec![0.0; n];
    psi[0] = 1.0;
    for l in 1..n {
        let diag = table.get(l, l);
        if diag == 0.0 || !diag.is_finite() {
            return Err(Error::InvalidInput(format!(
                "varsigma_{{{l},{l}}}({d}) = {diag} cannot be inverted"
            )));
        }
        let s: f64 = (1..l).map(|k| table.get(k, l) * psi[k]).sum();
        psi[l] = (c[l] - s) / diag;
    }
    Ok(ReducedForm {
        d,
        psi: CoeffSeq::new(psi)?,
        c_std: CoeffSeq::new(c)?,
        sigma_u2,
    })
}

/// Reduced form of the structural model: `phi(L_d) eta_t + (1 - L_d) eps_t`
/// aggregated over the sample length of `spec`.
pub fn reduced_psi(params: &Params, spec: &ModelSpec) -> Result<ReducedForm> {
    params.validate(spec)?;
    let mut h = vec![1.0];
    h.extend(params.phi.iter().map(|v| -v));
    aggregate_ma(&h, &[1.0, -1.0], &params.q(), params.d, spec.n)
}
