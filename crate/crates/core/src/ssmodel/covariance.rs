use nalgebra::DMatrix;

use super::params::Params;
use super::spec::ModelSpec;
use super::statespace::StateSpace;
use crate::error::{Error, Result};
use crate::fracops::{frac_ar_expand, invert_ar, phi_int_coeffs};

/// Largest sample length accepted by [`structural_covariances`].
pub const DEFAULT_MAX_N: usize = 4096;

/// Pivots below this fraction of the corresponding diagonal entry are treated
/// as numerically singular.
const PIVOT_REL_TOL: f64 = 1e-13;

/// Exact second moments of the observations and the shocks for one parameter
/// point, with the Cholesky factor of `Var(y_{1:n})`.
#[derive(Debug, Clone)]
pub struct CovCache {
    n: usize,
    /// `phi_j(d)`, the trend's Wold weights, for lags `0..=n`.
    pub wold_trend: Vec<f64>,
    /// `omega_j`, Wold weights of the untruncated cycle filter, lags `0..=n`.
    pub wold_cycle: Vec<f64>,
    /// `Cov(y_t, eta_{t-j})` by lag `j`.
    eta_lag: Vec<f64>,
    /// `Cov(y_t, eps_{t-j})` by lag `j`.
    eps_lag: Vec<f64>,
    sigma_y: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl CovCache {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `Var(y_{1:n})`.
    pub fn sigma_y(&self) -> &DMatrix<f64> {
        &self.sigma_y
    }

    /// Lower-triangular `L` with `L L' = Var(y_{1:n})`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `Cov(y_t, eta_s)`, row `t`, column `s`.
    pub fn sigma_eta_y(&self) -> DMatrix<f64> {
        lower_toeplitz(&self.eta_lag)
    }

    /// `Cov(y_t, eps_s)`, row `t`, column `s`.
    pub fn sigma_eps_y(&self) -> DMatrix<f64> {
        lower_toeplitz(&self.eps_lag)
    }

    /// Solves `L z = y`; `z` holds the standardized innovations.
    pub fn whiten(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y)?;
        let n = self.n;
        let mut z = y.to_vec();
        for j in 0..n {
            let zj = z[j] / self.chol[(j, j)];
            z[j] = zj;
            let col = self.chol.column(j);
            for i in j + 1..n {
                z[i] -= col[i] * zj;
            }
        }
        Ok(z)
    }

    /// Exact Gaussian log-likelihood of a demeaned series.
    pub fn loglik(&self, y_demeaned: &[f64]) -> Result<f64> {
        let z = self.whiten(y_demeaned)?;
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        Ok(-0.5
            * z.iter()
                .enumerate()
                .map(|(t, zt)| ln2pi + 2.0 * self.chol[(t, t)].ln() + zt * zt)
                .sum::<f64>())
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "series has {} observations, covariances were built for {}",
                y.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// Walks `t = 1..=n`, calling `visit` with the filtered shock means
    /// `E[eta_s | F_t]`, `E[eps_s | F_t]` for `s = 1..=t` (slices of length
    /// `t`), the standardized innovation `z_t` and the pivot `L_tt`.
    ///
    /// Each step costs `O(t^2)` and reads only observations up to `t`.
    pub(crate) fn project_shocks<F>(&self, y_demeaned: &[f64], mut visit: F) -> Result<()>
    where
        F: FnMut(usize, &[f64], &[f64], f64, f64),
    {
        self.check_len(y_demeaned)?;
        let n = self.n;
        let l = &self.chol;
        // Packed rows of G = L^{-1} Sigma_{y,eta} and H = L^{-1} Sigma_{y,eps};
        // both are lower triangular.
        let mut g = vec![0.0; n * (n + 1) / 2];
        let mut h = vec![0.0; n * (n + 1) / 2];
        let row = |t: usize| t * (t + 1) / 2;
        let mut e_eta = vec![0.0; n];
        let mut e_eps = vec![0.0; n];
        let mut z = vec![0.0; n];
        for t in 0..n {
            let ltt = l[(t, t)];
            let mut zt = y_demeaned[t];
            for r in 0..t {
                zt -= l[(t, r)] * z[r];
            }
            zt /= ltt;
            z[t] = zt;
            let (done_g, rest_g) = g.split_at_mut(row(t));
            let (done_h, rest_h) = h.split_at_mut(row(t));
            let gt = &mut rest_g[..=t];
            let ht = &mut rest_h[..=t];
            for s in 0..=t {
                gt[s] = self.eta_lag[t - s];
                ht[s] = self.eps_lag[t - s];
            }
            for r in 0..t {
                let ltr = l[(t, r)];
                if ltr == 0.0 {
                    continue;
                }
                let gr = &done_g[row(r)..row(r) + r + 1];
                let hr = &done_h[row(r)..row(r) + r + 1];
                for s in 0..=r {
                    gt[s] -= ltr * gr[s];
                    ht[s] -= ltr * hr[s];
                }
            }
            for s in 0..=t {
                gt[s] /= ltt;
                ht[s] /= ltt;
                e_eta[s] += gt[s] * zt;
                e_eps[s] += ht[s] * zt;
            }
            visit(t + 1, &e_eta[..=t], &e_eps[..=t], zt, ltt);
        }
        Ok(())
    }
}

fn lower_toeplitz(lag: &[f64]) -> DMatrix<f64> {
    let n = lag.len();
    DMatrix::from_fn(n, n, |t, s| if t >= s { lag[t - s] } else { 0.0 })
}

/// Cholesky factor of a symmetric matrix, left-looking by columns.
///
/// Fails at the first pivot that is not a positive fraction (at least
/// `1e-13`) of its diagonal entry, reporting its 1-based row and value.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput("Cholesky needs a square matrix".into()));
    }
    let mut l = a.clone();
    let data = l.as_mut_slice();
    for j in 0..n {
        let (left, right) = data.split_at_mut(j * n);
        let col_j = &mut right[..n];
        for k in 0..j {
            let col_k = &left[k * n..(k + 1) * n];
            let ljk = col_k[j];
            if ljk == 0.0 {
                continue;
            }
            for i in j..n {
                col_j[i] -= ljk * col_k[i];
            }
        }
        let pivot = col_j[j];
        if !(pivot > PIVOT_REL_TOL * a[(j, j)].abs()) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { row: j + 1, pivot });
        }
        let root = pivot.sqrt();
        col_j[j] = root;
        for v in &mut col_j[j + 1..] {
            *v /= root;
        }
        for v in &mut col_j[..j] {
            *v = 0.0;
        }
    }
    Ok(l)
}

/// Builds the exact covariances implied by `params` for a sample of length
/// `spec.n`, rejecting samples longer than [`DEFAULT_MAX_N`].
pub fn structural_covariances(params: &Params, spec: &ModelSpec) -> Result<CovCache> {
    structural_covariances_with_limit(params, spec, DEFAULT_MAX_N)
}

pub fn structural_covariances_with_limit(
    params: &Params,
    spec: &ModelSpec,
    max_n: usize,
) -> Result<CovCache> {
    let n = spec.n;
    if n > max_n {
        return Err(Error::InvalidInput(format!(
            "sample length {n} exceeds the configured maximum {max_n}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    params.validate(spec)?;
    // One lag past the sample serves the correction formed at t = n.
    let phi = phi_int_coeffs(params.d, n + 1)?.into_vec();
    let delta = frac_ar_expand(params.d, &params.phi, n.max(spec.p))?;
    let omega = invert_ar(&delta, n + 1)?.into_vec();
    let (se, sx, sc) = (params.sigma_eta2, params.sigma_eta_eps, params.sigma_eps2);
    let eta_lag: Vec<f64> = (0..n).map(|j| phi[j] * se + omega[j] * sx).collect();
    let eps_lag: Vec<f64> = (0..n).map(|j| phi[j] * sx + omega[j] * sc).collect();

    // Cov(y_t, y_{t-h}) sums f_h(i) over i < t - h, so one running sum per lag
    // fills a whole diagonal.
    let mut sigma_y = DMatrix::zeros(n, n);
    for h in 0..n {
        let mut acc = 0.0;
        for i in 0..n - h {
            acc += phi[i + h] * phi[i] * se
                + (phi[i + h] * omega[i] + omega[i + h] * phi[i]) * sx
                + omega[i + h] * omega[i] * sc;
            let (t, s) = (i + h, i);
            sigma_y[(t, s)] = acc;
            sigma_y[(s, t)] = acc;
        }
    }
    let chol = cholesky_lower(&sigma_y)?;
    Ok(CovCache {
        n,
        wold_trend: phi,
        wold_cycle: omega,
        eta_lag,
        eps_lag,
        sigma_y,
        chol,
    })
}

/// Truncation corrections of the one-step predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionTerms {
    /// `eps_x[t-1]` is the trend correction formed at time `t`.
    pub eps_x: Vec<f64>,
    /// `eps_c[t-1]` is the cycle correction formed at time `t`.
    pub eps_c: Vec<f64>,
    /// `y_t - eps_x_{t-1} - eps_c_{t-1}`, with the first value unchanged.
    pub y_corrected: Vec<f64>,
    /// Wold weights `b_j` of the truncated trend block.
    pub arma_wold: Vec<f64>,
    /// Wold weights of the truncated cycle block.
    pub omega_trunc: Vec<f64>,
}

/// Corrections that turn the truncated system's one-step predictions into
/// exact conditional means:
/// `eps_x_t = sum_{j=1}^t (phi_j - b_j) E[eta_{t+1-j} | F_t]` and likewise for
/// the cycle with `omega_j` minus the truncated block's weights.
pub fn correction_terms(
    cache: &CovCache,
    ss: &StateSpace,
    y_demeaned: &[f64],
) -> Result<CorrectionTerms> {
    let n = cache.n();
    let mut b = ss.x.impulse_response(n + 1);
    let mut omega_t = ss.c.impulse_response(n + 1);
    let dx: Vec<f64> = cache
        .wold_trend
        .iter()
        .zip(&b)
        .map(|(a, c)| a - c)
        .collect();
    let dc: Vec<f64> = cache
        .wold_cycle
        .iter()
        .zip(&omega_t)
        .map(|(a, c)| a - c)
        .collect();
    let mut eps_x = vec![0.0; n];
    let mut eps_c = vec![0.0; n];
    cache.project_shocks(y_demeaned, |t, e_eta, e_eps, _, _| {
        // E[eta_{t+1-j} | F_t] sits at index t - j.
        let mut sx = 0.0;
        let mut sc = 0.0;
        for j in 1..=t {
            sx += dx[j] * e_eta[t - j];
            sc += dc[j] * e_eps[t - j];
        }
        eps_x[t - 1] = sx;
        eps_c[t - 1] = sc;
    })?;
    let mut y_corrected = y_demeaned.to_vec();
    for t in 1..n {
        y_corrected[t] -= eps_x[t - 1] + eps_c[t - 1];
    }
    b.truncate(n);
    omega_t.truncate(n);
    Ok(CorrectionTerms {
        eps_x,
        eps_c,
        y_corrected,
        arma_wold: b,
        omega_trunc: omega_t,
    })
}
