use crate::error::{Error, Result};
use crate::fracops::{apply_filter, frac_ar_expand, invert_ar, phi_int_coeffs, pi_coeffs};

use super::ReducedForm;

/// Shock input of [`bn_decompose`].
#[derive(Debug, Clone, Copy)]
pub enum BnShocks<'a> {
    /// Univariate shocks with their moving-average weights in `L_d`
    /// (`theta[0] = 1`); the weights are used as given, so the
    /// decomposition is exact for `Delta^d (y - det) = theta(L_d) u`.
    Reduced { u: &'a [f64], theta: &'a [f64] },
    /// Structural shocks with the cycle AR coefficients.
    Structural {
        eta: &'a [f64],
        eps: &'a [f64],
        phi: &'a [f64],
    },
}

/// Standard-lag weights of `sum_k w_k L_d^k` over `n` lags, by Horner's rule
/// in `L_d`.
fn lag_d_series(w: &[f64], d: f64, n: usize) -> Result<Vec<f64>> {
    let mut base = pi_coeffs(d, n)?.into_vec();
    base[0] = 0.0;
    base.iter_mut().skip(1).for_each(|b| *b = -*b);
    let m = w.len().min(n);
    let mut acc = vec![0.0; n];
    for &wk in w[..m].iter().rev() {
        let mut next = vec![0.0; n];
        for (i, &a) in acc.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in base.iter().enumerate().take(n - i).skip(1) {
                next[i + j] += a * b;
            }
        }
        next[0] += wk;
        acc = next;
    }
    Ok(acc)
}

/// Fractional Beveridge-Nelson decomposition into a trend
/// `Delta^{-d} theta(1) u` and a cycle `-sum_k T_{k+1} L_d^k u`, where
/// `T_{k+1}` is the tail sum of the weights beyond lag `k`.
///
/// With structural shocks the trend weights are `theta = 1` on `eta` and the
/// cycle weights are `(1 - z) / phi(z)` on `eps`, whose tails are
/// `-[1 / phi]_k`; the outputs then equal the structural trend and cycle.
/// The cycle filter `sum_k [1 / phi]_k L_d^k = 1 / phi(L_d)` is applied as the
/// inverse of its standard-lag AR form, since the powers `L_d^k` grow like
/// `d^k` and cancel badly for `d > 1`.
pub fn bn_decompose(shocks: BnShocks<'_>, d: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::InvalidInput(format!("d = {d} must be non-negative")));
    }
    match shocks {
        BnShocks::Reduced { u, theta } => {
            let n = u.len();
            if n == 0 || theta.first() != Some(&1.0) {
                return Err(Error::InvalidInput(
                    "need a non-empty shock series and theta_0 = 1".into(),
                ));
            }
            let total: f64 = theta.iter().sum();
            let mut tails: Vec<f64> = vec![0.0; theta.len()];
            let mut acc = 0.0;
            for k in (0..theta.len()).rev() {
                // tails[k] = T_{k+1} = sum_{j > k} theta_j
                tails[k] = acc;
                acc += theta[k];
            }
            let scaled: Vec<f64> = u.iter().map(|v| total * v).collect();
            let trend = apply_filter(&phi_int_coeffs(d, n)?, &scaled);
            let neg: Vec<f64> = tails.iter().map(|t| -t).collect();
            let cycle = apply_filter(&lag_d_series(&neg, d, n)?, u);
            Ok((trend, cycle))
        }
        BnShocks::Structural { eta, eps, phi } => {
            let n = eta.len();
            if n == 0 || eps.len() != n {
                return Err(Error::InvalidInput(
                    "eta and eps must be non-empty and of equal length".into(),
                ));
            }
            let trend = apply_filter(&phi_int_coeffs(d, n)?, eta);
            let delta = frac_ar_expand(d, phi, (n - 1).max(phi.len()))?;
            let cycle = apply_filter(&invert_ar(&delta, n)?, eps);
            Ok((trend, cycle))
        }
    }
}

/// Power-series coefficients of `1 / phi(z)`, `phi(z) = 1 - sum phi_i z^i`.
fn ar_inverse(phi: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    out[0] = 1.0;
    for j in 1..n {
        out[j] = phi
            .iter()
            .enumerate()
            .take(j)
            .map(|(i, p)| p * out[j - 1 - i])
            .sum();
    }
    out
}

/// Weights `theta^u = psi / phi` of the reduced form without the AR part.
pub fn theta_u(reduced: &ReducedForm, phi: &[f64]) -> Vec<f64> {
    let inv = ar_inverse(phi, reduced.psi.len());
    crate::fracops::convolve_truncated(&reduced.psi, &inv, reduced.psi.len())
}
