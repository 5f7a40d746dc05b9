use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::fracops::{frac_ar_expand, pi_coeffs};
use crate::ssmodel::Params;

/// Largest condition number accepted by [`identify_sigmas`].
pub const IDENTIFICATION_LIMIT: f64 = 1e10;

/// Standard-lag weights of `phi(L_d) Delta^d` on `eta` (`g`) and of
/// `Delta^d` on `eps` (`g~`), lags `0..n`.
fn weights(d: f64, phi: &[f64], n: usize, closed_form: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let pi = pi_coeffs(d, n)?.into_vec();
    let g = if closed_form {
        // phi(L_d) = 1 + (phi1 + 2 phi2)(Delta^d - 1) - phi2 (Delta^{2d} - 1)
        let (p1, p2) = (
            phi.first().copied().unwrap_or(0.0),
            phi.get(1).copied().unwrap_or(0.0),
        );
        let pi2 = pi_coeffs(2.0 * d, n)?;
        let mut g: Vec<f64> = (0..n)
            .map(|k| (p1 + 2.0 * p2) * pi[k] - p2 * pi2[k])
            .collect();
        g[0] = 1.0;
        g
    } else {
        frac_ar_expand(d, phi, (n - 1).max(phi.len()))?.into_vec()
    };
    Ok((g, pi))
}

/// Coefficients of `(s_eta2, s_eta_eps, s_eps2)` in `gamma_j` at time `n`.
fn gamma_coefficients(g: &[f64], gt: &[f64], j: usize, n: usize) -> [f64; 3] {
    let mut a = [0.0; 3];
    for k in j..n {
        a[0] += g[k] * g[k - j];
        a[1] += g[k] * gt[k - j] + gt[k] * g[k - j];
        a[2] += gt[k] * gt[k - j];
    }
    a
}

fn check(params: &Params, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("length n must be at least 1".into()));
    }
    if !(params.d >= 0.0 && params.d.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "d = {} must be non-negative",
            params.d
        )));
    }
    Ok(())
}

fn autocov_with(params: &Params, max_lag: usize, n: usize, closed_form: bool) -> Result<Vec<f64>> {
    check(params, n)?;
    let (g, gt) = weights(params.d, &params.phi, n, closed_form)?;
    Ok((0..=max_lag)
        .map(|j| {
            if j >= n {
                return 0.0;
            }
            let a = gamma_coefficients(&g, &gt, j, n);
            a[0] * params.sigma_eta2 + a[1] * params.sigma_eta_eps + a[2] * params.sigma_eps2
        })
        .collect())
}

/// Autocovariances `gamma_0..=gamma_J` at time `n` of
/// `phi(L_d) Delta^d (y - det) = phi(L_d) eta + (1 - L_d) eps`.
///
/// For `p <= 2` the trend weights come from the closed expression in
/// `pi(d)` and `pi(2d)`; higher orders use the expansion of `phi(L_d)`.
pub fn autocov_reduced(params: &Params, max_lag: usize, n: usize) -> Result<Vec<f64>> {
    autocov_with(params, max_lag, n, params.phi.len() <= 2)
}

/// [`autocov_reduced`] computed from the expansion of `phi(L_d)` for any `p`.
pub fn autocov_convolution(params: &Params, max_lag: usize, n: usize) -> Result<Vec<f64>> {
    autocov_with(params, max_lag, n, false)
}

/// Recovers `(s_eta2, s_eta_eps, s_eps2)` from `gamma_0..=gamma_2` given `d`
/// and `phi`, by solving the linear system the autocovariances satisfy.
pub fn identify_sigmas(gamma: &[f64], d: f64, phi: &[f64], n: usize) -> Result<(f64, f64, f64)> {
    if gamma.len() < 3 {
        return Err(Error::InvalidInput(
            "need gamma_0, gamma_1 and gamma_2".into(),
        ));
    }
    if n < 3 {
        return Err(Error::InvalidInput("length n must be at least 3".into()));
    }
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::InvalidInput(format!("d = {d} must be non-negative")));
    }
    let (g, gt) = weights(d, phi, n, false)?;
    let mut a = Matrix3::zeros();
    for j in 0..3 {
        let row = gamma_coefficients(&g, &gt, j, n);
        for (c, v) in row.iter().enumerate() {
            a[(j, c)] = *v;
        }
    }
    let sv = a.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition <= IDENTIFICATION_LIMIT) {
        return Err(Error::NotIdentified {
            condition,
            limit: IDENTIFICATION_LIMIT,
        });
    }
    let b = nalgebra::Vector3::new(gamma[0], gamma[1], gamma[2]);
    let x = a.lu().solve(&b).ok_or(Error::NotIdentified {
        condition,
        limit: IDENTIFICATION_LIMIT,
    })?;
    Ok((x[0], x[1], x[2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d: f64, phi: Vec<f64>, se: f64, sx: f64, sc: f64) -> Params {
        Params {
            d,
            phi,
            sigma_eta2: se,
            sigma_eta_eps: sx,
            sigma_eps2: sc,
            mu0: 0.0,
            mu1: 0.0,
            mu_break: None,
        }
    }

    #[test]
    fn random_walk_plus_noise_differences() {
        let (se, sx, sc) = (0.7, -0.2, 1.3);
        let g = autocov_reduced(&params(1.0, vec![], se, sx, sc), 4, 50).unwrap();
        assert!((g[0] - (se + 2.0 * sc + 2.0 * sx)).abs() < 1e-14);
        assert!((g[1] - (-sc - sx)).abs() < 1e-14);
        assert_eq!(&g[2..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn unit_d_ar_one_has_no_second_lag() {
        let g = autocov_reduced(&params(1.0, vec![0.6], 1.0, -0.4, 0.9), 5, 40).unwrap();
        assert!(g[1] != 0.0);
        for v in &g[2..] {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_matches_expansion() {
        let p = params(1.5, vec![0.5, -0.2], 1.0, -0.4, 1.0);
        let a = autocov_reduced(&p, 6, 200).unwrap();
        let b = autocov_convolution(&p, 6, 200).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn lags_beyond_the_sample_vanish() {
        let g = autocov_reduced(&params(0.8, vec![0.3], 1.0, 0.2, 0.5), 6, 4).unwrap();
        assert_eq!(&g[4..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn round_trip_recovers_variances() {
        let p = params(1.32, vec![0.68], 0.36, -0.60, 1.06);
        let g = autocov_reduced(&p, 2, 232).unwrap();
        let (se, sx, sc) = identify_sigmas(&g, 1.32, &[0.68], 232).unwrap();
        assert!((se - 0.36).abs() < 1e-8);
        assert!((sx + 0.60).abs() < 1e-8);
        assert!((sc - 1.06).abs() < 1e-8);
    }

    #[test]
    fn i2_trend_is_identified_without_cycle_dynamics() {
        let p = params(2.0, vec![], 0.5, 0.1, 0.8);
        let g = autocov_reduced(&p, 2, 100).unwrap();
        let (se, sx, sc) = identify_sigmas(&g, 2.0, &[], 100).unwrap();
        assert!((se - 0.5).abs() < 1e-10 && (sx - 0.1).abs() < 1e-10 && (sc - 0.8).abs() < 1e-10);
    }

    #[test]
    fn unit_d_ar_one_is_not_identified() {
        let p = params(1.0, vec![0.5], 1.0, -0.3, 0.7);
        let g = autocov_reduced(&p, 2, 100).unwrap();
        assert!(matches!(
            identify_sigmas(&g, 1.0, &[0.5], 100),
            Err(Error::NotIdentified { .. })
        ));
    }
}
