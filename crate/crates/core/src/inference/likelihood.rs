use nalgebra::{DMatrix, DVector};

use super::filter::{corrected_filter, kalman_filter, kalman_innovations, FilterOutput};
use crate::arma_map::CoeffMap;
use crate::error::{Error, Result};
use crate::fracops::frac_ar_expand;
use crate::ssmodel::{build_state_space, structural_covariances, ModelSpec, Params};

fn check_len(spec: &ModelSpec, y: &[f64]) -> Result<()> {
    if y.len() != spec.n {
        return Err(Error::InvalidInput(format!(
            "series has {} observations, model expects {}",
            y.len(),
            spec.n
        )));
    }
    Ok(())
}

/// True when the truncated system is the exact model: the trend is an exact
/// unit-root polynomial and the cycle's AR weights vanish beyond lag `l`.
pub fn truncation_is_exact(theta: &Params, spec: &ModelSpec) -> Result<bool> {
    if spec.exact_trend_order().is_none() {
        return Ok(false);
    }
    let delta = frac_ar_expand(theta.d, &theta.phi, (spec.n - 1).max(spec.l))?;
    Ok(delta[spec.l + 1..].iter().all(|&x| x == 0.0))
}

/// Filter with truncation corrections; the plain filter when the truncation
/// is exact, since every correction is then zero.
pub fn corrected_output(
    theta: &Params,
    spec: &ModelSpec,
    y: &[f64],
    map: &CoeffMap,
) -> Result<FilterOutput> {
    check_len(spec, y)?;
    let ss = build_state_space(theta, spec, map)?;
    if truncation_is_exact(theta, spec)? {
        return kalman_filter(&ss, y);
    }
    let cache = structural_covariances(theta, spec)?;
    corrected_filter(&ss, &cache, y)
}

/// Plain Kalman filter of the truncated system, ignoring the corrections.
pub fn uncorrected_output(
    theta: &Params,
    spec: &ModelSpec,
    y: &[f64],
    map: &CoeffMap,
) -> Result<FilterOutput> {
    check_len(spec, y)?;
    let ss = build_state_space(theta, spec, map)?;
    kalman_filter(&ss, y)
}

/// Exact Gaussian log-likelihood from the Cholesky factor of `Var(y)`.
/// Equals the corrected filter's likelihood, which is its prediction-error
/// decomposition, without forming the filtered states.
pub fn exact_loglik(theta: &Params, spec: &ModelSpec, y: &[f64]) -> Result<f64> {
    check_len(spec, y)?;
    let cache = structural_covariances(theta, spec)?;
    cache.loglik(&theta.demean(spec, y))
}

fn sentinel(r: Result<f64>) -> f64 {
    match r {
        Ok(v) if v.is_finite() => v,
        _ => f64::NEG_INFINITY,
    }
}

/// Corrected log-likelihood, or `-inf` for an invalid parameter point or a
/// numerical failure.
pub fn loglik_at(theta: &Params, spec: &ModelSpec, y: &[f64], map: &CoeffMap) -> f64 {
    sentinel(corrected_output(theta, spec, y, map).map(|o| o.loglik))
}

/// Log-likelihood of the truncated system without corrections, or `-inf`.
pub fn loglik_uncorrected(theta: &Params, spec: &ModelSpec, y: &[f64], map: &CoeffMap) -> f64 {
    sentinel(uncorrected_output(theta, spec, y, map).map(|o| o.loglik))
}

/// The corrected log-likelihood evaluated along the cheapest exact route, or
/// `-inf`: the plain filter when the truncation is exact, the Cholesky
/// factor otherwise.
pub fn loglik_fast(theta: &Params, spec: &ModelSpec, y: &[f64], map: &CoeffMap) -> f64 {
    if spec.d_free() && !map.contains(theta.d) {
        return f64::NEG_INFINITY;
    }
    let r = (|| {
        theta.validate(spec)?;
        if truncation_is_exact(theta, spec)? {
            uncorrected_output(theta, spec, y, map).map(|o| o.loglik)
        } else {
            exact_loglik(theta, spec, y)
        }
    })();
    sentinel(r)
}

/// Deterministic regressors: intercept, time and the optional break ramp.
pub fn regressors(spec: &ModelSpec) -> Vec<Vec<f64>> {
    let n = spec.n;
    let mut cols = vec![vec![1.0; n], (1..=n).map(|t| t as f64).collect()];
    if spec.has_break() {
        cols.push(
            (1..=n)
                .map(|t| spec.deterministic.break_regressor(t))
                .collect(),
        );
    }
    cols
}

/// GLS coefficients and log-likelihood from the prediction errors of the
/// data and of each regressor.
fn gls_profile(vy: &[f64], vx: &[Vec<f64>], f: &[f64]) -> Result<(f64, Vec<f64>)> {
    let q = vx.len();
    let mut a = DMatrix::<f64>::zeros(q, q);
    let mut b = DVector::<f64>::zeros(q);
    for t in 0..vy.len() {
        let w = 1.0 / f[t];
        for i in 0..q {
            b[i] += vx[i][t] * vy[t] * w;
            for j in 0..=i {
                a[(i, j)] += vx[i][t] * vx[j][t] * w;
            }
        }
    }
    for i in 0..q {
        for j in 0..i {
            a[(j, i)] = a[(i, j)];
        }
    }
    let mu = a
        .cholesky()
        .ok_or_else(|| Error::Estimation("deterministic regressors are collinear".into()))?
        .solve(&b);
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let ll = -0.5
        * (0..vy.len())
            .map(|t| {
                let e = vy[t] - (0..q).map(|i| vx[i][t] * mu[i]).sum::<f64>();
                ln2pi + f[t].ln() + e * e / f[t]
            })
            .sum::<f64>();
    Ok((ll, mu.iter().copied().collect()))
}

/// Log-likelihood maximized over the deterministic coefficients, with the
/// maximizing `(mu0, mu1[, mu_break])`. The deterministic entries of `theta`
/// are ignored. `corrected` selects the exact likelihood; otherwise the
/// truncated system is filtered without corrections.
pub fn profile_loglik(
    theta: &Params,
    spec: &ModelSpec,
    y: &[f64],
    map: &CoeffMap,
    corrected: bool,
) -> Result<(f64, Vec<f64>)> {
    check_len(spec, y)?;
    let mut core = theta.clone();
    core.mu0 = 0.0;
    core.mu1 = 0.0;
    core.mu_break = spec.has_break().then_some(0.0);
    if spec.d_free() && !map.contains(core.d) {
        let (lo, hi) = map.domain();
        return Err(Error::OutOfDomain { d: core.d, lo, hi });
    }
    core.validate(spec)?;
    let x = regressors(spec);
    if !corrected || truncation_is_exact(&core, spec)? {
        let ss = build_state_space(&core, spec, map)?;
        let mut cols = vec![y.to_vec()];
        cols.extend(x);
        let (mut v, f) = kalman_innovations(&ss, &cols)?;
        let vy = v.remove(0);
        return gls_profile(&vy, &v, &f);
    }
    let cache = structural_covariances(&core, spec)?;
    let diag: Vec<f64> = (0..spec.n).map(|t| cache.chol()[(t, t)]).collect();
    let scale = |z: Vec<f64>| -> Vec<f64> { z.iter().zip(&diag).map(|(a, b)| a * b).collect() };
    let vy = scale(cache.whiten(y)?);
    let vx = x
        .iter()
        .map(|c| cache.whiten(c).map(scale))
        .collect::<Result<Vec<_>>>()?;
    let f: Vec<f64> = diag.iter().map(|l| l * l).collect();
    gls_profile(&vy, &vx, &f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arma_map::build_coeff_map;
    use std::sync::OnceLock;

    const N: usize = 40;

    fn map() -> &'static CoeffMap {
        static MAP: OnceLock<CoeffMap> = OnceLock::new();
        MAP.get_or_init(|| {
            let grid: Vec<f64> = (0..=8).map(|i| 0.5 + 0.25 * i as f64).collect();
            build_coeff_map(&grid, 2, 2, N).unwrap()
        })
    }

    fn spec(p: usize) -> ModelSpec {
        ModelSpec {
            v: 2,
            w: 2,
            ..ModelSpec::fractional(p, N)
        }
        .with_truncation(4)
    }

    fn theta(d: f64) -> Params {
        Params {
            d,
            phi: vec![0.5],
            sigma_eta2: 0.6,
            sigma_eta_eps: -0.3,
            sigma_eps2: 0.9,
            mu0: 1.0,
            mu1: 0.05,
            mu_break: None,
        }
    }

    fn data() -> Vec<f64> {
        (0..N)
            .map(|t| 1.0 + 0.05 * t as f64 + (t as f64 * 0.7).sin())
            .collect()
    }

    #[test]
    fn filter_and_cholesky_routes_agree() {
        let (th, sp, y) = (theta(1.3), spec(1), data());
        let a = loglik_at(&th, &sp, &y, map());
        let b = loglik_fast(&th, &sp, &y, map());
        assert!(a.is_finite());
        assert!((a - b).abs() < 1e-8);
        assert!(loglik_uncorrected(&th, &sp, &y, map()).is_finite());
    }

    #[test]
    fn continuous_in_d() {
        let (sp, y) = (spec(1), data());
        for d in [0.8, 1.0, 1.3, 1.9] {
            let a = loglik_fast(&theta(d), &sp, &y, map());
            let b = loglik_fast(&theta(d + 1e-4), &sp, &y, map());
            assert!((a - b).abs() < 1e-2, "d = {d}: {a} vs {b}");
        }
    }

    #[test]
    fn outside_the_map_is_minus_infinity() {
        let (sp, y) = (spec(1), data());
        assert_eq!(loglik_fast(&theta(2.6), &sp, &y, map()), f64::NEG_INFINITY);
        assert_eq!(loglik_at(&theta(0.3), &sp, &y, map()), f64::NEG_INFINITY);
        let mut bad = theta(1.0);
        bad.sigma_eps2 = -1.0;
        assert_eq!(loglik_fast(&bad, &sp, &y, map()), f64::NEG_INFINITY);
    }

    #[test]
    fn cycle_variance_is_penalized_on_a_flat_series() {
        let sp = spec(1);
        let mut th = theta(1.2);
        th.sigma_eta_eps = 0.0;
        let y: Vec<f64> = (1..=N).map(|t| th.deterministic(&sp, t)).collect();
        let mut last = f64::INFINITY;
        for s in [0.2, 0.5, 1.0, 2.0, 4.0] {
            th.sigma_eps2 = s;
            let ll = loglik_fast(&th, &sp, &y, map());
            assert!(ll < last);
            last = ll;
        }
    }

    #[test]
    fn profile_recovers_exact_deterministic_terms() {
        let sp = spec(1);
        let th = theta(1.4);
        let y: Vec<f64> = (1..=N).map(|t| th.deterministic(&sp, t)).collect();
        for corrected in [false, true] {
            let (ll, mu) = profile_loglik(&th, &sp, &y, map(), corrected).unwrap();
            assert!((mu[0] - 1.0).abs() < 1e-8 && (mu[1] - 0.05).abs() < 1e-9);
            // With zero prediction errors only the log-determinant remains.
            let cache = structural_covariances(&th, &sp).unwrap();
            let zero = cache.loglik(&vec![0.0; N]).unwrap();
            if corrected {
                assert!((ll - zero).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn profile_maximizes_over_the_deterministic_terms() {
        let (sp, y) = (spec(1).with_break(20), data());
        let mut th = theta(1.1);
        th.mu_break = Some(0.0);
        for corrected in [false, true] {
            let (ll, mu) = profile_loglik(&th, &sp, &y, map(), corrected).unwrap();
            assert_eq!(mu.len(), 3);
            let mut at = th.clone();
            at.mu0 = mu[0];
            at.mu1 = mu[1];
            at.mu_break = Some(mu[2]);
            let eval = |p: &Params| {
                if corrected {
                    loglik_fast(p, &sp, &y, map())
                } else {
                    loglik_uncorrected(p, &sp, &y, map())
                }
            };
            assert!((eval(&at) - ll).abs() < 1e-8);
            for (i, h) in [(0, 0.05), (1, 0.01), (2, -0.01)] {
                let mut off = at.clone();
                match i {
                    0 => off.mu0 += h,
                    1 => off.mu1 += h,
                    _ => off.mu_break = off.mu_break.map(|v| v + h),
                }
                assert!(eval(&off) < ll);
            }
        }
    }

    #[test]
    fn unit_root_truncation_is_exact() {
        let sp = ModelSpec {
            v: 2,
            w: 2,
            ..ModelSpec::unit_root(2, N)
        };
        let mut th = theta(1.0);
        th.phi = vec![0.5, -0.2];
        assert!(truncation_is_exact(&th, &sp).unwrap());
        assert!(!truncation_is_exact(&theta(1.0), &spec(1)).unwrap());
        let y = data();
        let a = loglik_fast(&th, &sp, &y, map());
        let b = exact_loglik(&th, &sp, &y).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(exact_loglik(&theta(1.0), &spec(1), &[1.0; 5]).is_err());
        assert!(profile_loglik(&theta(1.0), &spec(1), &[1.0; 5], map(), true).is_err());
    }
}
