use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::likelihood::{loglik_fast, profile_loglik};
use crate::arma_map::CoeffMap;
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, nelder_mead_restarts, NelderMeadOptions};
use crate::ssmodel::{is_stable, DMode, ModelSpec, Params};

/// Settings of the two-stage estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Random starting points for the screening stage.
    pub starts: usize,
    pub seed: u64,
    /// Screening stage on the uncorrected likelihood.
    pub stage1: NelderMeadOptions,
    /// Refinement on the exact likelihood.
    pub stage2: NelderMeadOptions,
    /// Simplex restarts of the refinement.
    pub stage2_restarts: usize,
    /// Central-difference step in the transformed coordinates.
    pub hessian_step: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            starts: 100,
            seed: 0,
            stage1: NelderMeadOptions {
                max_iter: 2000,
                f_rel_tol: 1e-4,
                f_abs_tol: 0.0,
                x_tol: 0.0,
            },
            stage2: NelderMeadOptions {
                max_iter: 5000,
                f_rel_tol: 1e-8,
                f_abs_tol: 0.0,
                x_tol: 0.0,
            },
            stage2_restarts: 2,
            hessian_step: 1e-4,
        }
    }
}

/// Bounds of the uniform draws for starting values.
pub const LOG_VARIANCE_BOX: (f64, f64) = (-6.0, 4.0);
/// Box for the Fisher transform of the shock correlation. It also bounds the
/// search: as the correlation tends to one in absolute value the likelihood
/// can grow without a numerically usable maximum.
pub const ATANH_RHO_BOX: (f64, f64) = (-3.0, 3.0);
/// Partial autocorrelations of the cycle are drawn from this symmetric box.
pub const PACF_BOUND: f64 = 0.9;

/// Maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub params: Params,
    pub loglik: f64,
    pub bic: f64,
    /// Parameter names in reporting order.
    pub names: Vec<String>,
    /// Reported values, aligned with `names`.
    pub values: Vec<f64>,
    /// Standard errors aligned with `names`; `None` where undefined.
    pub std_errors: Vec<Option<f64>>,
    /// Whether the negative Hessian was positive definite.
    pub hessian_pd: bool,
    pub converged: bool,
    /// Starts whose screening run ended at a finite likelihood.
    pub n_starts_used: usize,
    /// Best screening (uncorrected) log-likelihood.
    pub stage1_loglik: f64,
    pub stage2_iterations: usize,
    pub options: EstimateOptions,
}

/// Natural parameter names in reporting order.
pub fn param_names(spec: &ModelSpec) -> Vec<String> {
    let mut names = Vec::new();
    if spec.d_free() {
        names.push("d".to_string());
    }
    names.extend((1..=spec.p).map(|i| format!("phi{i}")));
    names.extend(
        ["sigma_eta2", "sigma_eta_eps", "sigma_eps2", "mu0", "mu1"]
            .iter()
            .map(|s| s.to_string()),
    );
    if spec.has_break() {
        names.push("mu_break".into());
    }
    names
}

/// Natural parameter values in the order of [`param_names`].
pub fn param_values(params: &Params, spec: &ModelSpec) -> Vec<f64> {
    let mut v = Vec::new();
    if spec.d_free() {
        v.push(params.d);
    }
    v.extend(&params.phi);
    v.extend([
        params.sigma_eta2,
        params.sigma_eta_eps,
        params.sigma_eps2,
        params.mu0,
        params.mu1,
    ]);
    v.extend(params.mu_break);
    v
}

/// Unconstrained coordinates `[d, phi, ln s_eta2, ln s_eps2, atanh rho, mu0,
/// mu1, mu_break]`, with `d` only when free and `mu_break` only with a break.
pub fn to_unconstrained(params: &Params, spec: &ModelSpec) -> Vec<f64> {
    let mut x = Vec::with_capacity(spec.free_param_count());
    if spec.d_free() {
        x.push(params.d);
    }
    x.extend(&params.phi);
    let rho = params.rho().clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    x.extend([
        params.sigma_eta2.ln(),
        params.sigma_eps2.ln(),
        rho.atanh(),
        params.mu0,
        params.mu1,
    ]);
    x.extend(params.mu_break);
    x
}

pub fn from_unconstrained(x: &[f64], spec: &ModelSpec) -> Params {
    let mut it = x.iter().copied();
    let d = match spec.d_mode {
        DMode::Free => it.next().unwrap_or(f64::NAN),
        DMode::Fixed(d) => d,
    };
    let phi: Vec<f64> = it.by_ref().take(spec.p).collect();
    let mut next = || it.next().unwrap_or(f64::NAN);
    let (le, lc, ar) = (next(), next(), next());
    let (se, sc) = (le.exp(), lc.exp());
    let mu0 = next();
    let mu1 = next();
    let mu_break = spec.has_break().then(next);
    Params {
        d,
        phi,
        sigma_eta2: se,
        sigma_eta_eps: ar.tanh() * (se * sc).sqrt(),
        sigma_eps2: sc,
        mu0,
        mu1,
        mu_break,
    }
}

/// Jacobian of [`param_values`] with respect to the unconstrained coordinates.
fn natural_jacobian(params: &Params, spec: &ModelSpec) -> DMatrix<f64> {
    let k = spec.free_param_count();
    let mut j = DMatrix::identity(k, k);
    let o = usize::from(spec.d_free()) + spec.p;
    // rows: s_eta2, s_eta_eps, s_eps2; columns: ln s_eta2, ln s_eps2, atanh rho
    let rho = params.rho();
    let sd = (params.sigma_eta2 * params.sigma_eps2).sqrt();
    j[(o, o)] = params.sigma_eta2;
    j[(o, o + 1)] = 0.0;
    j[(o + 1, o)] = params.sigma_eta_eps / 2.0;
    j[(o + 1, o + 1)] = params.sigma_eta_eps / 2.0;
    j[(o + 1, o + 2)] = (1.0 - rho * rho) * sd;
    j[(o + 2, o + 1)] = params.sigma_eps2;
    j[(o + 2, o + 2)] = 0.0;
    j
}

/// Map from partial autocorrelations to AR coefficients (Durbin-Levinson).
fn pacf_to_ar(r: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(r.len());
    for (k, &rk) in r.iter().enumerate() {
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - rk * prev[k - 1 - j];
        }
        phi.push(rk);
    }
    phi
}

/// Number of deterministic coefficients, which trail the unconstrained
/// coordinates.
fn deterministic_count(spec: &ModelSpec) -> usize {
    2 + usize::from(spec.has_break())
}

/// Initial simplex steps in the unconstrained coordinates without the
/// deterministic terms.
fn simplex_steps(spec: &ModelSpec, mult: f64) -> Vec<f64> {
    let mut s = Vec::new();
    if spec.d_free() {
        s.push(0.1);
    }
    s.extend(std::iter::repeat_n(0.1, spec.p));
    s.extend([0.5, 0.5, 0.3]);
    s.iter().map(|v| v * mult).collect()
}

/// Stochastic parameters from the leading unconstrained coordinates, with
/// the deterministic terms set to `mu`.
fn from_core(xc: &[f64], spec: &ModelSpec, mu: &[f64]) -> Params {
    let mut x = xc.to_vec();
    x.extend(mu);
    from_unconstrained(&x, spec)
}

fn core_of(params: &Params, spec: &ModelSpec) -> Vec<f64> {
    let mut x = to_unconstrained(params, spec);
    x.truncate(x.len() - deterministic_count(spec));
    x
}

/// Negative profile log-likelihood at core coordinates, `+inf` on failure.
fn profile_objective(
    xc: &[f64],
    spec: &ModelSpec,
    y: &[f64],
    map: &CoeffMap,
    corrected: bool,
) -> f64 {
    let r = xc[usize::from(spec.d_free()) + spec.p + 2];
    // slack absorbs the round trip of draws on the box edge
    if !(ATANH_RHO_BOX.0 - 1e-9..=ATANH_RHO_BOX.1 + 1e-9).contains(&r) {
        return f64::INFINITY;
    }
    let zeros = vec![0.0; deterministic_count(spec)];
    match profile_loglik(&from_core(xc, spec, &zeros), spec, y, map, corrected) {
        Ok((ll, _)) if ll.is_finite() => -ll,
        _ => f64::INFINITY,
    }
}

/// Draws one starting point from the documented boxes.
fn draw_start(rng: &mut ChaCha20Rng, spec: &ModelSpec, map: &CoeffMap) -> Params {
    let (lo, hi) = map.domain();
    let d = match spec.d_mode {
        DMode::Free => rng.random_range(lo..=hi),
        DMode::Fixed(d) => d,
    };
    let mut phi = vec![0.0; spec.p];
    for _ in 0..100 {
        let r: Vec<f64> = (0..spec.p)
            .map(|_| rng.random_range(-PACF_BOUND..=PACF_BOUND))
            .collect();
        let cand = pacf_to_ar(&r);
        if is_stable(&cand, d) {
            phi = cand;
            break;
        }
    }
    let se = rng
        .random_range(LOG_VARIANCE_BOX.0..=LOG_VARIANCE_BOX.1)
        .exp();
    let sc = rng
        .random_range(LOG_VARIANCE_BOX.0..=LOG_VARIANCE_BOX.1)
        .exp();
    let rho = rng.random_range(ATANH_RHO_BOX.0..=ATANH_RHO_BOX.1).tanh();
    Params {
        d,
        phi,
        sigma_eta2: se,
        sigma_eta_eps: rho * (se * sc).sqrt(),
        sigma_eps2: sc,
        mu0: 0.0,
        mu1: 0.0,
        mu_break: spec.has_break().then_some(0.0),
    }
}

/// Starting points of the screening stage, deterministic given the seed.
/// Deterministic terms are zero; they are concentrated out during the search.
pub fn starting_points(spec: &ModelSpec, map: &CoeffMap, opts: &EstimateOptions) -> Vec<Params> {
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    (0..opts.starts)
        .map(|_| draw_start(&mut rng, spec, map))
        .collect()
}

fn check_inputs(spec: &ModelSpec, y: &[f64], map: &CoeffMap) -> Result<()> {
    spec.validate_with_map(map)?;
    if y.len() != spec.n {
        return Err(Error::InvalidInput(format!(
            "series has {} observations, model expects {}",
            y.len(),
            spec.n
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "observation {} is not finite",
            i + 1
        )));
    }
    Ok(())
}

/// Two-stage maximum likelihood: a screening Nelder-Mead from every random
/// start on the uncorrected likelihood, then a refinement of the best point
/// on the exact corrected likelihood, with Hessian standard errors.
///
/// Both stages search the stochastic parameters with the deterministic
/// coefficients replaced by their GLS values, which leaves the maximizer of
/// the joint likelihood unchanged.
pub fn estimate(
    spec: &ModelSpec,
    y: &[f64],
    map: &CoeffMap,
    opts: &EstimateOptions,
) -> Result<FitResult> {
    check_inputs(spec, y, map)?;
    let starts = starting_points(spec, map, opts);
    let steps = simplex_steps(spec, 1.0);
    let screened: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .map(|p| {
            let m = nelder_mead(
                |x| profile_objective(x, spec, y, map, false),
                &core_of(p, spec),
                &steps,
                &opts.stage1,
            );
            (m.x, -m.f)
        })
        .collect();
    let used = screened.iter().filter(|(_, f)| f.is_finite()).count();
    let best = screened
        .iter()
        .enumerate()
        .filter(|(_, (_, f))| f.is_finite())
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)));
    let Some((_, (x1, ll1))) = best else {
        return Err(Error::Estimation(format!(
            "all {} starting points gave a non-finite screening likelihood",
            opts.starts
        )));
    };
    let zeros = vec![0.0; deterministic_count(spec)];
    let mut fit = refine(spec, y, map, &from_core(x1, spec, &zeros), opts)?;
    fit.n_starts_used = used;
    fit.stage1_loglik = *ll1;
    Ok(fit)
}

/// Refinement stage alone, started at the stochastic parameters of `start`.
pub fn refine(
    spec: &ModelSpec,
    y: &[f64],
    map: &CoeffMap,
    start: &Params,
    opts: &EstimateOptions,
) -> Result<FitResult> {
    check_inputs(spec, y, map)?;
    let objective = |x: &[f64]| profile_objective(x, spec, y, map, true);
    let x0 = core_of(start, spec);
    if !objective(&x0).is_finite() {
        return Err(Error::Estimation(
            "exact likelihood is not finite at the refinement start".into(),
        ));
    }
    let steps = simplex_steps(spec, 0.25);
    let m = nelder_mead_restarts(objective, &x0, &steps, &opts.stage2, opts.stage2_restarts);
    let zeros = vec![0.0; deterministic_count(spec)];
    let (loglik, mu) = profile_loglik(&from_core(&m.x, spec, &zeros), spec, y, map, true)?;
    let params = from_core(&m.x, spec, &mu);
    let (std_errors, hessian_pd) = standard_errors(spec, y, map, &params, opts.hessian_step);
    let k = spec.free_param_count() as f64;
    Ok(FitResult {
        spec: spec.clone(),
        names: param_names(spec),
        values: param_values(&params, spec),
        params,
        loglik,
        bic: k * (spec.n as f64).ln() - 2.0 * loglik,
        std_errors,
        hessian_pd,
        converged: m.converged,
        n_starts_used: 1,
        stage1_loglik: f64::NAN,
        stage2_iterations: m.iterations,
        options: opts.clone(),
    })
}

/// Central-difference Hessian of the log-likelihood in the unconstrained
/// coordinates.
pub fn loglik_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> DMatrix<f64> {
    let k = x.len();
    let f0 = f(x);
    let at = |i: usize, si: f64, j: usize, sj: f64| {
        let mut z = x.to_vec();
        z[i] += si * h;
        z[j] += sj * h;
        f(&z)
    };
    let mut hm = DMatrix::zeros(k, k);
    for i in 0..k {
        hm[(i, i)] = (at(i, 1.0, i, 0.0) - 2.0 * f0 + at(i, -1.0, i, 0.0)) / (h * h);
        for j in 0..i {
            let v = (at(i, 1.0, j, 1.0) - at(i, 1.0, j, -1.0) - at(i, -1.0, j, 1.0)
                + at(i, -1.0, j, -1.0))
                / (4.0 * h * h);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    hm
}

/// Delta-method standard errors of the natural parameters from the inverse
/// negative Hessian. A negative Hessian that is not positive definite yields
/// no standard errors and `false`.
fn standard_errors(
    spec: &ModelSpec,
    y: &[f64],
    map: &CoeffMap,
    params: &Params,
    h: f64,
) -> (Vec<Option<f64>>, bool) {
    let k = spec.free_param_count();
    let x = to_unconstrained(params, spec);
    let hess = loglik_hessian(
        |z| loglik_fast(&from_unconstrained(z, spec), spec, y, map),
        &x,
        h,
    );
    let info = -hess;
    if info.iter().any(|v| !v.is_finite()) {
        return (vec![None; k], false);
    }
    let Some(chol) = info.clone().cholesky() else {
        return (vec![None; k], false);
    };
    let cov = chol.inverse();
    let j = natural_jacobian(params, spec);
    let nat = &j * cov * j.transpose();
    let se = (0..k)
        .map(|i| {
            let v = nat[(i, i)];
            (v > 0.0 && v.is_finite()).then(|| v.sqrt())
        })
        .collect();
    (se, true)
}
