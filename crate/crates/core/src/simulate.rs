//! Exact simulation of the type II trend-cycle model and a Monte Carlo
//! harness for the estimator.
//!
//! Paths draw from ChaCha20 seeded with `seed_from_u64(seed)`; replication
//! `i` of a Monte Carlo run uses stream `i` of that generator, so a plain
//! simulation with the same seed equals replication 0.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arma_map::CoeffMap;
use crate::error::{Error, Result};
use crate::fracops::{apply_filter, frac_ar_expand, phi_int_coeffs};
use crate::inference::{estimate, param_names, param_values, EstimateOptions};
use crate::ssmodel::{is_stable, ModelSpec, Params};

/// Name and version of the generator, recorded in outputs.
pub const GENERATOR: &str = "ChaCha20 (rand_chacha 0.9), stream per replication";

/// A simulated path with its components and shocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPath {
    pub y: Vec<f64>,
    /// Fractionally integrated trend shocks, without deterministic terms.
    pub x: Vec<f64>,
    pub c: Vec<f64>,
    pub eta: Vec<f64>,
    pub eps: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
    pub params: Params,
    pub spec: ModelSpec,
}

/// Lower Cholesky factor of `Q`, allowing zero variances.
fn shock_factor(p: &Params) -> Result<[f64; 3]> {
    let (se, sx, sc) = (p.sigma_eta2, p.sigma_eta_eps, p.sigma_eps2);
    if !(se >= 0.0 && sc >= 0.0) {
        return Err(Error::InvalidParams(
            "shock variances must be non-negative".into(),
        ));
    }
    let tol = 1e-12 * se.max(sc).max(f64::MIN_POSITIVE);
    if se * sc - sx * sx < -tol * se.max(sc) {
        return Err(Error::InvalidParams(
            "shock covariance is not positive semidefinite".into(),
        ));
    }
    let l11 = se.sqrt();
    let l21 = if l11 > 0.0 { sx / l11 } else { 0.0 };
    if l11 == 0.0 && sx != 0.0 {
        return Err(Error::InvalidParams(
            "shock covariance is not positive semidefinite".into(),
        ));
    }
    Ok([l11, l21, (sc - l21 * l21).max(0.0).sqrt()])
}

fn check_params(params: &Params, spec: &ModelSpec) -> Result<[f64; 3]> {
    if params.phi.len() != spec.p {
        return Err(Error::InvalidParams(format!(
            "phi has {} entries, model order is {}",
            params.phi.len(),
            spec.p
        )));
    }
    if params.mu_break.is_some() != spec.has_break() {
        return Err(Error::InvalidParams(
            "mu_break must be present exactly when the model has a trend break".into(),
        ));
    }
    if !(params.d >= 0.0 && params.d.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "d = {} must be non-negative",
            params.d
        )));
    }
    if !is_stable(&params.phi, params.d) {
        return Err(Error::InvalidParams(
            "cycle polynomial is not stable".into(),
        ));
    }
    shock_factor(params)
}

/// Simulates `n` observations with `seed` (stream 0).
pub fn simulate(params: &Params, spec: &ModelSpec, n: usize, seed: u64) -> Result<SimPath> {
    simulate_stream(params, spec, n, seed, 0)
}

/// Simulates `n` observations from stream `stream` of the generator seeded
/// with `seed`. Pre-sample values are zero; the cycle follows the full
/// AR(n-1) recursion of `phi(L_d)`.
pub fn simulate_stream(
    params: &Params,
    spec: &ModelSpec,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<SimPath> {
    if n == 0 {
        return Err(Error::InvalidInput("path length must be at least 1".into()));
    }
    let [l11, l21, l22] = check_params(params, spec)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut eta = Vec::with_capacity(n);
    let mut eps = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        eta.push(l11 * z1);
        eps.push(l21 * z1 + l22 * z2);
    }
    let x = apply_filter(&phi_int_coeffs(params.d, n)?, &eta);
    let delta = frac_ar_expand(params.d, &params.phi, (n - 1).max(spec.p))?;
    let mut c = vec![0.0; n];
    for t in 0..n {
        let mut s = eps[t];
        for j in 1..=t {
            s -= delta[j] * c[t - j];
        }
        c[t] = s;
    }
    let spec = ModelSpec { n, ..spec.clone() };
    let y = (0..n)
        .map(|t| params.deterministic(&spec, t + 1) + x[t] + c[t])
        .collect();
    Ok(SimPath {
        y,
        x,
        c,
        eta,
        eps,
        seed,
        stream,
        params: params.clone(),
        spec,
    })
}

/// Stationary ARFIMA(0, d, 0) path with unit innovation variance, drawn
/// exactly from its autocovariances by the Durbin-Levinson recursion.
/// Requires `|d| < 0.5`.
pub fn simulate_arfima(d: f64, n: usize, seed: u64, stream: u64) -> Result<Vec<f64>> {
    if !(d.abs() < 0.5) {
        return Err(Error::InvalidInput(format!(
            "stationary ARFIMA needs |d| < 0.5, got {d}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("path length must be at least 1".into()));
    }
    use statrs::function::gamma::gamma;
    let mut acov = vec![gamma(1.0 - 2.0 * d) / gamma(1.0 - d).powi(2); n];
    for k in 1..n {
        let kf = k as f64;
        acov[k] = acov[k - 1] * (kf - 1.0 + d) / (kf - d);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut x = Vec::with_capacity(n);
    let mut coef: Vec<f64> = Vec::with_capacity(n);
    let mut var = acov[0];
    for t in 0..n {
        if t > 0 {
            // extend the order t-1 predictor to order t
            let num = acov[t]
                - coef
                    .iter()
                    .zip(acov[1..t].iter().rev())
                    .map(|(a, g)| a * g)
                    .sum::<f64>();
            let k = num / var;
            let prev = coef.clone();
            for j in 0..t - 1 {
                coef[j] = prev[j] - k * prev[t - 2 - j];
            }
            coef.push(k);
            var *= 1.0 - k * k;
        }
        let mean: f64 = coef.iter().zip(x.iter().rev()).map(|(a, v)| a * v).sum();
        let z: f64 = StandardNormal.sample(&mut rng);
        x.push(mean + var.sqrt() * z);
    }
    Ok(x)
}

/// Per-parameter accuracy of the estimates across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    /// True value when the fitted parameter exists in the simulated model.
    pub truth: Option<f64>,
    pub mean: f64,
    pub bias: Option<f64>,
    pub sd: f64,
    pub rmse: Option<f64>,
}

/// Outcome of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub reps: usize,
    pub seed: u64,
    pub n: usize,
    pub generator: String,
    pub params: Vec<ParamSummary>,
    pub failures: usize,
    pub failure_rate: f64,
    /// Estimates per replication, aligned with `params`; failed ones hold
    /// the error message.
    pub estimates: Vec<std::result::Result<Vec<f64>, String>>,
    pub logliks: Vec<Option<f64>>,
}

/// Simulates `reps` paths from `(params, dgp)` and fits `fit_spec` to each.
/// Failed fits are recorded, not fatal.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo(
    params: &Params,
    dgp: &ModelSpec,
    fit_spec: &ModelSpec,
    n: usize,
    reps: usize,
    seed: u64,
    map: &CoeffMap,
    opts: &EstimateOptions,
) -> Result<McSummary> {
    let streams: Vec<(u64, u64)> = (0..reps as u64).map(|i| (seed, i)).collect();
    monte_carlo_streams(params, dgp, fit_spec, n, &streams, map, opts)
}

/// Monte Carlo over explicit `(seed, stream)` pairs.
pub fn monte_carlo_streams(
    params: &Params,
    dgp: &ModelSpec,
    fit_spec: &ModelSpec,
    n: usize,
    streams: &[(u64, u64)],
    map: &CoeffMap,
    opts: &EstimateOptions,
) -> Result<McSummary> {
    if streams.len() < 2 {
        return Err(Error::InvalidInput(
            "Monte Carlo needs at least two replications".into(),
        ));
    }
    check_params(params, dgp)?;
    let fit_spec = ModelSpec {
        n,
        ..fit_spec.clone()
    };
    let names = param_names(&fit_spec);
    let fits: Vec<std::result::Result<(Vec<f64>, f64), String>> = streams
        .par_iter()
        .map(|&(seed, stream)| {
            let path = simulate_stream(params, dgp, n, seed, stream).map_err(|e| e.to_string())?;
            let fit = estimate(&fit_spec, &path.y, map, opts).map_err(|e| e.to_string())?;
            Ok((param_values(&fit.params, &fit_spec), fit.loglik))
        })
        .collect();
    let truth_spec = ModelSpec { n, ..dgp.clone() };
    let truth: Vec<(String, f64)> = param_names(&truth_spec)
        .into_iter()
        .zip(param_values(params, &truth_spec))
        .chain(std::iter::once(("d".to_string(), params.d)))
        .collect();
    let ok: Vec<&Vec<f64>> = fits
        .iter()
        .filter_map(|r| r.as_ref().ok().map(|v| &v.0))
        .collect();
    let failures = streams.len() - ok.len();
    let summaries = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let vals: Vec<f64> = ok.iter().map(|v| v[i]).collect();
            let m = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / m;
            let sd = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)).sqrt()
            } else {
                f64::NAN
            };
            let truth = truth.iter().find(|(k, _)| k == name).map(|(_, v)| *v);
            let rmse =
                truth.map(|t| (vals.iter().map(|v| (v - t) * (v - t)).sum::<f64>() / m).sqrt());
            ParamSummary {
                name: name.clone(),
                truth,
                mean,
                bias: truth.map(|t| mean - t),
                sd,
                rmse,
            }
        })
        .collect();
    Ok(McSummary {
        reps: streams.len(),
        seed: streams[0].0,
        n,
        generator: GENERATOR.into(),
        params: summaries,
        failures,
        failure_rate: failures as f64 / streams.len() as f64,
        logliks: fits.iter().map(|r| r.as_ref().ok().map(|v| v.1)).collect(),
        estimates: fits.into_iter().map(|r| r.map(|v| v.0)).collect(),
    })
}
