//! Numerical optimizers: adaptive Nelder-Mead for likelihoods and a small
//! Levenberg-Marquardt solver for least-squares fits.
//!
//! Nelder-Mead uses the Gao & Han coefficients. Non-finite objective values
//! are treated as `+inf`, so callers can signal infeasible points by
//! returning `f64::INFINITY` or NaN.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when `f_worst - f_best <= f_rel_tol * |f_best| + f_abs_tol`.
    pub f_rel_tol: f64,
    pub f_abs_tol: f64,
    /// Stop when every vertex lies within `x_tol` of the best (0 disables).
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            f_rel_tol: 1e-8,
            f_abs_tol: 1e-12,
            x_tol: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimizes `f` from `x0`, building the initial simplex by moving each
/// coordinate `i` by `steps[i]`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(steps.len(), n, "one step per coordinate");
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };

    if n == 0 {
        let v = eval(x0, &mut evals);
        return Minimum {
            x: Vec::new(),
            f: v,
            iterations: 0,
            evaluations: evals,
            converged: true,
        };
    }

    let nf = n as f64;
    let alpha = 1.0;
    let beta = 1.0 + 2.0 / nf;
    let gamma = 0.75 - 1.0 / (2.0 * nf);
    let delta = 1.0 - 1.0 / nf;

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if steps[i] != 0.0 { steps[i] } else { 0.05 };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];

    while iterations < opts.max_iter {
        // order vertices by objective value
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[n];
        if best.is_finite() && worst.is_finite() {
            let f_ok = worst - best <= opts.f_rel_tol * best.abs() + opts.f_abs_tol;
            let x_ok = opts.x_tol <= 0.0
                || simplex[1..].iter().all(|v| {
                    v.iter()
                        .zip(&simplex[0])
                        .all(|(a, b)| (a - b).abs() <= opts.x_tol)
                });
            if f_ok && x_ok {
                converged = true;
                break;
            }
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }

        for i in 0..n {
            trial[i] = centroid[i] + alpha * (centroid[i] - simplex[n][i]);
        }
        let f_r = eval(&trial, &mut evals);

        if f_r < values[0] {
            for i in 0..n {
                trial2[i] = centroid[i] + beta * (trial[i] - centroid[i]);
            }
            let f_e = eval(&trial2, &mut evals);
            if f_e < f_r {
                simplex[n].copy_from_slice(&trial2);
                values[n] = f_e;
            } else {
                simplex[n].copy_from_slice(&trial);
                values[n] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            simplex[n].copy_from_slice(&trial);
            values[n] = f_r;
            continue;
        }

        let outside = f_r < values[n];
        for i in 0..n {
            trial2[i] = if outside {
                centroid[i] + gamma * (trial[i] - centroid[i])
            } else {
                centroid[i] - gamma * (centroid[i] - simplex[n][i])
            };
        }
        let f_c = eval(&trial2, &mut evals);
        let accept = if outside { f_c <= f_r } else { f_c < values[n] };
        if accept {
            simplex[n].copy_from_slice(&trial2);
            values[n] = f_c;
            continue;
        }

        // shrink toward the best vertex
        let (best, rest) = simplex.split_at_mut(1);
        for (vertex, value) in rest.iter_mut().zip(values.iter_mut().skip(1)) {
            for (x, b) in vertex.iter_mut().zip(&best[0]) {
                *x = b + delta * (*x - b);
            }
            *value = eval(vertex, &mut evals);
        }
    }

    let (best_idx, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty simplex");
    Minimum {
        x: simplex[best_idx].clone(),
        f: values[best_idx],
        iterations,
        evaluations: evals,
        converged,
    }
}

/// Repeats [`nelder_mead`] from the incumbent with a fresh simplex until a
/// restart no longer improves the objective by more than the relative
/// tolerance, or `max_restarts` is exhausted.
pub fn nelder_mead_restarts<F>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    opts: &NelderMeadOptions,
    max_restarts: usize,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut best = nelder_mead(&mut f, x0, steps, opts);
    let mut iterations = best.iterations;
    let mut evaluations = best.evaluations;
    for _ in 0..max_restarts {
        let next = nelder_mead(&mut f, &best.x, steps, opts);
        iterations += next.iterations;
        evaluations += next.evaluations;
        let gain = best.f - next.f;
        let improved = next.f < best.f;
        let converged = next.converged;
        if improved {
            best = next;
        }
        if !improved || gain <= opts.f_rel_tol * best.f.abs() + opts.f_abs_tol {
            best.converged = converged;
            break;
        }
    }
    best.iterations = iterations;
    best.evaluations = evaluations;
    best
}

#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub x: Vec<f64>,
    /// Sum of squared residuals at `x`.
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Levenberg-Marquardt with a forward-difference Jacobian and Marquardt
/// column scaling. `resid(x, r)` fills the `m` residuals and returns false
/// when `x` is infeasible. Stops when an accepted step improves the sum of
/// squares by at most `rel_tol` relatively, or when no damped step improves.
pub fn levenberg_marquardt<F>(
    mut resid: F,
    x0: &[f64],
    m: usize,
    max_iter: usize,
    rel_tol: f64,
) -> LeastSquaresFit
where
    F: FnMut(&[f64], &mut [f64]) -> bool,
{
    use nalgebra::{DMatrix, DVector};

    let p = x0.len();
    let mut r = vec![0.0; m];
    let mut sse_at = |x: &[f64], r: &mut [f64]| -> f64 {
        if !resid(x, r) {
            return f64::INFINITY;
        }
        let s: f64 = r.iter().map(|v| v * v).sum();
        if s.is_finite() {
            s
        } else {
            f64::INFINITY
        }
    };
    let mut x = x0.to_vec();
    let mut f = sse_at(&x, &mut r);
    if p == 0 || !f.is_finite() || f == 0.0 {
        return LeastSquaresFit {
            x,
            sse: f,
            iterations: 0,
            converged: f.is_finite(),
        };
    }
    let mut lambda: f64 = 1e-3;
    let mut jac = DMatrix::<f64>::zeros(m, p);
    let mut rp = vec![0.0; m];
    let mut trial_r = vec![0.0; m];
    for it in 0..max_iter {
        let mut xp = x.clone();
        for c in 0..p {
            let h = 1e-7 * x[c].abs().max(1.0);
            xp[c] = x[c] + h;
            let ok = sse_at(&xp, &mut rp).is_finite();
            xp[c] = x[c];
            for i in 0..m {
                jac[(i, c)] = if ok { (rp[i] - r[i]) / h } else { 0.0 };
            }
        }
        let col_norms: Vec<f64> = (0..p).map(|c| jac.column(c).norm().max(1e-300)).collect();
        let mut accepted = false;
        while lambda < 1e14 {
            let mut aug = DMatrix::<f64>::zeros(m + p, p);
            aug.rows_mut(0, m).copy_from(&jac);
            for c in 0..p {
                aug[(m + c, c)] = lambda.sqrt() * col_norms[c];
            }
            let mut rhs = DVector::<f64>::zeros(m + p);
            for i in 0..m {
                rhs[i] = -r[i];
            }
            let Ok(step) = aug.svd(true, true).solve(&rhs, 1e-15) else {
                break;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
            let ft = sse_at(&trial, &mut trial_r);
            if ft < f {
                let gain = (f - ft) / f;
                x = trial;
                f = ft;
                std::mem::swap(&mut r, &mut trial_r);
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                if gain <= rel_tol || f == 0.0 {
                    return LeastSquaresFit {
                        x,
                        sse: f,
                        iterations: it + 1,
                        converged: true,
                    };
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no damped step improves: a stationary point up to rounding
            return LeastSquaresFit {
                x,
                sse: f,
                iterations: it + 1,
                converged: true,
            };
        }
    }
    LeastSquaresFit {
        x,
        sse: f,
        iterations: max_iter,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let opts = NelderMeadOptions {
            max_iter: 5000,
            f_rel_tol: 1e-14,
            f_abs_tol: 1e-20,
            x_tol: 0.0,
        };
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], &[0.1, 0.1], &opts);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn quadratic_in_six_dimensions() {
        let f = |x: &[f64]| {
            x.iter()
                .enumerate()
                .map(|(i, v)| (i as f64 + 1.0) * (v - i as f64).powi(2))
                .sum::<f64>()
        };
        let opts = NelderMeadOptions {
            max_iter: 20000,
            f_rel_tol: 1e-16,
            f_abs_tol: 1e-20,
            x_tol: 0.0,
        };
        let m = nelder_mead_restarts(f, &[0.0; 6], &[0.5; 6], &opts, 5);
        for (i, v) in m.x.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-5, "{i}: {v}");
        }
    }

    #[test]
    fn infeasible_region_is_avoided() {
        let f = |x: &[f64]| {
            if x[0] < 0.5 {
                f64::NAN
            } else {
                (x[0] - 0.2).powi(2)
            }
        };
        let m = nelder_mead(f, &[2.0], &[0.3], &NelderMeadOptions::default());
        assert!(m.x[0] >= 0.5 && (m.x[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn least_squares_recovers_exponential_decay() {
        let ts: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.5 * (-0.7 * t).exp()).collect();
        let fit = levenberg_marquardt(
            |p, r| {
                for ((ri, t), y) in r.iter_mut().zip(&ts).zip(&ys) {
                    *ri = p[0] * (-p[1] * t).exp() - y;
                }
                true
            },
            &[1.0, 0.1],
            ts.len(),
            200,
            1e-14,
        );
        assert!(fit.converged);
        assert!((fit.x[0] - 2.5).abs() < 1e-6 && (fit.x[1] - 0.7).abs() < 1e-6);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let opts = NelderMeadOptions {
            max_iter: 3,
            f_rel_tol: 1e-30,
            f_abs_tol: 0.0,
            x_tol: 0.0,
        };
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], &[0.1, 0.1], &opts);
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
    }
}
