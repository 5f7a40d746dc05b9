use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssmodel::{Block, BlockForm, CovCache, StateSpace};

/// One-step prediction errors and filtered components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutput {
    pub v: Vec<f64>,
    pub f: Vec<f64>,
    /// Filtered stochastic state `(x-block, c-block)` at each `t`.
    pub states: Vec<Vec<f64>>,
    pub loglik: f64,
    /// Filtered trend including the deterministic part.
    pub trend: Vec<f64>,
    /// Filtered cycle.
    pub cycle: Vec<f64>,
    /// Trend correction formed at each `t` (zero for the plain filter).
    pub correction_x: Vec<f64>,
    /// Cycle correction formed at each `t` (zero for the plain filter).
    pub correction_c: Vec<f64>,
}

/// `-0.5 sum (ln 2 pi + ln F_t + v_t^2 / F_t)`.
pub fn gaussian_loglik(v: &[f64], f: &[f64]) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    -0.5 * v
        .iter()
        .zip(f)
        .map(|(v, f)| ln2pi + f.ln() + v * v / f)
        .sum::<f64>()
}

/// Left-multiplies the rows `off..off + block.dim()` of the row-major `k x k`
/// matrix `m` by the block's transition.
fn block_rows(block: &Block, m: &[f64], out: &mut [f64], off: usize, k: usize) {
    let kb = block.dim();
    let row = |i: usize| &m[(off + i) * k..(off + i + 1) * k];
    match block.form {
        BlockForm::Harvey => {
            let r0 = row(0);
            for i in 0..kb {
                let a = block.coeffs[i];
                let dst = &mut out[(off + i) * k..(off + i + 1) * k];
                if i + 1 < kb {
                    let next = row(i + 1);
                    for ((o, x0), xn) in dst.iter_mut().zip(r0).zip(next) {
                        *o = a * x0 + xn;
                    }
                } else {
                    for (o, x0) in dst.iter_mut().zip(r0) {
                        *o = a * x0;
                    }
                }
            }
        }
        BlockForm::Companion => {
            let mut first = vec![0.0; k];
            for (i, &a) in block.coeffs.iter().enumerate() {
                if a != 0.0 {
                    for (o, x) in first.iter_mut().zip(row(i)) {
                        *o += a * x;
                    }
                }
            }
            for i in 1..kb {
                let src = (off + i - 1) * k;
                let dst = (off + i) * k;
                out[dst..dst + k].copy_from_slice(&m[src..src + k]);
            }
            out[off * k..(off + 1) * k].copy_from_slice(&first);
        }
    }
}

/// Structured form of `T` acting on the stochastic state.
struct Dynamics<'a> {
    x: &'a Block,
    c: &'a Block,
    k: usize,
}

impl Dynamics<'_> {
    fn apply(&self, a: &[f64], out: &mut [f64]) {
        let kx = self.x.dim();
        self.x.apply(&a[..kx], &mut out[..kx]);
        self.c.apply(&a[kx..], &mut out[kx..]);
    }

    /// `T m` for a row-major `k x k` matrix `m`.
    fn left(&self, m: &[f64], out: &mut [f64]) {
        block_rows(self.x, m, out, 0, self.k);
        block_rows(self.c, m, out, self.x.dim(), self.k);
    }

    /// `p <- T p T'` for symmetric `p`, using `scratch` of the same size.
    fn sandwich(&self, p: &mut [f64], scratch: &mut [f64]) {
        let k = self.k;
        self.left(p, scratch);
        transpose_into(scratch, p, k);
        self.left(p, scratch);
        p.copy_from_slice(scratch);
    }
}

fn transpose_into(src: &[f64], dst: &mut [f64], k: usize) {
    for i in 0..k {
        for j in 0..k {
            dst[j * k + i] = src[i * k + j];
        }
    }
}

/// Row-major `R Q R'` over the stochastic state.
fn shock_covariance(ss: &StateSpace) -> Vec<f64> {
    let kx = ss.x.dim();
    let k = kx + ss.c.dim();
    let mut r = vec![[0.0; 2]; k];
    for (i, v) in ss.x.loading.iter().enumerate() {
        r[i][0] = *v;
    }
    for (i, v) in ss.c.loading.iter().enumerate() {
        r[kx + i][1] = *v;
    }
    let q = ss.q;
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    s += r[i][a] * q[(a, b)] * r[j][b];
                }
            }
            out[i * k + j] = s;
        }
    }
    out
}

/// Prediction-error Kalman filter of `y` on `ss`, with the deterministic
/// block treated as known and the stochastic state started at zero with
/// first-period covariance `R Q R'`.
///
/// Runs in `O(k^2)` per period by exploiting the block structure of `T`.
pub fn kalman_filter(ss: &StateSpace, y: &[f64]) -> Result<FilterOutput> {
    let n = y.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty series".into()));
    }
    let kx = ss.x.dim();
    let k = kx + ss.c.dim();
    let dyn_ = Dynamics {
        x: &ss.x,
        c: &ss.c,
        k,
    };
    let rqr = shock_covariance(ss);
    let mut a = vec![0.0; k];
    let mut a_next = vec![0.0; k];
    let mut p = rqr.clone();
    let mut scratch = vec![0.0; k * k];
    let mut pz = vec![0.0; k];
    let mut out = FilterOutput {
        v: Vec::with_capacity(n),
        f: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        loglik: 0.0,
        trend: Vec::with_capacity(n),
        cycle: Vec::with_capacity(n),
        correction_x: vec![0.0; n],
        correction_c: vec![0.0; n],
    };
    for (i, &yt) in y.iter().enumerate() {
        let t = i + 1;
        let det = ss.mu.value(t);
        let v = yt - det - a[0] - a[kx];
        let f = p[0] + 2.0 * p[kx] + p[kx * k + kx];
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::FilterBreakdown { t, value: f });
        }
        for (r, o) in pz.iter_mut().enumerate() {
            *o = p[r * k] + p[r * k + kx];
        }
        let g = v / f;
        for (ar, pr) in a.iter_mut().zip(&pz) {
            *ar += pr * g;
        }
        for r in 0..k {
            let s = pz[r] / f;
            if s == 0.0 {
                continue;
            }
            let row = &mut p[r * k..(r + 1) * k];
            for (x, pc) in row.iter_mut().zip(&pz) {
                *x -= s * pc;
            }
        }
        out.v.push(v);
        out.f.push(f);
        out.trend.push(det + a[0]);
        out.cycle.push(a[kx]);
        out.states.push(a.clone());
        if t < n {
            dyn_.apply(&a, &mut a_next);
            std::mem::swap(&mut a, &mut a_next);
            dyn_.sandwich(&mut p, &mut scratch);
            for (x, q) in p.iter_mut().zip(&rqr) {
                *x += q;
            }
        }
    }
    out.loglik = gaussian_loglik(&out.v, &out.f);
    Ok(out)
}

/// Kalman prediction errors of several series through the same system, with
/// no deterministic part. The gains do not depend on the data, so this costs
/// one covariance recursion plus one state recursion per column.
pub fn kalman_innovations(
    ss: &StateSpace,
    columns: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = columns.first().map_or(0, Vec::len);
    if n == 0 || columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput(
            "columns must be non-empty and of equal length".into(),
        ));
    }
    let kx = ss.x.dim();
    let k = kx + ss.c.dim();
    let dyn_ = Dynamics {
        x: &ss.x,
        c: &ss.c,
        k,
    };
    let rqr = shock_covariance(ss);
    let m = columns.len();
    let mut a = vec![vec![0.0; k]; m];
    let mut a_next = vec![0.0; k];
    let mut p = rqr.clone();
    let mut scratch = vec![0.0; k * k];
    let mut pz = vec![0.0; k];
    let mut v = vec![Vec::with_capacity(n); m];
    let mut fs = Vec::with_capacity(n);
    for t in 0..n {
        let f = p[0] + 2.0 * p[kx] + p[kx * k + kx];
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::FilterBreakdown { t: t + 1, value: f });
        }
        for (r, o) in pz.iter_mut().enumerate() {
            *o = p[r * k] + p[r * k + kx];
        }
        for (c, col) in columns.iter().enumerate() {
            let ac = &mut a[c];
            let vt = col[t] - ac[0] - ac[kx];
            let g = vt / f;
            for (ar, pr) in ac.iter_mut().zip(&pz) {
                *ar += pr * g;
            }
            v[c].push(vt);
            if t + 1 < n {
                dyn_.apply(ac, &mut a_next);
                ac.copy_from_slice(&a_next);
            }
        }
        fs.push(f);
        if t + 1 < n {
            for r in 0..k {
                let s = pz[r] / f;
                if s == 0.0 {
                    continue;
                }
                let row = &mut p[r * k..(r + 1) * k];
                for (x, pc) in row.iter_mut().zip(&pz) {
                    *x -= s * pc;
                }
            }
            dyn_.sandwich(&mut p, &mut scratch);
            for (x, q) in p.iter_mut().zip(&rqr) {
                *x += q;
            }
        }
    }
    Ok((v, fs))
}

/// Filter of the truncated system whose one-step predictions carry the
/// truncation corrections, so `v_t` and `F_t` are the exact innovations and
/// their variances.
///
/// Filtered states are projections of the truncated blocks on `y_{1:t}`,
/// built from the filtered shock means of `cache`. The prediction for `t + 1`
/// is the deterministic part plus `Z T a_{t|t}` plus the two corrections,
/// and `F_{t+1} = L_{t+1,t+1}^2`.
pub fn corrected_filter(ss: &StateSpace, cache: &CovCache, y: &[f64]) -> Result<FilterOutput> {
    let n = cache.n();
    if y.len() != n {
        return Err(Error::InvalidInput(format!(
            "series has {} observations, covariances were built for {n}",
            y.len()
        )));
    }
    let kx = ss.x.dim();
    let kc = ss.c.dim();
    let k = kx + kc;
    let det: Vec<f64> = (1..=n).map(|t| ss.mu.value(t)).collect();
    let y_dm: Vec<f64> = y.iter().zip(&det).map(|(a, b)| a - b).collect();
    // Columns T^j R of each block, and the truncation gaps of its weights.
    let responses = |b: &Block| {
        let mut s = b.loading.clone();
        let mut next = vec![0.0; b.dim()];
        let mut cols = Vec::with_capacity(n);
        for _ in 0..n {
            cols.push(s.clone());
            b.apply(&s, &mut next);
            std::mem::swap(&mut s, &mut next);
        }
        cols
    };
    let mx = responses(&ss.x);
    let mc = responses(&ss.c);
    let b = ss.x.impulse_response(n + 1);
    let wt = ss.c.impulse_response(n + 1);
    let phi = &cache.wold_trend;
    let omega = &cache.wold_cycle;
    let dx: Vec<f64> = phi.iter().zip(&b).map(|(a, c)| a - c).collect();
    let dc: Vec<f64> = omega.iter().zip(&wt).map(|(a, c)| a - c).collect();

    let mut out = FilterOutput {
        v: Vec::with_capacity(n),
        f: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        loglik: 0.0,
        trend: Vec::with_capacity(n),
        cycle: Vec::with_capacity(n),
        correction_x: vec![0.0; n],
        correction_c: vec![0.0; n],
    };
    let dyn_ = Dynamics {
        x: &ss.x,
        c: &ss.c,
        k,
    };
    let mut predicted = 0.0;
    let mut ta = vec![0.0; k];
    cache.project_shocks(&y_dm, |t, e_eta, e_eps, _z, ltt| {
        out.v.push(y_dm[t - 1] - predicted);
        out.f.push(ltt * ltt);
        let mut a = vec![0.0; k];
        let mut trend = 0.0;
        let mut cycle = 0.0;
        for j in 0..t {
            let (he, hc) = (e_eta[t - 1 - j], e_eps[t - 1 - j]);
            trend += phi[j] * he;
            cycle += omega[j] * hc;
            for (ai, m) in a[..kx].iter_mut().zip(&mx[j]) {
                *ai += m * he;
            }
            for (ai, m) in a[kx..].iter_mut().zip(&mc[j]) {
                *ai += m * hc;
            }
        }
        let (mut cx, mut cc) = (0.0, 0.0);
        for j in 1..=t {
            cx += dx[j] * e_eta[t - j];
            cc += dc[j] * e_eps[t - j];
        }
        out.correction_x[t - 1] = cx;
        out.correction_c[t - 1] = cc;
        dyn_.apply(&a, &mut ta);
        predicted = ta[0] + ta[kx] + cx + cc;
        out.trend.push(det[t - 1] + trend);
        out.cycle.push(cycle);
        out.states.push(a);
    })?;
    if let Some((i, &f)) = out.f.iter().enumerate().find(|(_, f)| !(**f > 0.0)) {
        return Err(Error::FilterBreakdown { t: i + 1, value: f });
    }
    out.loglik = gaussian_loglik(&out.v, &out.f);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::frac_ar_expand;
    use crate::ssmodel::{
        build_exact_state_space, structural_covariances, ModelSpec, MuBlock, Params,
    };
    use nalgebra::{DMatrix, DVector, Matrix2};

    fn no_mu() -> MuBlock {
        MuBlock {
            mu0: 0.0,
            mu1: 0.0,
            mu_break: None,
            break_at: None,
        }
    }

    fn rw_ar(phi: &[f64], q: Matrix2<f64>, mu: MuBlock) -> StateSpace {
        let mut loading = vec![0.0; phi.len().max(1)];
        loading[0] = 1.0;
        let mut coeffs = phi.to_vec();
        coeffs.resize(loading.len(), 0.0);
        StateSpace {
            mu,
            x: Block {
                form: BlockForm::Harvey,
                coeffs: vec![1.0],
                loading: vec![1.0],
            },
            c: Block {
                form: BlockForm::Companion,
                coeffs,
                loading,
            },
            q,
        }
    }

    /// Textbook dense filter on the full state including the deterministic
    /// block, which starts known.
    fn dense_filter(ss: &StateSpace, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z = ss.observation();
        let r = ss.selection();
        let q = DMatrix::from_column_slice(2, 2, ss.q.as_slice());
        let rqr = &r * q * r.transpose();
        let mut a = ss.transition(1) * ss.initial_state();
        let mut p = rqr.clone();
        let (mut vs, mut fs) = (vec![], vec![]);
        for (i, yt) in y.iter().enumerate() {
            let v = yt - z.dot(&a);
            let pz: DVector<f64> = &p * &z;
            let f = z.dot(&pz);
            a += &pz * (v / f);
            p -= &pz * pz.transpose() / f;
            let t = ss.transition(i + 2);
            a = &t * a;
            p = &t * p * t.transpose() + &rqr;
            vs.push(v);
            fs.push(f);
        }
        (vs, fs)
    }

    fn series(n: usize) -> Vec<f64> {
        (0..n)
            .map(|t| 0.05 * t as f64 + (t as f64 * 0.9).sin() + 0.3 * (t as f64 * 2.3).cos())
            .collect()
    }

    #[test]
    fn local_level_matches_textbook_recursion() {
        let (se, sc) = (0.4, 1.7);
        let ss = rw_ar(&[0.0], Matrix2::new(se, 0.0, 0.0, sc), no_mu());
        let y = series(40);
        let out = kalman_filter(&ss, &y).unwrap();
        let (mut a, mut p) = (0.0, se);
        let mut ll = 0.0;
        for (t, yt) in y.iter().enumerate() {
            let v = yt - a;
            let f = p + sc;
            assert!((out.v[t] - v).abs() < 1e-12);
            assert!((out.f[t] - f).abs() < 1e-12);
            ll += -0.5 * ((2.0 * std::f64::consts::PI).ln() + f.ln() + v * v / f);
            a += p / f * v;
            p = p * (1.0 - p / f) + se;
        }
        assert!((out.loglik - ll).abs() < 1e-12);
    }

    #[test]
    fn structured_recursion_matches_dense_filter() {
        let q = Matrix2::new(0.7, -0.4, -0.4, 1.1);
        let mu = MuBlock {
            mu0: 1.5,
            mu1: 0.2,
            mu_break: Some(-0.1),
            break_at: Some(12),
        };
        let mut ss = rw_ar(&[0.9, -0.3, 0.1], q, mu);
        ss.x = Block {
            form: BlockForm::Harvey,
            coeffs: vec![1.6, -0.7, 0.05],
            loading: vec![1.0, 0.4, -0.2],
        };
        let y = series(30);
        let out = kalman_filter(&ss, &y).unwrap();
        let (v, f) = dense_filter(&ss, &y);
        for t in 0..30 {
            assert!((out.v[t] - v[t]).abs() < 1e-10, "t = {t}");
            assert!((out.f[t] - f[t]).abs() < 1e-10 * f[t], "t = {t}");
        }
    }

    #[test]
    fn innovations_share_the_filter_gains() {
        let ss = rw_ar(&[0.5, 0.2], Matrix2::new(1.0, 0.3, 0.3, 0.5), no_mu());
        let y = series(25);
        let other: Vec<f64> = (0..25).map(|t| t as f64).collect();
        let (v, f) = kalman_innovations(&ss, &[y.clone(), other.clone()]).unwrap();
        let a = kalman_filter(&ss, &y).unwrap();
        let b = kalman_filter(&ss, &other).unwrap();
        for t in 0..25 {
            assert!((v[0][t] - a.v[t]).abs() < 1e-12);
            assert!((v[1][t] - b.v[t]).abs() < 1e-12);
            assert!((f[t] - a.f[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn breakdown_is_reported() {
        let ss = rw_ar(&[0.0], Matrix2::zeros(), no_mu());
        assert!(matches!(
            kalman_filter(&ss, &[1.0, 2.0]),
            Err(Error::FilterBreakdown { t: 1, .. })
        ));
    }

    fn fractional_case() -> (Params, ModelSpec, StateSpace, Vec<f64>) {
        let p = Params {
            d: 1.3,
            phi: vec![0.6],
            sigma_eta2: 0.5,
            sigma_eta_eps: -0.35,
            sigma_eps2: 0.9,
            mu0: 2.0,
            mu1: 0.1,
            mu_break: None,
        };
        let spec = ModelSpec::fractional(1, 35).with_truncation(3);
        let delta = frac_ar_expand(p.d, &p.phi, 3).unwrap();
        let ss = StateSpace {
            mu: MuBlock {
                mu0: p.mu0,
                mu1: p.mu1,
                mu_break: None,
                break_at: None,
            },
            x: Block {
                form: BlockForm::Harvey,
                coeffs: vec![1.2, 0.1],
                loading: vec![1.0, 0.5],
            },
            c: Block {
                form: BlockForm::Companion,
                coeffs: delta[1..].iter().map(|v| -v).collect(),
                loading: vec![1.0, 0.0, 0.0],
            },
            q: p.q(),
        };
        (p, spec, ss, series(35))
    }

    #[test]
    fn corrected_filter_is_exact() {
        let (p, spec, ss, y) = fractional_case();
        let cache = structural_covariances(&p, &spec).unwrap();
        let out = corrected_filter(&ss, &cache, &y).unwrap();
        let big = kalman_filter(&build_exact_state_space(&p, &spec).unwrap(), &y).unwrap();
        let chol = cache.loglik(&p.demean(&spec, &y)).unwrap();
        assert!((out.loglik - chol).abs() < 1e-9);
        assert!((out.loglik - big.loglik).abs() < 1e-7);
        for t in 0..35 {
            assert!((out.v[t] - big.v[t]).abs() < 1e-7 * (1.0 + big.v[t].abs()));
            assert!((out.trend[t] - big.trend[t]).abs() < 1e-7 * (1.0 + big.trend[t].abs()));
        }
    }

    #[test]
    fn filtered_components_add_up_to_the_data() {
        let (p, spec, ss, y) = fractional_case();
        let cache = structural_covariances(&p, &spec).unwrap();
        let out = corrected_filter(&ss, &cache, &y).unwrap();
        for ((x, c), y) in out.trend.iter().zip(&out.cycle).zip(&y) {
            assert!((x + c - y).abs() < 1e-9);
        }
    }

    #[test]
    fn corrected_filter_ignores_the_future() {
        let (p, spec, ss, y) = fractional_case();
        let cache = structural_covariances(&p, &spec).unwrap();
        let a = corrected_filter(&ss, &cache, &y).unwrap();
        let mut y2 = y.clone();
        y2[20] += 3.0;
        let b = corrected_filter(&ss, &cache, &y2).unwrap();
        for t in 0..20 {
            assert_eq!(a.trend[t], b.trend[t]);
            assert_eq!(a.v[t], b.v[t]);
        }
    }
}
