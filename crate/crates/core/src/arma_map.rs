//! ARMA(v, w) approximations of the fractional integration filter and a
//! spline map from `d` to the approximating coefficients.
//!
//! The AR polynomial is `a(L) = 1 - a_1 L - ... - a_v L^v` and the MA
//! polynomial `m(L) = 1 + m_1 L + ... + m_w L^w`, so the Wold weights obey
//! `b_j = sum_i a_i b_{j-i} + m_j`.
//!
//! Fits search over the AR polynomial in factored form, as quadratic factors
//! `1 - s L + p L^2` followed by one linear factor `1 - r L` when `v` is odd.
//! Good approximations cluster several roots near one, where raw
//! coefficients are badly conditioned. Given the AR part the Wold weights are
//! linear in the MA coefficients, which are projected out by least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::{phi_int_coeffs, CoeffSeq};
use crate::optim::{levenberg_marquardt, nelder_mead_restarts, NelderMeadOptions};
use crate::spline::NaturalSpline;

/// Coefficients of an ARMA filter, without the unit lag-0 terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaCoeffs {
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
}

/// A fitted ARMA approximation of `(1 - L)^{-d}` over a horizon `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaApprox {
    pub d: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// Mean squared difference between the fractional and ARMA Wold weights
    /// over lags `0..n`.
    pub fit_mse: f64,
    pub n: usize,
    /// Factored AR parameters the fit was found at; used for warm starts.
    #[serde(default)]
    pub ar_factors: Vec<f64>,
}

impl ArmaApprox {
    pub fn coeffs(&self) -> ArmaCoeffs {
        ArmaCoeffs {
            ar: self.ar.clone(),
            ma: self.ma.clone(),
        }
    }
}

/// First `n` Wold weights of `a(L)^{-1} m(L)`.
pub fn arma_wold(ar: &[f64], ma: &[f64], n: usize) -> CoeffSeq {
    let mut b = vec![0.0; n.max(1)];
    wold_into(ar, ma, &mut b);
    CoeffSeq::new(b).unwrap_or_else(|_| CoeffSeq::impulse(n))
}

fn wold_into(ar: &[f64], ma: &[f64], b: &mut [f64]) {
    for j in 0..b.len() {
        let mut s = if j == 0 {
            1.0
        } else if j <= ma.len() {
            ma[j - 1]
        } else {
            0.0
        };
        for (i, &a) in ar.iter().enumerate().take(j) {
            s += a * b[j - 1 - i];
        }
        b[j] = s;
    }
}

fn mse(target: &[f64], b: &[f64]) -> f64 {
    let s: f64 = target.iter().zip(b).map(|(t, x)| (t - x) * (t - x)).sum();
    s / target.len() as f64
}

/// AR coefficients (`1 - a_1 L - ...` convention) of the factored polynomial.
pub(crate) fn ar_from_factors(theta: &[f64]) -> Vec<f64> {
    let mut poly = vec![1.0];
    let mut mul = |f: &[f64]| {
        let mut next = vec![0.0; poly.len() + f.len() - 1];
        for (i, a) in poly.iter().enumerate() {
            for (k, b) in f.iter().enumerate() {
                next[i + k] += a * b;
            }
        }
        poly = next;
    };
    for pair in theta.chunks(2) {
        match *pair {
            [s, p] => mul(&[1.0, -s, p]),
            [r] => mul(&[1.0, -r]),
            _ => unreachable!(),
        }
    }
    poly[1..].iter().map(|c| -c).collect()
}

/// Orders the quadratic factors by decreasing `s` so that neighbouring fits
/// list the same factors in the same slots.
fn canonical_factors(theta: &[f64]) -> Vec<f64> {
    let mut pairs: Vec<[f64; 2]> = theta.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    pairs.sort_by(|a, b| b[0].total_cmp(&a[0]).then(b[1].total_cmp(&a[1])));
    let mut out: Vec<f64> = pairs.into_iter().flatten().collect();
    if theta.len() % 2 == 1 {
        out.push(theta[theta.len() - 1]);
    }
    out
}

/// Factored form of `(1 - L)^k` padded to `v` parameters.
fn unit_root_factors(k: usize, v: usize) -> Vec<f64> {
    let mut theta = Vec::with_capacity(v);
    for _ in 0..k / 2 {
        theta.extend([2.0, 1.0]);
    }
    if k % 2 == 1 {
        theta.extend([1.0, 0.0]);
    }
    theta.truncate(v);
    theta.resize(v, 0.0);
    theta
}

/// A generic start with roots spread toward one.
fn spread_factors(v: usize) -> Vec<f64> {
    let mut theta = Vec::with_capacity(v);
    for i in 0..v / 2 {
        let r = 0.95 - 0.25 * i as f64;
        theta.extend([2.0 * r, r * r]);
    }
    if v % 2 == 1 {
        theta.push(0.5);
    }
    theta
}

/// Fitting budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitBudget {
    /// Levenberg-Marquardt iteration cap and relative-gain stop.
    pub lm_iter: usize,
    pub lm_rel_tol: f64,
    /// Simplex fallback for starts whose least-squares search stalls.
    pub simplex_iter: usize,
    pub simplex_restarts: usize,
}

impl Default for FitBudget {
    fn default() -> Self {
        Self {
            lm_iter: 2000,
            lm_rel_tol: 1e-12,
            simplex_iter: 4000,
            simplex_restarts: 3,
        }
    }
}

struct Projection<'a> {
    target: &'a [f64],
    v: usize,
    w: usize,
    h: Vec<f64>,
}

impl<'a> Projection<'a> {
    fn new(target: &'a [f64], v: usize, w: usize) -> Self {
        Self {
            target,
            v,
            w,
            h: vec![0.0; target.len()],
        }
    }

    /// Least-squares MA part for the AR factors `theta`; writes the Wold
    /// residuals into `r`. Returns None when the AR response overflows or
    /// the projection is singular.
    fn solve(&mut self, theta: &[f64], r: &mut [f64]) -> Option<Vec<f64>> {
        let n = self.target.len();
        let ar = ar_from_factors(theta);
        wold_into(&ar, &[], &mut self.h);
        if self.h.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let h = &self.h;
        let ma: Vec<f64> = if self.w == 0 {
            Vec::new()
        } else {
            let w = self.w;
            let x = DMatrix::from_fn(n, w, |j, k| if j > k { h[j - k - 1] } else { 0.0 });
            let rhs = DVector::from_fn(n, |j, _| self.target[j] - h[j]);
            let sol = x.svd(true, true).solve(&rhs, 1e-14).ok()?;
            sol.iter().copied().collect()
        };
        for j in 0..n {
            let mut b = h[j];
            for (k, m) in ma.iter().enumerate().take(j) {
                b += m * h[j - k - 1];
            }
            r[j] = b - self.target[j];
        }
        debug_assert_eq!(theta.len(), self.v);
        Some(ma)
    }
}

/// Fits an ARMA(v, w) approximation to `(1 - L)^{-d}` with the default
/// budget. Starts are integer unit-root seeds, the zero-padded lower-order
/// fit and a generic spread of roots near one.
pub fn fit_arma_approx(d: f64, v: usize, w: usize, n: usize) -> Result<ArmaApprox> {
    fit_arma_approx_from(d, v, w, n, &[], &FitBudget::default())
}

/// Like [`fit_arma_approx`] with additional warm starts given as factored AR
/// parameters (see [`ArmaApprox::ar_factors`]).
pub fn fit_arma_approx_from(
    d: f64,
    v: usize,
    w: usize,
    n: usize,
    warm: &[Vec<f64>],
    budget: &FitBudget,
) -> Result<ArmaApprox> {
    fit_impl(d, v, w, n, warm, budget, true)
}

/// Integer seeds, the zero-padded lower-order fit and a generic spread.
fn default_starts(d: f64, v: usize, w: usize, n: usize, budget: &FitBudget) -> Vec<Vec<f64>> {
    let mut starts = Vec::new();
    // Integer orders have exact representations when they fit in the AR part.
    for k in [d.ceil() as usize, d.floor() as usize] {
        if k <= v {
            starts.push(unit_root_factors(k, v));
        }
    }
    // The best lower-order fit, padded with zeros, bounds the attainable
    // error from above, so richer families are never worse.
    let lower = match (v, w) {
        (v, w) if v > 1 && w > 1 => Some((v - 1, w - 1)),
        (v, w) if v > 1 && v > w => Some((v - 1, w)),
        (v, w) if w > 1 => Some((v, w - 1)),
        _ => None,
    };
    if let Some((lv, lw)) = lower {
        if let Ok(f) = fit_impl(d, lv, lw, n, &[], budget, true) {
            let mut s = f.ar_factors.clone();
            s.resize(v, 0.0);
            starts.push(s);
        }
    }
    starts.push(spread_factors(v));
    starts
}

/// `default_starts_too = false` restricts the search to the warm starts. Maps use
/// this at integer `d`, where the exact unit-root representation is isolated
/// from the branch the neighbouring knots lie on.
fn fit_impl(
    d: f64,
    v: usize,
    w: usize,
    n: usize,
    warm: &[Vec<f64>],
    budget: &FitBudget,
    default_starts_too: bool,
) -> Result<ArmaApprox> {
    if !d.is_finite() || d < 0.0 {
        return Err(Error::InvalidInput(format!(
            "d = {d} must be finite and >= 0"
        )));
    }
    if n < v + w + 1 {
        return Err(Error::InvalidInput(format!(
            "horizon {n} too short for ARMA({v}, {w})"
        )));
    }
    let target = phi_int_coeffs(d, n)?;
    let mut proj = Projection::new(&target, v, w);
    let mut r = vec![0.0; n];

    let mut starts: Vec<Vec<f64>> = warm.iter().filter(|s| s.len() == v).cloned().collect();
    if default_starts_too {
        starts.extend(default_starts(d, v, w, n, budget));
    }
    let mut unique: Vec<Vec<f64>> = Vec::with_capacity(starts.len());
    for s in starts {
        if !unique.contains(&s) {
            unique.push(s);
        }
    }

    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut consider = |theta: Vec<f64>, sse: f64, converged: bool| {
        if best.as_ref().is_none_or(|b| sse < b.1) {
            best = Some((theta, sse, converged));
        }
    };
    for s in &unique {
        let Some(_) = proj.solve(s, &mut r) else {
            continue;
        };
        let sse0: f64 = r.iter().map(|x| x * x).sum();
        if sse0 == 0.0 {
            consider(s.clone(), 0.0, true);
            break;
        }
        let lm = levenberg_marquardt(
            |th, res| proj.solve(th, res).is_some(),
            s,
            n,
            budget.lm_iter,
            budget.lm_rel_tol,
        );
        if lm.converged {
            consider(lm.x, lm.sse, true);
            continue;
        }
        // fall back to a simplex search from the stalled point
        let opts = NelderMeadOptions {
            max_iter: budget.simplex_iter,
            f_rel_tol: 1e-10,
            f_abs_tol: 1e-14 * sse0,
            x_tol: 0.0,
        };
        let steps: Vec<f64> = lm.x.iter().map(|x| 0.05 * x.abs().max(0.2)).collect();
        let nm = nelder_mead_restarts(
            |th: &[f64]| match proj.solve(th, &mut r) {
                Some(_) => r.iter().map(|x| x * x).sum(),
                None => f64::INFINITY,
            },
            &lm.x,
            &steps,
            &opts,
            budget.simplex_restarts,
        );
        let again = levenberg_marquardt(
            |th, res| proj.solve(th, res).is_some(),
            &nm.x,
            n,
            budget.lm_iter,
            budget.lm_rel_tol,
        );
        consider(again.x, again.sse, again.converged || nm.converged);
    }

    let Some((theta, sse, converged)) = best else {
        return Err(Error::NoConvergence {
            best_point: Vec::new(),
            best_value: f64::INFINITY,
        });
    };
    let ma = match proj.solve(&theta, &mut r) {
        Some(ma) => ma,
        None => {
            return Err(Error::NoConvergence {
                best_point: theta,
                best_value: sse / n as f64,
            })
        }
    };
    let theta = canonical_factors(&theta);
    let ar = ar_from_factors(&theta);
    let mut b = vec![0.0; n];
    wold_into(&ar, &ma, &mut b);
    let fit_mse = mse(&target, &b);
    if !converged || !fit_mse.is_finite() {
        return Err(Error::NoConvergence {
            best_point: [ar, ma].concat(),
            best_value: fit_mse,
        });
    }
    Ok(ArmaApprox {
        d,
        ar,
        ma,
        fit_mse,
        n,
        ar_factors: theta,
    })
}

/// Default grid `0.50, 0.55, ..., 2.50`.
pub fn default_grid() -> Vec<f64> {
    (0..=40).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

pub const COEFF_MAP_VERSION: u32 = 2;

/// A fresh multi-start fit replaces the continued branch only when it cuts the
/// error by at least this factor.
const BRANCH_SWITCH_GAIN: f64 = 0.1;

/// Fits this close relative to the mean squared fractional weight are exact
/// up to rounding.
const EXACT_REL_MSE: f64 = 1e-12;

fn weight_scale(d: f64, n: usize) -> Result<f64> {
    Ok(phi_int_coeffs(d, n)?.iter().map(|x| x * x).sum::<f64>() / n as f64)
}

/// Knots on one continuous branch of fits, with splines of the factored AR
/// parameters across them.
#[derive(Debug, Clone)]
struct Segment {
    knots: Vec<ArmaApprox>,
    splines: Vec<NaturalSpline>,
}

impl Segment {
    fn new(knots: Vec<ArmaApprox>, v: usize) -> Result<Self> {
        let grid: Vec<f64> = knots.iter().map(|f| f.d).collect();
        let splines = if knots.len() >= 2 {
            (0..v)
                .map(|i| {
                    let vals: Vec<f64> = knots.iter().map(|f| f.ar_factors[i]).collect();
                    NaturalSpline::new(&grid, &vals)
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self { knots, splines })
    }

    fn lo(&self) -> f64 {
        self.knots[0].d
    }

    fn hi(&self) -> f64 {
        self.knots[self.knots.len() - 1].d
    }

    /// Factored AR parameters at `d`; the end cubics extend past the knots.
    fn factors(&self, d: f64) -> Vec<f64> {
        if self.splines.is_empty() {
            self.knots[0].ar_factors.clone()
        } else {
            self.splines.iter().map(|s| s.eval(d)).collect()
        }
    }
}

/// Smooth map from `d` to ARMA(v, w) approximation coefficients.
///
/// The factored AR parameters are interpolated with natural cubic splines and
/// the MA part is re-projected at each query, so evaluation at a knot returns
/// that knot's fit. Knots are grouped into segments that each follow one
/// branch of fits; where the fitter had to change branch the map is
/// continuous in the Wold weights only when the seam knot is represented
/// exactly on both sides.
#[derive(Debug, Clone)]
pub struct CoeffMap {
    v: usize,
    w: usize,
    n: usize,
    segments: Vec<Segment>,
}

#[derive(Serialize, Deserialize)]
struct CoeffMapDoc {
    version: u32,
    v: usize,
    w: usize,
    n: usize,
    segments: Vec<Vec<ArmaApprox>>,
}

/// Fits the lowest knot with the full multi-start search, then follows that
/// branch upward with warm starts from the previous knots. Near-equivalent
/// branches exist and switching between them breaks the splines, so a fresh
/// search wins only when it is much better. A switch opens a new segment,
/// which is extended one knot back when the new branch fits that knot as well
/// as the old one did.
pub fn build_coeff_map(grid: &[f64], v: usize, w: usize, n: usize) -> Result<CoeffMap> {
    if grid.len() < 4 {
        return Err(Error::InvalidInput(
            "coefficient grid needs at least 4 points".into(),
        ));
    }
    if grid.windows(2).any(|p| !(p[1] > p[0])) || grid[0] <= 0.0 {
        return Err(Error::InvalidInput(
            "coefficient grid must be ascending and positive".into(),
        ));
    }
    let budget = FitBudget::default();
    let grid_err = |d: f64, e: Error| Error::GridFit {
        d,
        reason: e.to_string(),
    };
    let first =
        fit_arma_approx_from(grid[0], v, w, n, &[], &budget).map_err(|e| grid_err(grid[0], e))?;
    let mut segments: Vec<Vec<ArmaApprox>> = vec![vec![first]];
    for &d in &grid[1..] {
        let seg = segments.last().unwrap();
        let k = seg.len();
        let prev = &seg[k - 1].ar_factors;
        let mut warm = vec![prev.clone()];
        if k >= 2 {
            // linear extrapolation along the branch
            let (d0, d1) = (seg[k - 2].d, seg[k - 1].d);
            let t = (d - d1) / (d1 - d0);
            let pp = &seg[k - 2].ar_factors;
            warm.insert(
                0,
                prev.iter().zip(pp).map(|(a, b)| a + t * (a - b)).collect(),
            );
        }
        let follow = fit_impl(d, v, w, n, &warm, &budget, false);
        let scale = weight_scale(d, n)?;
        if let Ok(a) = &follow {
            if a.fit_mse <= EXACT_REL_MSE * scale {
                segments.last_mut().unwrap().push(follow?);
                continue;
            }
        }
        let fresh = fit_arma_approx_from(d, v, w, n, &[], &budget);
        match (follow, fresh) {
            (Ok(a), Ok(b)) if b.fit_mse >= BRANCH_SWITCH_GAIN * a.fit_mse => {
                segments.last_mut().unwrap().push(a);
            }
            (Ok(a), Err(_)) => segments.last_mut().unwrap().push(a),
            (_, Ok(b)) => {
                let last = segments.last().unwrap().last().unwrap().clone();
                let mut seg = Vec::new();
                let twin = fit_impl(last.d, v, w, n, std::slice::from_ref(&b.ar_factors), &budget, false);
                if let Ok(t) = twin {
                    let tol = (10.0 * last.fit_mse).max(EXACT_REL_MSE * weight_scale(last.d, n)?);
                    if t.fit_mse <= tol {
                        seg.push(t);
                    }
                }
                seg.push(b);
                segments.push(seg);
            }
            (Err(_), Err(e)) => return Err(grid_err(d, e)),
        }
    }
    CoeffMap::from_segments(v, w, n, segments)
}

impl CoeffMap {
    /// A single-segment map through `fits`.
    pub fn from_fits(v: usize, w: usize, n: usize, fits: Vec<ArmaApprox>) -> Result<Self> {
        if fits.len() < 2 {
            return Err(Error::InvalidInput(
                "coefficient map needs at least two knots".into(),
            ));
        }
        Self::from_segments(v, w, n, vec![fits])
    }

    fn from_segments(v: usize, w: usize, n: usize, segments: Vec<Vec<ArmaApprox>>) -> Result<Self> {
        if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
            return Err(Error::InvalidInput("coefficient map needs knots".into()));
        }
        let all = segments.iter().flatten();
        if all
            .clone()
            .any(|f| f.ar.len() != v || f.ma.len() != w || f.ar_factors.len() != v || f.n != n)
        {
            return Err(Error::InvalidInput("inconsistent knot fits".into()));
        }
        for s in &segments {
            if s.windows(2).any(|p| !(p[1].d > p[0].d)) {
                return Err(Error::InvalidInput(
                    "knots must be strictly ascending".into(),
                ));
            }
        }
        if segments
            .windows(2)
            .any(|p| p[1][0].d < p[0][p[0].len() - 1].d)
        {
            return Err(Error::InvalidInput("segments overlap".into()));
        }
        let segments = segments
            .into_iter()
            .map(|k| Segment::new(k, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { v, w, n, segments })
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn w(&self) -> usize {
        self.w
    }

    /// Horizon the knots were fitted over.
    pub fn n(&self) -> usize {
        self.n
    }

    /// One fit per grid point; at a seam the fit of the lower segment.
    pub fn knots(&self) -> Vec<&ArmaApprox> {
        let mut out: Vec<&ArmaApprox> = Vec::new();
        for s in &self.segments {
            for k in &s.knots {
                if out.last().is_none_or(|l| l.d < k.d) {
                    out.push(k);
                }
            }
        }
        out
    }

    pub fn grid(&self) -> Vec<f64> {
        self.knots().iter().map(|f| f.d).collect()
    }

    /// Number of continuous branches the map is stitched from.
    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn domain(&self) -> (f64, f64) {
        (
            self.segments[0].lo(),
            self.segments[self.segments.len() - 1].hi(),
        )
    }

    pub fn contains(&self, d: f64) -> bool {
        let (lo, hi) = self.domain();
        d >= lo && d <= hi
    }

    pub fn eval(&self, d: f64) -> Result<ArmaCoeffs> {
        let (lo, hi) = self.domain();
        if !(d >= lo && d <= hi) {
            return Err(Error::OutOfDomain { d, lo, hi });
        }
        if let Some(k) = self.knots().into_iter().find(|f| f.d == d) {
            return Ok(k.coeffs());
        }
        let target = phi_int_coeffs(d, self.n)?;
        let mut proj = Projection::new(&target, self.v, self.w);
        let mut r = vec![0.0; self.n];
        let mut candidate = |seg: &Segment| -> Option<(ArmaCoeffs, f64)> {
            let theta = seg.factors(d);
            let ma = proj.solve(&theta, &mut r)?;
            let sse: f64 = r.iter().map(|x| x * x).sum();
            Some((
                ArmaCoeffs {
                    ar: ar_from_factors(&theta),
                    ma,
                },
                sse,
            ))
        };
        let inside = self.segments.iter().find(|s| d >= s.lo() && d <= s.hi());
        let best = match inside {
            Some(seg) => candidate(seg),
            None => {
                // between two segments: the better of both extensions
                let j = self.segments.iter().position(|s| s.lo() > d).unwrap_or(0);
                let a = candidate(&self.segments[j - 1]);
                let b = candidate(&self.segments[j]);
                match (a, b) {
                    (Some(a), Some(b)) => Some(if b.1 < a.1 { b } else { a }),
                    (a, b) => a.or(b),
                }
            }
        };
        best.map(|(c, _)| c).ok_or_else(|| Error::GridFit {
            d,
            reason: "interpolated AR part is degenerate".into(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = CoeffMapDoc {
            version: COEFF_MAP_VERSION,
            v: self.v,
            w: self.w,
            n: self.n,
            segments: self.segments.iter().map(|s| s.knots.clone()).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: CoeffMapDoc = serde_json::from_str(s)?;
        if doc.version != COEFF_MAP_VERSION {
            return Err(Error::Serde(format!(
                "coefficient map version {} not supported (expected {COEFF_MAP_VERSION})",
                doc.version
            )));
        }
        Self::from_segments(doc.v, doc.w, doc.n, doc.segments)
    }

    /// File name under which a map with these settings is cached.
    pub fn cache_key(grid: &[f64], v: usize, w: usize, n: usize) -> String {
        let lo = grid.first().copied().unwrap_or(f64::NAN);
        let hi = grid.last().copied().unwrap_or(f64::NAN);
        format!(
            "coeffmap-v{COEFF_MAP_VERSION}-arma{v}x{w}-n{n}-d{lo:.4}-{hi:.4}-k{}.json",
            grid.len()
        )
    }
}
