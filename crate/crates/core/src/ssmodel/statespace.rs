use nalgebra::{DMatrix, DVector, Matrix2};

use super::params::Params;
use super::spec::ModelSpec;
use crate::arma_map::CoeffMap;
use crate::error::{Error, Result};
use crate::fracops::{frac_ar_expand, pi_coeffs};

/// Layout of a stochastic block's transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockForm {
    /// Coefficients in the first column, identity on the superdiagonal.
    Harvey,
    /// Coefficients in the first row, identity on the subdiagonal.
    Companion,
}

/// One stochastic block driven by a single shock. Its first state element
/// is the block's contribution to the observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub form: BlockForm,
    pub coeffs: Vec<f64>,
    pub loading: Vec<f64>,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn transition(&self) -> DMatrix<f64> {
        let k = self.dim();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            match self.form {
                BlockForm::Harvey => {
                    t[(i, 0)] = self.coeffs[i];
                    if i + 1 < k {
                        t[(i, i + 1)] = 1.0;
                    }
                }
                BlockForm::Companion => {
                    t[(0, i)] = self.coeffs[i];
                    if i > 0 {
                        t[(i, i - 1)] = 1.0;
                    }
                }
            }
        }
        t
    }

    /// `out = T s`.
    pub fn apply(&self, s: &[f64], out: &mut [f64]) {
        let k = self.dim();
        match self.form {
            BlockForm::Harvey => {
                for i in 0..k {
                    out[i] = self.coeffs[i] * s[0] + if i + 1 < k { s[i + 1] } else { 0.0 };
                }
            }
            BlockForm::Companion => {
                out[0] = self.coeffs.iter().zip(s).map(|(a, x)| a * x).sum();
                out[1..k].copy_from_slice(&s[..k - 1]);
            }
        }
    }

    /// First `n` impulse responses `Z T^j R` of the block.
    pub fn impulse_response(&self, n: usize) -> Vec<f64> {
        let mut s = self.loading.clone();
        let mut next = vec![0.0; self.dim()];
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(s[0]);
            self.apply(&s, &mut next);
            std::mem::swap(&mut s, &mut next);
        }
        out
    }
}

/// Known deterministic block: level, drift and optional break slope.
#[derive(Debug, Clone, PartialEq)]
pub struct MuBlock {
    pub mu0: f64,
    pub mu1: f64,
    pub mu_break: Option<f64>,
    pub break_at: Option<usize>,
}

impl MuBlock {
    pub fn dim(&self) -> usize {
        2 + usize::from(self.mu_break.is_some())
    }

    /// `b_t = 1{t > t_b}` for 1-based `t`.
    fn break_active(&self, t: usize) -> bool {
        matches!(self.break_at, Some(tb) if t > tb)
    }

    /// `mu0 + mu1 t + mu_break max(0, t - t_b)`.
    pub fn value(&self, t: usize) -> f64 {
        let brk = match (self.mu_break, self.break_at) {
            (Some(b), Some(tb)) if t > tb => b * (t - tb) as f64,
            _ => 0.0,
        };
        self.mu0 + self.mu1 * t as f64 + brk
    }

    /// Transition into period `t`; the level gains the drift and, after the
    /// break, the break slope.
    pub fn transition(&self, t: usize) -> DMatrix<f64> {
        let k = self.dim();
        let mut m = DMatrix::identity(k, k);
        m[(0, 1)] = 1.0;
        if k == 3 && self.break_active(t) {
            m[(0, 2)] = 1.0;
        }
        m
    }

    /// State at `t = 0`.
    pub fn initial(&self) -> Vec<f64> {
        let mut s = vec![self.mu0, self.mu1];
        s.extend(self.mu_break);
        s
    }
}

/// Linear Gaussian state space of the (truncated) trend-cycle model:
/// `y_t = Z alpha_t`, `alpha_t = T_t alpha_{t-1} + R (eta_t, eps_t)'`, with the
/// stochastic part of `alpha_0` exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub mu: MuBlock,
    /// Trend block, driven by `eta`.
    pub x: Block,
    /// Cycle block, driven by `eps`.
    pub c: Block,
    pub q: Matrix2<f64>,
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        self.mu.dim() + self.x.dim() + self.c.dim()
    }

    fn offsets(&self) -> (usize, usize) {
        let ox = self.mu.dim();
        (ox, ox + self.x.dim())
    }

    /// Full transition matrix into period `t` (1-based).
    pub fn transition(&self, t: usize) -> DMatrix<f64> {
        let (ox, oc) = self.offsets();
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        m.view_mut((0, 0), (ox, ox))
            .copy_from(&self.mu.transition(t));
        m.view_mut((ox, ox), (self.x.dim(), self.x.dim()))
            .copy_from(&self.x.transition());
        m.view_mut((oc, oc), (self.c.dim(), self.c.dim()))
            .copy_from(&self.c.transition());
        m
    }

    /// Shock loading, one column per shock `(eta, eps)`.
    pub fn selection(&self) -> DMatrix<f64> {
        let (ox, oc) = self.offsets();
        let mut r = DMatrix::zeros(self.dim(), 2);
        for (i, v) in self.x.loading.iter().enumerate() {
            r[(ox + i, 0)] = *v;
        }
        for (i, v) in self.c.loading.iter().enumerate() {
            r[(oc + i, 1)] = *v;
        }
        r
    }

    pub fn observation(&self) -> DVector<f64> {
        let (ox, oc) = self.offsets();
        let mut z = DVector::zeros(self.dim());
        z[0] = 1.0;
        z[ox] = 1.0;
        z[oc] = 1.0;
        z
    }

    pub fn initial_state(&self) -> DVector<f64> {
        let mut a = DVector::zeros(self.dim());
        for (i, v) in self.mu.initial().into_iter().enumerate() {
            a[i] = v;
        }
        a
    }

    /// Covariance of the first-period state, `R Q R'`.
    pub fn initial_covariance(&self) -> DMatrix<f64> {
        let r = self.selection();
        let q = DMatrix::from_column_slice(2, 2, self.q.as_slice());
        &r * q * r.transpose()
    }
}

/// Coefficients `a_1..a_k` of `1 - (1 - L)^k` as an AR polynomial.
fn unit_root_ar(k: usize) -> Vec<f64> {
    let mut binom = 1.0;
    (1..=k)
        .map(|i| {
            binom *= (k + 1 - i) as f64 / i as f64;
            if i % 2 == 1 {
                binom
            } else {
                -binom
            }
        })
        .collect()
}

fn mu_block(params: &Params, spec: &ModelSpec) -> MuBlock {
    MuBlock {
        mu0: params.mu0,
        mu1: params.mu1,
        mu_break: params.mu_break,
        break_at: spec.deterministic.break_at,
    }
}

fn padded(values: &[f64], lead: Option<f64>, len: usize) -> Vec<f64> {
    let mut out: Vec<f64> = lead.into_iter().chain(values.iter().copied()).collect();
    out.resize(len, 0.0);
    out
}

/// Assembles the truncated system: ARMA(v, w) trend block of size
/// `u = max(v, w + 1)` and an AR(l) cycle block.
///
/// A fixed integer `d = k <= v` uses the exact AR form of `(1 - L)^k`
/// instead of the map.
pub fn build_state_space(params: &Params, spec: &ModelSpec, map: &CoeffMap) -> Result<StateSpace> {
    spec.validate_with_map(map)?;
    params.validate(spec)?;
    let (ar, ma) = match spec.exact_trend_order() {
        Some(k) => (unit_root_ar(k), Vec::new()),
        None => {
            let c = map.eval(params.d)?;
            (c.ar, c.ma)
        }
    };
    let u = spec.v.max(spec.w + 1);
    let x = Block {
        form: BlockForm::Harvey,
        coeffs: padded(&ar, None, u),
        loading: padded(&ma, Some(1.0), u),
    };
    let delta = frac_ar_expand(params.d, &params.phi, spec.l)?;
    let c = Block {
        form: BlockForm::Companion,
        coeffs: delta[1..].iter().map(|v| -v).collect(),
        loading: padded(&[], Some(1.0), spec.l),
    };
    Ok(StateSpace {
        mu: mu_block(params, spec),
        x,
        c,
        q: params.q(),
    })
}

/// The untruncated system for a sample of length `spec.n`: the trend as the
/// exact AR(n-1) form of `(1 - L)^d` and the cycle with all `n - 1` lags of
/// `phi(L_d)`. Its Kalman filter gives the exact Gaussian likelihood.
pub fn build_exact_state_space(params: &Params, spec: &ModelSpec) -> Result<StateSpace> {
    spec.validate()?;
    params.validate(spec)?;
    let n = spec.n;
    if n < 2 {
        return Err(Error::InvalidInput("exact system needs n >= 2".into()));
    }
    let pi = pi_coeffs(params.d, n)?;
    let x = Block {
        form: BlockForm::Companion,
        coeffs: pi[1..].iter().map(|v| -v).collect(),
        loading: padded(&[], Some(1.0), n - 1),
    };
    let delta = frac_ar_expand(params.d, &params.phi, n - 1)?;
    let c = Block {
        form: BlockForm::Companion,
        coeffs: delta[1..].iter().map(|v| -v).collect(),
        loading: padded(&[], Some(1.0), n - 1),
    };
    Ok(StateSpace {
        mu: mu_block(params, spec),
        x,
        c,
        q: params.q(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arma_map::{ar_from_factors, ArmaApprox, CoeffMap};
    use crate::fracops::phi_int_coeffs;

    fn params(d: f64, phi: Vec<f64>) -> Params {
        Params {
            d,
            phi,
            sigma_eta2: 1.0,
            sigma_eta_eps: 0.2,
            sigma_eps2: 0.8,
            mu0: 1.0,
            mu1: 0.1,
            mu_break: None,
        }
    }

    /// A constant map on [0.5, 2.5]; its coefficients are irrelevant to the
    /// structure checks below.
    fn flat_map(v: usize, w: usize) -> CoeffMap {
        let factors: Vec<f64> = (0..v).map(|i| 0.9 - 0.1 * i as f64).collect();
        let fits = [0.5, 1.5, 2.5]
            .iter()
            .map(|&d| ArmaApprox {
                d,
                ar: ar_from_factors(&factors),
                ma: vec![0.1; w],
                fit_mse: 0.0,
                n: 40,
                ar_factors: factors.clone(),
            })
            .collect();
        CoeffMap::from_fits(v, w, 40, fits).unwrap()
    }

    #[test]
    fn local_level_with_drift() {
        let spec = ModelSpec {
            v: 1,
            w: 1,
            l: 1,
            ..ModelSpec::unit_root(0, 40)
        };
        let ss = build_state_space(&params(1.0, vec![]), &spec, &flat_map(1, 1)).unwrap();
        assert_eq!(ss.x.coeffs, vec![1.0, 0.0]);
        assert_eq!(ss.x.loading, vec![1.0, 0.0]);
        assert_eq!(ss.x.impulse_response(5), vec![1.0; 5]);
        assert_eq!(ss.c.coeffs, vec![0.0]);
        assert_eq!(ss.dim(), 2 + 2 + 1);
        let t = ss.transition(3);
        assert_eq!(t[(0, 0)], 1.0);
        assert_eq!(t[(0, 1)], 1.0);
        assert_eq!(t[(2, 2)], 1.0);
    }

    #[test]
    fn cycle_block_is_companion_of_fractional_ar() {
        let spec = ModelSpec::fractional(2, 40);
        let ss = build_state_space(&params(1.3, vec![0.6, -0.2]), &spec, &flat_map(4, 4)).unwrap();
        assert_eq!(ss.c.dim(), 10);
        assert_eq!(ss.x.dim(), 5);
        let t = ss.c.transition();
        for j in 1..10 {
            assert_eq!(t[(j, j - 1)], 1.0);
        }
        let delta = frac_ar_expand(1.3, &[0.6, -0.2], 10).unwrap();
        for j in 0..10 {
            assert_eq!(t[(0, j)], -delta[j + 1]);
        }
        assert_eq!(ss.dim(), 2 + 5 + 10);
    }

    #[test]
    fn lag_one_cycle_coefficient() {
        let spec = ModelSpec::fractional(1, 40);
        let ss = build_state_space(&params(1.32, vec![0.68]), &spec, &flat_map(4, 4)).unwrap();
        assert!((ss.c.coeffs[0] - 0.8976).abs() < 1e-12);
    }

    #[test]
    fn out_of_domain_d_is_rejected() {
        let spec = ModelSpec::fractional(1, 40);
        let err = build_state_space(&params(2.7, vec![0.3]), &spec, &flat_map(4, 4)).unwrap_err();
        assert!(matches!(err, Error::OutOfDomain { .. }));
    }

    #[test]
    fn deterministic_block_with_break() {
        let spec = ModelSpec::fractional(0, 40).with_break(3);
        let mut p = params(1.0, vec![]);
        p.mu_break = Some(0.5);
        let ss = build_state_space(&p, &spec, &flat_map(4, 4)).unwrap();
        let mut a = DVector::from_vec(ss.mu.initial());
        for t in 1..=6 {
            a = ss.mu.transition(t) * a;
            assert!((a[0] - ss.mu.value(t)).abs() < 1e-14);
            assert!((a[0] - p.deterministic(&spec, t)).abs() < 1e-14);
        }
    }

    #[test]
    fn unit_root_polynomials() {
        assert_eq!(unit_root_ar(1), vec![1.0]);
        assert_eq!(unit_root_ar(2), vec![2.0, -1.0]);
        assert_eq!(unit_root_ar(3), vec![3.0, -3.0, 1.0]);
    }

    #[test]
    fn exact_system_reproduces_fractional_weights() {
        let spec = ModelSpec::fractional(1, 30);
        let p = params(0.8, vec![0.4]);
        let ss = build_exact_state_space(&p, &spec).unwrap();
        let target = phi_int_coeffs(0.8, 30).unwrap();
        for (a, b) in ss.x.impulse_response(30).iter().zip(target.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_matrices_agree_with_blocks() {
        let spec = ModelSpec::fractional(1, 40);
        let ss = build_state_space(&params(1.1, vec![0.5]), &spec, &flat_map(4, 4)).unwrap();
        let t = ss.transition(2);
        let r = ss.selection();
        let z = ss.observation();
        // Z T^j R recovers each block's impulse response.
        let xr = ss.x.impulse_response(6);
        let cr = ss.c.impulse_response(6);
        let mut m = r.clone();
        for j in 0..6 {
            let zr = z.transpose() * &m;
            assert!((zr[(0, 0)] - xr[j]).abs() < 1e-12);
            assert!((zr[(0, 1)] - cr[j]).abs() < 1e-12);
            m = &t * m;
        }
        let p1 = ss.initial_covariance();
        assert!((p1[(2, 2)] - 1.0).abs() < 1e-15);
        assert!((p1[(2, 7)] - 0.2).abs() < 1e-15);
    }
}
