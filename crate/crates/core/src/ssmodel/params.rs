use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::spec::{DMode, ModelSpec};
use crate::error::{Error, Result};

/// Sample size of the boundary curve used by the stability check.
pub const STABILITY_POINTS: usize = 720;
const STABILITY_MIN_MODULUS: f64 = 1e-8;

/// Structural parameters of the trend-cycle model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub d: f64,
    pub phi: Vec<f64>,
    pub sigma_eta2: f64,
    pub sigma_eta_eps: f64,
    pub sigma_eps2: f64,
    pub mu0: f64,
    pub mu1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_break: Option<f64>,
}

impl Params {
    /// Shock correlation implied by the covariance entries.
    pub fn rho(&self) -> f64 {
        self.sigma_eta_eps / (self.sigma_eta2 * self.sigma_eps2).sqrt()
    }

    /// Covariance of `(eta_t, eps_t)`.
    pub fn q(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.sigma_eta2,
            self.sigma_eta_eps,
            self.sigma_eta_eps,
            self.sigma_eps2,
        )
    }

    /// Deterministic component at 1-based time `t`.
    pub fn deterministic(&self, spec: &ModelSpec, t: usize) -> f64 {
        self.mu0
            + self.mu1 * t as f64
            + self.mu_break.unwrap_or(0.0) * spec.deterministic.break_regressor(t)
    }

    /// `y_t` minus the deterministic component.
    pub fn demean(&self, spec: &ModelSpec, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(i, v)| v - self.deterministic(spec, i + 1))
            .collect()
    }

    /// Checks shapes, positivity, positive semidefiniteness of `Q`, the
    /// fixed `d` and cycle stability.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.phi.len() != spec.p {
            return bad(format!(
                "phi has {} entries, model order is {}",
                self.phi.len(),
                spec.p
            ));
        }
        if self.mu_break.is_some() != spec.has_break() {
            return bad("mu_break must be present exactly when the model has a trend break".into());
        }
        let all = [
            self.d,
            self.sigma_eta2,
            self.sigma_eta_eps,
            self.sigma_eps2,
            self.mu0,
            self.mu1,
        ]
        .into_iter()
        .chain(self.phi.iter().copied())
        .chain(self.mu_break);
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("parameters must be finite".into());
        }
        if self.d < 0.0 {
            return bad(format!("d = {} must be non-negative", self.d));
        }
        if let DMode::Fixed(d) = spec.d_mode {
            if self.d != d {
                return bad(format!("d = {} differs from the fixed value {d}", self.d));
            }
        }
        if !(self.sigma_eta2 > 0.0 && self.sigma_eps2 > 0.0) {
            return bad("shock variances must be positive".into());
        }
        let det = self.sigma_eta2 * self.sigma_eps2 - self.sigma_eta_eps * self.sigma_eta_eps;
        if det < -1e-12 * self.sigma_eta2 * self.sigma_eps2 {
            return bad(format!(
                "shock covariance is not positive semidefinite (det = {det:e})"
            ));
        }
        if !is_stable(&self.phi, self.d) {
            return bad(format!(
                "cycle polynomial has a root inside the image of the unit disk for d = {}",
                self.d
            ));
        }
        Ok(())
    }
}

/// `phi(1 - (1 - z)^d)` with `phi(x) = 1 - sum phi_j x^j`.
fn composite(phi: &[f64], d: f64, z: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let base = one - z;
    let lag = if base.norm() == 0.0 {
        one
    } else {
        one - base.powf(d)
    };
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in phi.iter().rev() {
        acc = (acc + c) * lag;
    }
    one - acc
}

/// Numerical check that `phi(z)` has no root in the image of the closed unit
/// disk under `z -> 1 - (1 - z)^d`.
///
/// The composite `phi(1 - (1 - z)^d)` is analytic inside the disk, so it is
/// root-free there exactly when its boundary curve stays away from zero and
/// has winding number zero.
pub fn is_stable(phi: &[f64], d: f64) -> bool {
    if phi.iter().all(|&c| c == 0.0) {
        return true;
    }
    let m = STABILITY_POINTS;
    let mut prev = composite(phi, d, Complex64::new(1.0, 0.0));
    let first = prev;
    let mut turns = 0.0;
    for k in 1..=m {
        let cur = if k == m {
            first
        } else {
            let lambda = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            composite(phi, d, Complex64::from_polar(1.0, lambda))
        };
        if cur.norm() <= STABILITY_MIN_MODULUS {
            return false;
        }
        turns += (cur / prev).arg();
        prev = cur;
    }
    (turns / (2.0 * std::f64::consts::PI)).abs() < 0.5
}
