use serde::{Deserialize, Serialize};

use crate::arma_map::CoeffMap;
use crate::error::{Error, Result};

/// Whether the memory parameter is estimated or held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DMode {
    Free,
    Fixed(f64),
}

/// Deterministic terms: an intercept and a linear drift are always present;
/// an optional broken trend adds `mu_break * max(0, t - t_b)` (1-based `t`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Deterministic {
    pub break_at: Option<usize>,
}

impl Deterministic {
    /// Trend-break regressor at 1-based time `t`.
    pub fn break_regressor(&self, t: usize) -> f64 {
        match self.break_at {
            Some(tb) if t > tb => (t - tb) as f64,
            _ => 0.0,
        }
    }
}

/// Structure of a trend-cycle model fitted to a series of length `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// AR order of the cycle polynomial in the fractional lag operator.
    pub p: usize,
    pub d_mode: DMode,
    pub deterministic: Deterministic,
    /// ARMA orders approximating the fractional trend filter.
    pub v: usize,
    pub w: usize,
    /// Number of standard lags kept in the cycle's AR representation.
    pub l: usize,
    pub n: usize,
}

pub const DEFAULT_V: usize = 4;
pub const DEFAULT_W: usize = 4;
pub const DEFAULT_L: usize = 10;

impl ModelSpec {
    /// Free `d` with default approximation settings.
    pub fn fractional(p: usize, n: usize) -> Self {
        Self {
            p,
            d_mode: DMode::Free,
            deterministic: Deterministic::default(),
            v: DEFAULT_V,
            w: DEFAULT_W,
            l: DEFAULT_L.max(p),
            n,
        }
    }

    /// Random-walk trend with a stationary AR(p) cycle (`d` fixed at one).
    pub fn unit_root(p: usize, n: usize) -> Self {
        Self {
            d_mode: DMode::Fixed(1.0),
            ..Self::fractional(p, n)
        }
    }

    pub fn with_break(mut self, t_b: usize) -> Self {
        self.deterministic.break_at = Some(t_b);
        self
    }

    pub fn with_truncation(mut self, l: usize) -> Self {
        self.l = l;
        self
    }

    pub fn has_break(&self) -> bool {
        self.deterministic.break_at.is_some()
    }

    /// Order `k` when `d` is fixed at an integer the trend block represents
    /// exactly as `(1 - L)^k`.
    pub fn exact_trend_order(&self) -> Option<usize> {
        match self.d_mode {
            DMode::Fixed(d) => exact_unit_root_order(d, self.v),
            DMode::Free => None,
        }
    }

    pub fn d_free(&self) -> bool {
        matches!(self.d_mode, DMode::Free)
    }

    /// Number of free parameters: d (if free), phi, three shock moments and
    /// the deterministic coefficients.
    pub fn free_param_count(&self) -> usize {
        usize::from(self.d_free()) + self.p + 3 + 2 + usize::from(self.has_break())
    }

    pub fn validate(&self) -> Result<()> {
        if self.v == 0 || self.w == 0 {
            return Err(Error::InvalidInput(
                "ARMA orders v and w must be at least 1".into(),
            ));
        }
        if self.l < self.p.max(1) {
            return Err(Error::InvalidInput(format!(
                "truncation lag l = {} must be at least max(p, 1) = {}",
                self.l,
                self.p.max(1)
            )));
        }
        if self.n <= self.l {
            return Err(Error::InvalidInput(format!(
                "sample length n = {} must exceed the truncation lag l = {}",
                self.n, self.l
            )));
        }
        if let DMode::Fixed(d) = self.d_mode {
            if !d.is_finite() || d <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "fixed d = {d} must be positive"
                )));
            }
        }
        if let Some(tb) = self.deterministic.break_at {
            if tb == 0 || tb >= self.n {
                return Err(Error::InvalidInput(format!(
                    "break date {tb} must lie strictly inside 1..{}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    /// Also checks that a fixed `d` lies inside the map's domain, unless it
    /// is an integer the AR part represents exactly.
    pub fn validate_with_map(&self, map: &CoeffMap) -> Result<()> {
        self.validate()?;
        if map.v() != self.v || map.w() != self.w {
            return Err(Error::InvalidInput(format!(
                "coefficient map is ARMA({}, {}) but the model uses ARMA({}, {})",
                map.v(),
                map.w(),
                self.v,
                self.w
            )));
        }
        if let DMode::Fixed(d) = self.d_mode {
            if exact_unit_root_order(d, self.v).is_none() && !map.contains(d) {
                let (lo, hi) = map.domain();
                return Err(Error::OutOfDomain { d, lo, hi });
            }
        }
        Ok(())
    }
}

/// `Some(k)` when `d = k` is an integer in `1..=v`, so `(1 - L)^{-d}` has an
/// exact AR(k) form.
pub(crate) fn exact_unit_root_order(d: f64, v: usize) -> Option<usize> {
    (d.fract() == 0.0 && d >= 1.0 && d <= v as f64).then_some(d as usize)
}
