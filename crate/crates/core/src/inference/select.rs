use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::estimate::{estimate, EstimateOptions, FitResult};
use crate::arma_map::CoeffMap;
use crate::error::{Error, Result};
use crate::ssmodel::ModelSpec;

/// Outcome of choosing the cycle order by BIC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub p: usize,
    pub fit: FitResult,
    /// BIC by order `0..=p_max`; `None` where the fit failed.
    pub bic: Vec<Option<f64>>,
}

/// Fits `p = 0..=p_max` on the template and keeps the smallest BIC, ties
/// going to the smaller order. The truncation lag is raised to `p` where
/// needed.
pub fn select_p(
    y: &[f64],
    template: &ModelSpec,
    p_max: usize,
    map: &CoeffMap,
    opts: &EstimateOptions,
) -> Result<Selection> {
    let mut best: Option<(usize, FitResult)> = None;
    let mut bic = Vec::with_capacity(p_max + 1);
    let mut failures = Vec::new();
    for p in 0..=p_max {
        let spec = ModelSpec {
            p,
            l: template.l.max(p),
            ..template.clone()
        };
        match estimate(&spec, y, map, opts) {
            Ok(fit) => {
                bic.push(Some(fit.bic));
                if best.as_ref().is_none_or(|(_, b)| fit.bic < b.bic) {
                    best = Some((p, fit));
                }
            }
            Err(e) => {
                bic.push(None);
                failures.push(format!("p = {p}: {e}"));
            }
        }
    }
    let (p, fit) = best.ok_or_else(|| {
        Error::Estimation(format!(
            "no order could be fitted ({})",
            failures.join("; ")
        ))
    })?;
    Ok(Selection { p, fit, bic })
}

/// Tolerance on a negative likelihood-ratio statistic.
const LR_TOL: f64 = 1e-8;

/// p-value of the likelihood-ratio test against a chi-squared reference.
pub fn lr_test(loglik_restricted: f64, loglik_unrestricted: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::InvalidInput(
            "degrees of freedom must be at least 1".into(),
        ));
    }
    if !(loglik_restricted.is_finite() && loglik_unrestricted.is_finite()) {
        return Err(Error::InvalidInput("log-likelihoods must be finite".into()));
    }
    let gain = loglik_unrestricted - loglik_restricted;
    if gain < -LR_TOL {
        return Err(Error::InvalidInput(format!(
            "restricted log-likelihood exceeds the unrestricted one by {:e}",
            -gain
        )));
    }
    let stat = 2.0 * gain.max(0.0);
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(1.0 - chi.cdf(stat))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_reference_values() {
        assert_eq!(lr_test(-10.0, -10.0, 1).unwrap(), 1.0);
        assert!((lr_test(0.0, 3.841_458_820_694_124 / 2.0, 1).unwrap() - 0.05).abs() < 1e-9);
        let p = lr_test(-260.53, -258.55, 1).unwrap();
        assert!((p - 0.0466).abs() < 5e-4, "{p}");
        assert!(lr_test(-10.0, -10.0 - 1e-9, 1).is_ok());
        assert!(lr_test(-10.0, -11.0, 1).is_err());
        assert!(lr_test(-10.0, -9.0, 0).is_err());
    }
}
