use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest series accepted by [`gph_estimate`].
pub const GPH_MIN_LEN: usize = 32;

/// Log-periodogram estimate of the memory parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GphEstimate {
    pub d: f64,
    /// OLS standard error of the slope.
    pub se: f64,
    /// Number of Fourier frequencies in the regression.
    pub bandwidth: usize,
    pub alpha: f64,
}

/// Geweke and Porter-Hudak estimate of `d` for a series integrated of order
/// around one: the regression of [`gph_regression`] runs on the first
/// differences (`N = n - 1` observations) and one is added back.
pub fn gph_estimate(y: &[f64], alpha: f64) -> Result<GphEstimate> {
    check_series(y, alpha)?;
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let mut g = regression(&dy, alpha)?;
    g.d += 1.0;
    Ok(g)
}

/// Log-periodogram regression on the series as given, for memory in the
/// stationary range: `ln I(lambda_j)` on `-ln(4 sin^2(lambda_j / 2))` over
/// the lowest `floor(n^alpha)` Fourier frequencies.
pub fn gph_regression(x: &[f64], alpha: f64) -> Result<GphEstimate> {
    check_series(x, alpha)?;
    regression(x, alpha)
}

fn check_series(y: &[f64], alpha: f64) -> Result<()> {
    if y.len() < GPH_MIN_LEN {
        return Err(Error::InvalidInput(format!(
            "log-periodogram regression needs at least {GPH_MIN_LEN} observations, got {}",
            y.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "bandwidth exponent {alpha} must lie in (0, 1)"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "series contains non-finite values".into(),
        ));
    }
    Ok(())
}

fn regression(x: &[f64], alpha: f64) -> Result<GphEstimate> {
    let n = x.len();
    let m = ((n as f64).powf(alpha).floor() as usize).min((n - 1) / 2);
    if m < 3 {
        return Err(Error::InvalidInput(format!(
            "bandwidth {m} leaves too few frequencies for a regression"
        )));
    }
    let mut xs = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    for j in 1..=m {
        let lambda = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in x.iter().enumerate() {
            let a = lambda * t as f64;
            re += v * a.cos();
            im -= v * a.sin();
        }
        let periodogram = (re * re + im * im) / (2.0 * std::f64::consts::PI * n as f64);
        if !(periodogram > 0.0) {
            return Err(Error::InvalidInput(format!(
                "periodogram vanishes at Fourier frequency {j}"
            )));
        }
        xs.push(-(4.0 * (lambda / 2.0).sin().powi(2)).ln());
        ys.push(periodogram.ln());
    }
    let mf = m as f64;
    let xbar = xs.iter().sum::<f64>() / mf;
    let ybar = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(GphEstimate {
        d: slope,
        se: (rss / (mf - 2.0) / sxx).sqrt(),
        bandwidth: m,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_series_and_bad_alpha() {
        assert!(gph_estimate(&[1.0; 20], 0.65).is_err());
        let y: Vec<f64> = (0..64).map(|t| (t as f64 * 0.37).sin()).collect();
        assert!(gph_estimate(&y, 1.0).is_err());
        assert!(gph_estimate(&y, 0.0).is_err());
        assert!(gph_estimate(&y, 0.65).is_ok());
    }

    #[test]
    fn bandwidth_follows_exponent() {
        let y: Vec<f64> = (0..233).map(|t| ((t * t) as f64 * 0.013).sin()).collect();
        let g = gph_estimate(&y, 0.65).unwrap();
        assert_eq!(g.bandwidth, (232f64).powf(0.65).floor() as usize);
    }

    #[test]
    fn random_walk_is_near_one() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let mut y = vec![0.0; 2048];
        for t in 1..y.len() {
            let e: f64 = StandardNormal.sample(&mut rng);
            y[t] = y[t - 1] + e;
        }
        let g = gph_estimate(&y, 0.65).unwrap();
        assert!((g.d - 1.0).abs() < 4.0 * g.se, "d = {}, se = {}", g.d, g.se);
    }

    #[test]
    fn differencing_shifts_by_one() {
        let x: Vec<f64> = (0..300)
            .map(|t| ((t * 7 % 13) as f64 - 6.0) * 0.1 + (t as f64 * 0.05).sin())
            .collect();
        let mut y = vec![0.0; 301];
        for t in 0..300 {
            y[t + 1] = y[t] + x[t];
        }
        let a = gph_estimate(&y, 0.6).unwrap();
        let b = gph_regression(&x, 0.6).unwrap();
        assert!((a.d - b.d - 1.0).abs() < 1e-12);
        assert_eq!(a.bandwidth, b.bandwidth);
    }
}
