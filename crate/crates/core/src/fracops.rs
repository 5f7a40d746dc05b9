//! Truncated (type II) fractional operators.
//!
//! All sequences are indexed from lag 0 and represent operators acting on
//! series with zero pre-sample values, so every operator here is a lower
//! triangular Toeplitz convolution and the truncated inverses are exact.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite real coefficient sequence indexed from lag 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoeffSeq(Vec<f64>);

impl CoeffSeq {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("coefficient sequence is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "coefficient {i} is not finite"
            )));
        }
        Ok(CoeffSeq(values))
    }

    /// Unit impulse of length `n` (the identity filter).
    pub fn impulse(n: usize) -> Self {
        let mut v = vec![0.0; n.max(1)];
        v[0] = 1.0;
        CoeffSeq(v)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Truncated product with another sequence, keeping `n` lags.
    pub fn convolve(&self, other: &[f64], n: usize) -> CoeffSeq {
        CoeffSeq(convolve_truncated(&self.0, other, n))
    }
}

impl Deref for CoeffSeq {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<CoeffSeq> for Vec<f64> {
    fn from(c: CoeffSeq) -> Self {
        c.0
    }
}

fn check_order(d: f64, n: usize) -> Result<()> {
    if !d.is_finite() {
        return Err(Error::InvalidInput(format!("d = {d} is not finite")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("length n must be at least 1".into()));
    }
    Ok(())
}

/// Coefficients of the fractional difference operator (1 - L)^d.
pub fn pi_coeffs(d: f64, n: usize) -> Result<CoeffSeq> {
    check_order(d, n)?;
    let mut out = Vec::with_capacity(n);
    out.push(1.0);
    for j in 1..n {
        let jf = j as f64;
        out.push((jf - d - 1.0) / jf * out[j - 1]);
    }
    Ok(CoeffSeq(out))
}

/// Wold weights of the fractional integration operator (1 - L)^{-d}.
pub fn phi_int_coeffs(d: f64, n: usize) -> Result<CoeffSeq> {
    check_order(d, n)?;
    let mut out = Vec::with_capacity(n);
    out.push(1.0);
    for j in 1..n {
        let jf = j as f64;
        out.push((jf + d - 1.0) / jf * out[j - 1]);
    }
    Ok(CoeffSeq(out))
}

/// Truncated convolution `(a * b)_j` for `j < n`.
pub fn convolve_truncated(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (i, &ai) in a.iter().enumerate().take(n) {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(n - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Applies a causal filter with weights `w` to `series`, zero pre-sample.
pub fn apply_filter(w: &[f64], series: &[f64]) -> Vec<f64> {
    convolve_truncated(w, series, series.len())
}

/// Type II fractional difference of `series`. Negative `d` integrates.
pub fn fracdiff(series: &[f64], d: f64) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::InvalidInput("fracdiff of an empty series".into()));
    }
    let pi = pi_coeffs(d, series.len())?;
    Ok(apply_filter(&pi, series))
}

/// Standard-lag weights of the fractional lag operator power L_d^k, k >= 1.
///
/// Entries below lag `k` are exactly zero since each factor of
/// `L_d = 1 - (1 - L)^d` carries at least one lag.
pub fn varsigma_coeffs(d: f64, k: usize, n: usize) -> Result<CoeffSeq> {
    check_order(d, n)?;
    if k == 0 {
        return Err(Error::InvalidInput(
            "varsigma is defined for powers k >= 1".into(),
        ));
    }
    if n < k {
        return Err(Error::InvalidInput(format!(
            "length {n} shorter than power {k}"
        )));
    }
    let base = lag_d_coeffs(d, n)?;
    let mut acc = base.clone();
    for _ in 1..k {
        acc = convolve_truncated(&acc, &base, n);
    }
    Ok(CoeffSeq(acc))
}

/// Weights of L_d itself: 0 at lag 0, -pi_j(d) thereafter.
fn lag_d_coeffs(d: f64, n: usize) -> Result<Vec<f64>> {
    let mut base: Vec<f64> = pi_coeffs(d, n)?.into_vec();
    base[0] = 0.0;
    for b in base.iter_mut().skip(1) {
        *b = -*b;
    }
    Ok(base)
}

/// Table of `varsigma_{k,i}(d)` for `k = 1..=k_max`, `i = 0..n-1`.
#[derive(Debug, Clone)]
pub struct VarsigmaTable {
    d: f64,
    rows: Vec<Vec<f64>>,
}

impl VarsigmaTable {
    pub fn new(d: f64, k_max: usize, n: usize) -> Result<Self> {
        check_order(d, n)?;
        let base = lag_d_coeffs(d, n)?;
        let mut rows = Vec::with_capacity(k_max);
        if k_max > 0 {
            rows.push(base.clone());
        }
        for k in 1..k_max {
            // L_d^{k+1} only has support from lag k+1 on.
            let prev: &Vec<f64> = &rows[k - 1];
            let mut next = vec![0.0; n];
            for (i, &pi) in prev.iter().enumerate().skip(k) {
                if pi == 0.0 {
                    continue;
                }
                for (j, &bj) in base
                    .iter()
                    .enumerate()
                    .skip(1)
                    .take(n.saturating_sub(i + 1))
                {
                    next[i + j] += pi * bj;
                }
            }
            rows.push(next);
        }
        Ok(Self { d, rows })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn k_max(&self) -> usize {
        self.rows.len()
    }

    /// `varsigma_{k,i}`; `k` is 1-based.
    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.rows[k - 1][i]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k - 1]
    }
}

/// Standard-lag AR weights `delta_0..delta_l` of `phi(L_d)`, where
/// `phi(z) = 1 - ar[0] z - ... - ar[p-1] z^p`.
pub fn frac_ar_expand(d: f64, ar: &[f64], l: usize) -> Result<CoeffSeq> {
    check_order(d, l + 1)?;
    if l < ar.len() {
        return Err(Error::InvalidInput(format!(
            "truncation lag {l} is below the AR order {}",
            ar.len()
        )));
    }
    let n = l + 1;
    let mut delta = vec![0.0; n];
    delta[0] = 1.0;
    if ar.is_empty() {
        return Ok(CoeffSeq(delta));
    }
    let base = lag_d_coeffs(d, n)?;
    let mut power = base.clone();
    for (k, &phi_k) in ar.iter().enumerate() {
        if k > 0 {
            power = convolve_truncated(&power, &base, n);
        }
        for (dj, pj) in delta.iter_mut().zip(&power) {
            *dj -= phi_k * pj;
        }
    }
    Ok(CoeffSeq(delta))
}

/// MA weights of the truncated inverse of an AR polynomial with
/// `delta[0] == 1`: `(delta * omega)_j = 1{j = 0}` for `j < n`.
pub fn invert_ar(delta: &[f64], n: usize) -> Result<CoeffSeq> {
    if delta.first().copied() != Some(1.0) {
        return Err(Error::InvalidInput(
            "AR polynomial must be normalized with delta_0 = 1".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidInput("length n must be at least 1".into()));
    }
    let mut omega = vec![0.0; n];
    omega[0] = 1.0;
    for j in 1..n {
        let mut s = 0.0;
        for k in 1..=j.min(delta.len() - 1) {
            s += delta[k] * omega[j - k];
        }
        omega[j] = -s;
    }
    Ok(CoeffSeq(omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_abs_diff_eq!(x, y, epsilon = tol);
        }
    }

    #[test]
    fn pi_examples() {
        close(&pi_coeffs(1.0, 4).unwrap(), &[1.0, -1.0, 0.0, 0.0], 0.0);
        close(&pi_coeffs(0.0, 3).unwrap(), &[1.0, 0.0, 0.0], 0.0);
        close(&pi_coeffs(0.5, 3).unwrap(), &[1.0, -0.5, -0.125], 1e-15);
    }

    #[test]
    fn phi_int_examples() {
        close(&phi_int_coeffs(1.0, 4).unwrap(), &[1.0; 4], 0.0);
        close(&phi_int_coeffs(0.5, 3).unwrap(), &[1.0, 0.5, 0.375], 1e-15);
        let n = 9;
        let conv = convolve_truncated(
            &pi_coeffs(0.37, n).unwrap(),
            &phi_int_coeffs(0.37, n).unwrap(),
            n,
        );
        close(&conv, &CoeffSeq::impulse(n), 1e-15);
    }

    #[test]
    fn order_errors() {
        assert!(pi_coeffs(f64::NAN, 3).is_err());
        assert!(pi_coeffs(0.3, 0).is_err());
        assert!(phi_int_coeffs(f64::INFINITY, 3).is_err());
        assert!(fracdiff(&[], 0.4).is_err());
    }

    #[test]
    fn fracdiff_examples() {
        close(
            &fracdiff(&[5.0, 5.0, 5.0], 0.0).unwrap(),
            &[5.0, 5.0, 5.0],
            0.0,
        );
        close(
            &fracdiff(&[1.0, 2.0, 3.0], 1.0).unwrap(),
            &[1.0, 1.0, 1.0],
            0.0,
        );
        close(
            &fracdiff(&[1.0, 2.0, 3.0], 0.4).unwrap(),
            &[1.0, 1.6, 2.08],
            1e-14,
        );
    }

    #[test]
    fn frac_ar_expand_examples() {
        close(
            &frac_ar_expand(0.7, &[], 3).unwrap(),
            &[1.0, 0.0, 0.0, 0.0],
            0.0,
        );
        close(
            &frac_ar_expand(1.0, &[0.6], 2).unwrap(),
            &[1.0, -0.6, 0.0],
            1e-15,
        );
        close(
            &frac_ar_expand(0.5, &[0.8], 2).unwrap(),
            &[1.0, -0.4, -0.1],
            1e-15,
        );
        assert!(frac_ar_expand(0.5, &[0.3, 0.2], 1).is_err());
    }

    #[test]
    fn invert_ar_examples() {
        close(&invert_ar(&[1.0], 3).unwrap(), &[1.0, 0.0, 0.0], 0.0);
        close(
            &invert_ar(&[1.0, -0.5], 3).unwrap(),
            &[1.0, 0.5, 0.25],
            1e-15,
        );
        close(
            &invert_ar(&[1.0, -0.4, -0.1], 3).unwrap(),
            &[1.0, 0.4, 0.26],
            1e-15,
        );
        assert!(invert_ar(&[2.0, 1.0], 3).is_err());
    }

    #[test]
    fn varsigma_examples() {
        let d = 0.63;
        let s1 = varsigma_coeffs(d, 1, 6).unwrap();
        let pi = pi_coeffs(d, 6).unwrap();
        assert_eq!(s1[0], 0.0);
        for i in 1..6 {
            assert_abs_diff_eq!(s1[i], -pi[i], epsilon = 0.0);
        }
        close(
            &varsigma_coeffs(1.0, 2, 4).unwrap(),
            &[0.0, 0.0, 1.0, 0.0],
            0.0,
        );
        close(
            &varsigma_coeffs(0.5, 2, 3).unwrap(),
            &[0.0, 0.0, 0.25],
            1e-15,
        );
        assert!(varsigma_coeffs(0.5, 0, 3).is_err());
        assert!(varsigma_coeffs(0.5, 4, 3).is_err());
    }

    #[test]
    fn varsigma_table_matches_direct() {
        let t = VarsigmaTable::new(1.37, 5, 12).unwrap();
        for k in 1..=5 {
            let direct = varsigma_coeffs(1.37, k, 12).unwrap();
            close(t.row(k), &direct, 1e-13);
            assert_abs_diff_eq!(t.get(k, k), 1.37f64.powi(k as i32), epsilon = 1e-12);
        }
    }

    #[test]
    fn pi_negative_and_partial_sums_shrink() {
        let pi = pi_coeffs(0.4, 400).unwrap();
        assert!(pi.iter().skip(1).all(|&p| p < 0.0));
        let mut partial = 0.0;
        let mut last = f64::INFINITY;
        for p in pi.iter() {
            partial += p;
            assert!(partial >= 0.0 && partial < last);
            last = partial;
        }
        assert!(last < 0.1);
    }
}
