//! Binomial confidence intervals.

use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::types::Interval;

fn check(k: u64, n: u64, confidence: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InsufficientData("binomial interval needs n >= 1".into()));
    }
    if k > n {
        return Err(Error::OutOfRange(format!("k = {k} exceeds n = {n}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::OutOfRange(format!("confidence {confidence} not in (0, 1)")));
    }
    Ok(())
}

/// Two-sided standard normal quantile for a confidence level.
pub fn normal_quantile(confidence: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

pub fn wilson_ci(k: u64, n: u64, confidence: f64) -> Result<Interval> {
    check(k, n, confidence)?;
    let z = normal_quantile(confidence);
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0).min(p) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0).max(p) };
    Ok(Interval::new(lo, hi))
}

pub fn clopper_pearson_ci(k: u64, n: u64, confidence: f64) -> Result<Interval> {
    check(k, n, confidence)?;
    let tail = (1.0 - confidence) / 2.0;
    let nf = n as f64;
    let kf = k as f64;
    let beta_quantile = |a: f64, b: f64, q: f64| -> Result<f64> {
        Ok(Beta::new(a, b)
            .map_err(|e| Error::OutOfRange(e.to_string()))?
            .inverse_cdf(q))
    };
    // closed forms at the boundaries avoid bisection error
    let lo = match k {
        0 => 0.0,
        _ if k == n => tail.powf(1.0 / nf),
        _ => beta_quantile(kf, nf - kf + 1.0, tail)?,
    };
    let hi = match k {
        _ if k == n => 1.0,
        0 => 1.0 - tail.powf(1.0 / nf),
        _ => beta_quantile(kf + 1.0, nf - kf, 1.0 - tail)?,
    };
    let p = kf / nf;
    Ok(Interval::new(lo.min(p), hi.max(p)))
}
