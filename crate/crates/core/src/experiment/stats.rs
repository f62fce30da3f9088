use rand::Rng;
use statrs::distribution::{Binomial, Discrete};

use crate::{Error, Result};

/// Two-sided exact sign test on paired differences `a - b`, ties dropped.
pub fn sign_test(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 5 {
        return Err(Error::Domain(format!(
            "sign test needs at least 5 pairs, got {}",
            a.len()
        )));
    }
    let (mut pos, mut neg) = (0u64, 0u64);
    for (x, y) in a.iter().zip(b) {
        if x > y {
            pos += 1;
        } else if x < y {
            neg += 1;
        }
    }
    let n = pos + neg;
    if n == 0 {
        return Err(Error::UndefinedTest("all pairs tied".into()));
    }
    let binom = Binomial::new(0.5, n).map_err(|e| Error::Domain(e.to_string()))?;
    let k = pos.min(neg);
    let tail: f64 = (0..=k).map(|i| binom.pmf(i)).sum();
    Ok((2.0 * tail).min(1.0))
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_mean_ci<R: Rng + ?Sized>(
    values: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if values.is_empty() || resamples == 0 {
        return Err(Error::Domain("bootstrap needs data and at least one resample".into()));
    }
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let at = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Ok((at(alpha), at(1.0 - alpha)))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
