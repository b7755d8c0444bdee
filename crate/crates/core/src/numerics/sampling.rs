use rand_distr::{Beta, Distribution};

use super::SeededRng;
use crate::error::{bail, Result};

/// Complementary error function, Chebyshev fit with relative error below 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability mass of `N(mean, std²)` inside `[lo, hi]`.
pub fn normal_interval_mass(mean: f64, std: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mean) / std;
    let b = (hi - mean) / std;
    // Evaluate in whichever tail keeps the difference well conditioned.
    if a > 0.0 {
        normal_cdf(-a) - normal_cdf(-b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    }
}

/// Draw from `N(mean, std²)` conditioned on `[lo, hi]`, by rejection.
pub fn sample_truncated_normal(mean: f64, std: f64, lo: f64, hi: f64, rng: &mut SeededRng) -> Result<f64> {
    if !(lo < hi) {
        bail!(InvalidArgument, "truncation interval [{lo}, {hi}] is empty");
    }
    if !(std > 0.0) || !mean.is_finite() {
        bail!(InvalidArgument, "truncated normal needs finite mean and std > 0, got ({mean}, {std})");
    }
    let mass = normal_interval_mass(mean, std, lo, hi);
    if mass < 1e-12 {
        bail!(InvalidArgument, "interval [{lo}, {hi}] carries mass {mass:e} under N({mean}, {std}²)");
    }
    loop {
        let x = mean + std * rng.normal();
        if (lo..=hi).contains(&x) {
            return Ok(x);
        }
    }
}

/// Draw from the symmetric `Beta(alpha, alpha)`.
pub fn sample_beta(alpha: f64, rng: &mut SeededRng) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        bail!(InvalidArgument, "Beta parameter must be positive, got {alpha}");
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    Ok(beta.sample(rng).clamp(0.0, 1.0))
}

/// Draw an index with probability proportional to `probs`.
pub fn sample_categorical(probs: &[f64], rng: &mut SeededRng) -> Result<usize> {
    if probs.is_empty() {
        bail!(InvalidArgument, "empty categorical distribution");
    }
    if let Some(bad) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        bail!(InvalidArgument, "categorical probability {bad} is negative or non-finite");
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        bail!(InvalidArgument, "categorical probabilities sum to zero");
    }
    let u = rng.uniform() * total;
    let mut cum = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return Ok(k);
        }
    }
    // Rounding left `u` past the last partial sum.
    Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
}
