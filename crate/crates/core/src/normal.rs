//! Standard normal distribution helpers.

use libm::erfc;
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `1 - cdf(x)`, computed without cancellation.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard normal quantile. Returns `-inf`/`inf` at 0 and 1.
pub fn quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub(crate) fn standard() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

/// Two-sided 5% critical value.
pub const Z_975: f64 = 1.959_963_984_540_054;
