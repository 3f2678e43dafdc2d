//! Monte-Carlo generation of AR(1) path pairs and their empirical correlation.
//!
//! Every replication draws from its own ChaCha8 stream: the generator is
//! seeded from the user seed and the stream id is the replication index. Output
//! is therefore independent of thread count and scheduling. Normals are drawn
//! by inverse CDF from 53-bit uniforms.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::asymptotics::scaling_constant;
use crate::error::{check_alpha, invalid, Error, Result};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GaussianIndependent,
    GaussianCorrelated,
    SecondChaos,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::GaussianIndependent => "gaussian_independent",
            Family::GaussianCorrelated => "gaussian_correlated",
            Family::SecondChaos => "second_chaos",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_independent" => Ok(Family::GaussianIndependent),
            "gaussian_correlated" => Ok(Family::GaussianCorrelated),
            "second_chaos" => Ok(Family::SecondChaos),
            _ => Err(invalid(format!("unknown family '{s}'"))),
        }
    }
}

/// Model for a pair of AR(1) series started at zero.
///
/// For the Gaussian families `beta == alpha` and the weights are empty. For the
/// chaos family `r` is unused and the innovations are
/// `xi = sum_d sigma_d (S_d^2 - 1)`, `eta = sum_d tau_d (T_d^2 - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub family: Family,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
}

impl ModelSpec {
    pub fn independent(n: usize, alpha: f64) -> Result<Self> {
        Self::build(
            Family::GaussianIndependent,
            n,
            alpha,
            alpha,
            0.0,
            vec![],
            vec![],
        )
    }

    pub fn correlated(n: usize, alpha: f64, r: f64) -> Result<Self> {
        Self::build(
            Family::GaussianCorrelated,
            n,
            alpha,
            alpha,
            r,
            vec![],
            vec![],
        )
    }

    pub fn chaos(n: usize, alpha: f64, beta: f64, sigma: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        Self::build(Family::SecondChaos, n, alpha, beta, 0.0, sigma, tau)
    }

    fn build(
        family: Family,
        n: usize,
        alpha: f64,
        beta: f64,
        r: f64,
        sigma: Vec<f64>,
        tau: Vec<f64>,
    ) -> Result<Self> {
        let spec = ModelSpec {
            family,
            n,
            alpha,
            beta,
            r,
            sigma,
            tau,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid(format!("n must be >= 2, got {}", self.n)));
        }
        check_alpha(self.alpha)?;
        check_alpha(self.beta)?;
        match self.family {
            Family::GaussianIndependent | Family::GaussianCorrelated => {
                if self.beta != self.alpha {
                    return Err(invalid("beta must equal alpha for the gaussian families"));
                }
                if !(self.r.is_finite() && self.r.abs() <= 1.0) {
                    return Err(invalid(format!("|r| must be <= 1, got {}", self.r)));
                }
                if self.family == Family::GaussianIndependent && self.r != 0.0 {
                    return Err(invalid("r must be 0 for the independent family"));
                }
            }
            Family::SecondChaos => {
                for (name, w) in [("sigma", &self.sigma), ("tau", &self.tau)] {
                    if w.is_empty() {
                        return Err(invalid(format!("{name} weights must be nonempty")));
                    }
                    if w.iter().any(|v| !v.is_finite()) {
                        return Err(invalid(format!("{name} weights must be finite")));
                    }
                    if w.iter().all(|&v| v == 0.0) {
                        return Err(invalid(format!("{name} weights are all zero")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Same model at a different length.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        let spec = ModelSpec { n, ..self.clone() };
        spec.validate()?;
        Ok(spec)
    }
}

/// Realized paths `X_1..X_n`, `Y_1..Y_n` (with `X_0 = Y_0 = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Generator for replication `index` under `seed`.
pub fn rep_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Standard normal draws by inverse CDF.
pub struct NormalSampler<R> {
    rng: R,
    dist: Normal,
}

impl<R: RngCore> NormalSampler<R> {
    pub fn new(rng: R) -> Self {
        NormalSampler {
            rng,
            dist: normal::standard(),
        }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u = self.uniform();
        self.dist.inverse_cdf(u)
    }

    fn chaos(&mut self, weights: &[f64]) -> f64 {
        weights
            .iter()
            .map(|w| {
                let s = self.normal();
                w * (s * s - 1.0)
            })
            .sum()
    }
}

/// Draw one path pair.
pub fn simulate_pair<R: RngCore>(spec: &ModelSpec, sampler: &mut NormalSampler<R>) -> PathPair {
    let n = spec.n;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let c = (1.0 - spec.r * spec.r).max(0.0).sqrt();
    let (mut xp, mut yp) = (0.0, 0.0);
    for _ in 0..n {
        let (xi, eta) = match spec.family {
            Family::GaussianIndependent => (sampler.normal(), sampler.normal()),
            Family::GaussianCorrelated => {
                let xi = sampler.normal();
                let zeta = sampler.normal();
                (xi, spec.r * xi + c * zeta)
            }
            Family::SecondChaos => (sampler.chaos(&spec.sigma), sampler.chaos(&spec.tau)),
        };
        xp = spec.alpha * xp + xi;
        yp = spec.beta * yp + eta;
        x.push(xp);
        y.push(yp);
    }
    PathPair { x, y }
}

/// Empirical second-moment statistics of a path pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalStats {
    pub z11: f64,
    pub z12: f64,
    pub z22: f64,
    pub theta: f64,
}

/// `Z11`, `Z12`, `Z22` (1/n normalization, means removed) and `theta = Z12/sqrt(Z11 Z22)`.
pub fn empirical_stats(p: &PathPair) -> Result<EmpiricalStats> {
    let n = p.x.len();
    if n < 2 || p.y.len() != n {
        return Err(invalid("paths must have equal length >= 2"));
    }
    let nf = n as f64;
    let mx = p.x.iter().sum::<f64>() / nf;
    let my = p.y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in p.x.iter().zip(&p.y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let (z11, z12, z22) = (sxx / nf, sxy / nf, syy / nf);
    if !(z11 > 0.0 && z22 > 0.0) {
        return Err(Error::Degenerate(format!(
            "zero empirical variance (z11={z11}, z22={z22})"
        )));
    }
    let theta = (z12 / (z11.sqrt() * z22.sqrt())).clamp(-1.0, 1.0);
    Ok(EmpiricalStats {
        z11,
        z12,
        z22,
        theta,
    })
}

/// Statistics of replication `index`, redrawing on degenerate samples.
/// Returns the statistics and the number of redraws.
pub fn replicate(spec: &ModelSpec, seed: u64, index: u64) -> Result<(EmpiricalStats, u32)> {
    const MAX_REDRAWS: u32 = 16;
    let mut sampler = NormalSampler::new(rep_rng(seed, index));
    for redraws in 0..=MAX_REDRAWS {
        match empirical_stats(&simulate_pair(spec, &mut sampler)) {
            Ok(s) => return Ok((s, redraws)),
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Degenerate(format!(
        "replication {index} degenerate after {MAX_REDRAWS} redraws"
    )))
}

/// Run `reps` replications in parallel, in replication order.
pub fn sample_stats(
    spec: &ModelSpec,
    reps: usize,
    seed: u64,
) -> Result<(Vec<EmpiricalStats>, u64)> {
    spec.validate()?;
    if reps == 0 {
        return Err(invalid("reps must be >= 1"));
    }
    let draws: Vec<(EmpiricalStats, u32)> = (0..reps as u64)
        .into_par_iter()
        .map(|i| replicate(spec, seed, i))
        .collect::<Result<_>>()?;
    let redraws = draws.iter().map(|d| d.1 as u64).sum();
    Ok((draws.into_iter().map(|d| d.0).collect(), redraws))
}

/// Draws of `theta_n`, or of its standardized form when `scaled`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSampleSet {
    pub spec: ModelSpec,
    pub seed: u64,
    pub scaled: bool,
    pub values: Vec<f64>,
    pub redraws: u64,
}

/// `c * sqrt(n) * (theta - r)` with the family's standardizing constant `c`.
pub fn scale_theta(spec: &ModelSpec, theta: f64) -> Result<f64> {
    let c = scaling_constant(spec.family, spec.alpha, spec.beta, spec.r)?;
    let centre = if spec.family == Family::GaussianCorrelated {
        spec.r
    } else {
        0.0
    };
    Ok(c * (spec.n as f64).sqrt() * (theta - centre))
}

pub fn sample_theta(
    spec: &ModelSpec,
    reps: usize,
    seed: u64,
    scale: bool,
) -> Result<ThetaSampleSet> {
    let (stats, redraws) = sample_stats(spec, reps, seed)?;
    let values = if scale {
        let c = scaling_constant(spec.family, spec.alpha, spec.beta, spec.r)?;
        let centre = if spec.family == Family::GaussianCorrelated {
            spec.r
        } else {
            0.0
        };
        let rn = (spec.n as f64).sqrt();
        stats.iter().map(|s| c * rn * (s.theta - centre)).collect()
    } else {
        stats.iter().map(|s| s.theta).collect()
    };
    Ok(ThetaSampleSet {
        spec: spec.clone(),
        seed,
        scaled: scale,
        values,
        redraws,
    })
}

/// Mean and standard error of the mean.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Unbiased sample variance.
pub fn sample_variance(v: &[f64]) -> f64 {
    let (_, se) = mean_se(v);
    se * se * v.len() as f64
}
