//! Distances to the standard normal, rate fitting, standardizing constants,
//! chaos-model variance constants and power of the independence test.

use serde::Serialize;

use crate::error::{check_alpha, invalid, Error, Result};
use crate::normal;
use crate::simulation::{sample_stats, sample_theta, EmpiricalStats, Family, ModelSpec};

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(invalid("empty sample"));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(invalid("sample contains NaN"));
    }
    let mut v = samples.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v)
}

/// `sup_z |F_N(z) - Phi(z)|` for the empirical CDF `F_N`.
pub fn kolmogorov_distance(samples: &[f64]) -> Result<f64> {
    let v = sorted(samples)?;
    let n = v.len() as f64;
    Ok(v.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let p = normal::cdf(x);
        d.max((i as f64 + 1.0) / n - p).max(p - i as f64 / n)
    }))
}

/// `(1/N) sum_i |x_(i) - Phi^{-1}((i - 1/2)/N)|`.
pub fn wasserstein1_distance(samples: &[f64]) -> Result<f64> {
    let v = sorted(samples)?;
    let n = v.len() as f64;
    Ok(v.iter()
        .enumerate()
        .map(|(i, &x)| (x - normal::quantile((i as f64 + 0.5) / n)).abs())
        .sum::<f64>()
        / n)
}

/// Constant `c` such that `c * sqrt(n) * (theta_n - centre)` is asymptotically standard normal.
pub fn scaling_constant(family: Family, alpha: f64, beta: f64, r: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let a2 = alpha * alpha;
    match family {
        Family::GaussianIndependent => Ok(((1.0 - a2) / (1.0 + a2)).sqrt()),
        Family::GaussianCorrelated => {
            if !(r.abs() < 1.0) {
                return Err(Error::Degenerate(format!(
                    "|r| = {} leaves no fluctuation",
                    r.abs()
                )));
            }
            Ok(((1.0 - a2) / (1.0 + a2)).sqrt() / (1.0 - r * r))
        }
        Family::SecondChaos => {
            check_alpha(beta)?;
            let ab = alpha * beta;
            Ok(((1.0 - ab) / (1.0 + ab)).sqrt())
        }
    }
}

/// Kolmogorov and Wasserstein distances of the standardized statistic at one `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub distance_kol: f64,
    pub distance_w1: f64,
    pub scaled_const: f64,
}

pub fn rate_rows(
    template: &ModelSpec,
    ns: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<RateRow>> {
    ns.iter()
        .map(|&n| {
            let spec = template.with_n(n)?;
            let s = sample_theta(&spec, reps, seed, true)?;
            Ok(RateRow {
                n,
                distance_kol: kolmogorov_distance(&s.values)?,
                distance_w1: wasserstein1_distance(&s.values)?,
                scaled_const: scaling_constant(spec.family, spec.alpha, spec.beta, spec.r)?,
            })
        })
        .collect()
}

/// Least-squares fit of `ln d = slope * ln n + intercept`.
///
/// `residual` is the largest absolute log-space residual. `log_corrected` holds
/// `d * sqrt(n / ln n)` and `log_corrected_spread` its max/min ratio in log
/// space, a diagnostic for the `sqrt(ln n / n)` rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub ns: Vec<usize>,
    pub distances: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub log_corrected: Vec<f64>,
    pub log_corrected_spread: f64,
}

pub fn fit_rate(ns: &[usize], distances: &[f64]) -> Result<RateFit> {
    if ns.len() != distances.len() {
        return Err(invalid("ns and distances differ in length"));
    }
    if ns.len() < 2 {
        return Err(invalid("need at least two points to fit a rate"));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] < 2 {
        return Err(invalid("ns must be strictly increasing and >= 2"));
    }
    if distances.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(invalid("distances must be positive"));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = distances.iter().map(|d| d.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    let log_corrected: Vec<f64> = ns
        .iter()
        .zip(distances)
        .map(|(&n, d)| d * (n as f64 / (n as f64).ln()).sqrt())
        .collect();
    let hi = log_corrected.iter().cloned().fold(f64::MIN, f64::max);
    let lo = log_corrected.iter().cloned().fold(f64::MAX, f64::min);
    Ok(RateFit {
        ns: ns.to_vec(),
        distances: distances.to_vec(),
        slope,
        intercept,
        residual,
        log_corrected,
        log_corrected_spread: (hi / lo).ln(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Kolmogorov,
    Wasserstein,
}

/// Simulate each `n` and fit the chosen distance.
pub fn rate_fit(
    template: &ModelSpec,
    ns: &[usize],
    reps: usize,
    seed: u64,
    distance: Distance,
) -> Result<RateFit> {
    if ns.len() < 4 {
        return Err(invalid("rate fitting needs at least four sample sizes"));
    }
    let rows = rate_rows(template, ns, reps, seed)?;
    let d: Vec<f64> = rows
        .iter()
        .map(|r| match distance {
            Distance::Kolmogorov => r.distance_kol,
            Distance::Wasserstein => r.distance_w1,
        })
        .collect();
    fit_rate(ns, &d)
}

/// Variance constants of the chaos model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct ChaosConstants {
    pub M3: f64,
    pub M4: f64,
    pub M5: f64,
    pub C25: f64,
    pub C26: f64,
}

impl ChaosConstants {
    /// Bound on `|E[(sqrt(n) Z12)^2] - 4 M3|`.
    pub fn bound(&self, n: usize) -> f64 {
        (4.0 * self.C25 + 12.0 * self.C26) / n as f64
    }
}

pub fn chaos_constants(
    alpha: f64,
    beta: f64,
    sigma: &[f64],
    tau: &[f64],
) -> Result<ChaosConstants> {
    check_alpha(alpha)?;
    check_alpha(beta)?;
    if sigma.is_empty() || tau.is_empty() {
        return Err(invalid("weight sequences must be nonempty"));
    }
    let s2: f64 = sigma.iter().map(|v| v * v).sum();
    let t2: f64 = tau.iter().map(|v| v * v).sum();
    let s4: f64 = sigma.iter().map(|v| v.powi(4)).sum();
    let t4: f64 = tau.iter().map(|v| v.powi(4)).sum();
    let (a2, b2, ab) = (alpha * alpha, beta * beta, alpha * beta);
    let st = s2 * t2;

    let m3 = (1.0 + ab) / ((1.0 - ab) * (1.0 - a2) * (1.0 - b2)) * st;
    let c25 = (a2 + b2 - 2.0 * a2 * b2) / ((1.0 - a2).powi(2) * (1.0 - b2).powi(2)) * st
        + 2.0 * ab.abs() / ((1.0 - ab) * (1.0 - a2) * (1.0 - b2))
            * (a2 / (1.0 - a2) + b2 / (1.0 - b2) + 1.0 / (1.0 - ab.abs()))
            * st;
    let c26 = (2.0 + 2.0 * alpha.abs()) * (2.0 + 2.0 * beta.abs())
        / ((1.0 - alpha) * (1.0 - a2) * (1.0 - beta) * (1.0 - b2))
        * st;
    let m4 = 36.0 / (1.0 - a2).powi(2) * s4 + 4.0 * (1.0 + a2) / (1.0 - a2).powi(3) * s2 * s2;
    let m5 = 36.0 / (1.0 - b2).powi(2) * t4 + 4.0 * (1.0 + b2) / (1.0 - b2).powi(3) * t2 * t2;
    Ok(ChaosConstants {
        M3: m3,
        M4: m4,
        M5: m5,
        C25: c25,
        C26: c26,
    })
}

/// Monte-Carlo summary of the chaos model at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChaosCheck {
    pub n: usize,
    pub reps: usize,
    pub var_scaled_theta: f64,
    pub theta_target: f64,
    pub second_moment_z12: f64,
    pub second_moment_z12_se: f64,
    pub var_z12: f64,
    pub z12_target: f64,
    pub bound: f64,
}

pub fn chaos_check(spec: &ModelSpec, reps: usize, seed: u64) -> Result<ChaosCheck> {
    let (stats, _) = sample_stats(spec, reps, seed)?;
    chaos_summary(spec, &stats)
}

/// [`chaos_check`] over statistics already drawn from `spec`.
pub fn chaos_summary(spec: &ModelSpec, stats: &[EmpiricalStats]) -> Result<ChaosCheck> {
    if spec.family != Family::SecondChaos {
        return Err(invalid("chaos summary needs the second_chaos family"));
    }
    if stats.len() < 2 {
        return Err(invalid("need at least two replications"));
    }
    let k = chaos_constants(spec.alpha, spec.beta, &spec.sigma, &spec.tau)?;
    let reps = stats.len();
    let rn = (spec.n as f64).sqrt();
    let th: Vec<f64> = stats.iter().map(|s| rn * s.theta).collect();
    let z: Vec<f64> = stats.iter().map(|s| rn * s.z12).collect();
    let z2: Vec<f64> = z.iter().map(|v| v * v).collect();
    let (m2, se) = crate::simulation::mean_se(&z2);
    let ab = spec.alpha * spec.beta;
    Ok(ChaosCheck {
        n: spec.n,
        reps,
        var_scaled_theta: crate::simulation::sample_variance(&th),
        theta_target: (1.0 + ab) / (1.0 - ab),
        second_moment_z12: m2,
        second_moment_z12_se: se,
        var_z12: crate::simulation::sample_variance(&z),
        z12_target: 4.0 * k.M3,
        bound: k.bound(spec.n),
    })
}

/// Calibrated critical value `z_{0.975} sqrt((1 + a^2)/(1 - a^2))` for a 5% test.
pub fn ca_auto(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let a2 = alpha * alpha;
    Ok(normal::Z_975 * ((1.0 + a2) / (1.0 - a2)).sqrt())
}

/// Lower bound on the power of the test rejecting when `|sqrt(n) theta_n| > c_a`.
///
/// `c13` is the constant of the correlated-case rate; it is not known in closed
/// form, and `c13 = 0` gives the normal-approximation power.
pub fn power_lower_bound(n: usize, alpha: f64, r: f64, c_a: f64, c13: f64) -> Result<f64> {
    if n < 2 {
        return Err(invalid("n must be >= 2"));
    }
    if !(c_a > 0.0) {
        return Err(invalid("c_a must be positive"));
    }
    let kappa = scaling_constant(Family::GaussianCorrelated, alpha, alpha, r)?;
    let nf = n as f64;
    let rn = nf.sqrt() * r;
    Ok(
        normal::sf(kappa * (c_a - rn)) + normal::sf(kappa * (c_a + rn))
            - 2.0 * c13 * (nf.ln() / nf).sqrt(),
    )
}

/// Fraction of correlated-model replications with `|sqrt(n) theta_n| > c_a`.
pub fn mc_power(n: usize, alpha: f64, r: f64, c_a: f64, reps: usize, seed: u64) -> Result<f64> {
    let spec = ModelSpec::correlated(n, alpha, r)?;
    let s = sample_theta(&spec, reps, seed, false)?;
    let rn = (n as f64).sqrt();
    let hits = s.values.iter().filter(|t| (rn * **t).abs() > c_a).count();
    Ok(hits as f64 / reps as f64)
}
