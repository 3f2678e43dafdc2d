//! The kernel matrix `K_n` of the bilinear form `Z12 = Ξᵀ K_n H`, its
//! spectrum, and closed-form spectral identities and bounds.

use serde::Serialize;

use crate::error::{check_alpha, invalid, Error, Result};

/// Dense symmetric `n × n` kernel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub n: usize,
    pub alpha: f64,
    entries: Vec<f64>,
}

impl KernelMatrix {
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[j * self.n + k]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Entry `(j, k)` of `K_n`, both indices 1-based.
pub fn kernel_entry(n: usize, alpha: f64, j: usize, k: usize) -> f64 {
    let nf = n as f64;
    let a2 = 1.0 - alpha * alpha;
    let ap = |e: usize| powu(alpha, e);
    let cov = (ap(j.abs_diff(k)) - ap(j + k)) / a2;
    let mean = (1.0 - ap(k)) * (1.0 - ap(j)) / ((1.0 - alpha) * (1.0 - alpha));
    cov / nf - mean / (nf * nf)
}

pub(crate) fn powu(x: f64, e: usize) -> f64 {
    match i32::try_from(e) {
        Ok(e) => x.powi(e),
        Err(_) => x.powf(e as f64),
    }
}

pub fn build_kernel(n: usize, alpha: f64) -> Result<KernelMatrix> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let mut entries = vec![0.0; n * n];
    for j in 0..n {
        for k in j..n {
            let v = kernel_entry(n, alpha, j + 1, k + 1);
            entries[j * n + k] = v;
            entries[k * n + j] = v;
        }
    }
    Ok(KernelMatrix { n, alpha, entries })
}

/// Eigenvalues (descending) and matching orthonormal eigenvectors, stored
/// column-wise in `vectors` (column `i` pairs with `values[i]`).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub n: usize,
    pub sweeps: usize,
}

impl EigenDecomposition {
    /// `max |Q Λ Qᵀ − A|`.
    pub fn reconstruction_error(&self, a: &[f64]) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    s += self.vectors[r * n + i] * self.values[i] * self.vectors[c * n + i];
                }
                worst = worst.max((s - a[r * n + c]).abs());
            }
        }
        worst
    }
}

const MAX_SWEEPS: usize = 30;

/// Cyclic Jacobi eigensolver for a dense symmetric matrix given row-major.
///
/// Uses the threshold strategy of Rutishauser: during the first three sweeps
/// only rotations with off-diagonal entries above `0.2·S/n²` are applied
/// (`S` the off-diagonal absolute sum); afterwards negligible entries are set
/// to zero outright. Fails after 30 sweeps.
pub fn jacobi_eigen(matrix: &[f64], n: usize) -> Result<EigenDecomposition> {
    if matrix.len() != n * n {
        return Err(invalid("matrix size does not match n"));
    }
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let mut d: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    for sweep in 1..=MAX_SWEEPS {
        let mut sm = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                sm += a[p * n + q].abs();
            }
        }
        if sm == 0.0 {
            return Ok(finish(d, v, n, sweep - 1));
        }
        let tresh = if sweep < 4 {
            0.2 * sm / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 4 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                if apq.abs() <= tresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let hh = t * apq;
                z[p] -= hh;
                z[q] += hh;
                d[p] -= hh;
                d[q] += hh;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let g = a[r * n + p];
                    let h = a[r * n + q];
                    let gp = g - s * (h + g * tau);
                    let hq = h + s * (g - h * tau);
                    a[r * n + p] = gp;
                    a[p * n + r] = gp;
                    a[r * n + q] = hq;
                    a[q * n + r] = hq;
                }
                for r in 0..n {
                    let g = v[r * n + p];
                    let h = v[r * n + q];
                    v[r * n + p] = g - s * (h + g * tau);
                    v[r * n + q] = h + s * (g - h * tau);
                }
            }
        }
        for i in 0..n {
            b[i] += z[i];
            d[i] = b[i];
            z[i] = 0.0;
        }
    }
    Err(Error::NoConvergence {
        op: "jacobi_eigen",
        iterations: MAX_SWEEPS,
    })
}

fn finish(d: Vec<f64>, v: Vec<f64>, n: usize, sweeps: usize) -> EigenDecomposition {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[j].total_cmp(&d[i]));
    let values = idx.iter().map(|&i| d[i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &i) in idx.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + col] = v[r * n + i];
        }
    }
    EigenDecomposition {
        values,
        vectors,
        n,
        sweeps,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// `(Σλ, Σλ², Σλ⁴)`.
    pub power_sums: (f64, f64, f64),
    /// Product of the `n − 1` largest eigenvalues (may underflow for large n).
    pub positive_product: f64,
    /// Sum of logs of the `n − 1` largest eigenvalues.
    pub log_positive_product: f64,
}

pub fn eigen_decompose(k: &KernelMatrix) -> Result<EigenDecomposition> {
    jacobi_eigen(&k.entries, k.n)
}

pub fn eigen_sym(k: &KernelMatrix) -> Result<SpectrumSummary> {
    Ok(summarize(eigen_decompose(k)?.values))
}

fn summarize(eigenvalues: Vec<f64>) -> SpectrumSummary {
    let s1 = eigenvalues.iter().sum();
    let s2 = eigenvalues.iter().map(|l| l * l).sum();
    let s4 = eigenvalues.iter().map(|l| l.powi(4)).sum();
    let pos = &eigenvalues[..eigenvalues.len().saturating_sub(1)];
    let log_positive_product = pos.iter().map(|l| l.ln()).sum();
    let positive_product = pos.iter().product();
    SpectrumSummary {
        eigenvalues,
        power_sums: (s1, s2, s4),
        positive_product,
        log_positive_product,
    }
}

/// Closed-form `Σλ_k` and the correction `κ1(n)` with `Σλ_k = 1/(1−α²) + κ1/n`.
pub fn trace_identity(n: usize, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let nf = n as f64;
    let a2 = alpha * alpha;
    let a2n = powu(alpha, 2 * n);
    let an = powu(alpha, n);
    let kappa1 = -(a2 * (1.0 - a2n) + (1.0 + alpha).powi(2)) / (1.0 - a2).powi(2)
        + (2.0 * alpha * (1.0 + alpha) * (1.0 - an) - a2 * (1.0 - a2n))
            / (nf * (1.0 - alpha).powi(2) * (1.0 - a2));
    Ok((1.0 / (1.0 - a2) + kappa1 / nf, kappa1))
}

/// `Σλ_k² = (1+α²)/(n(1−α²)³) + κ2/n²`, with `κ2` summed term by term.
pub fn squared_sum_identity(n: usize, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let nf = n as f64;
    let a2 = alpha * alpha;
    let om = 1.0 - alpha;
    let oa2 = 1.0 - a2;
    let pw: Vec<f64> = (0..=2 * n).map(|e| powu(alpha, e)).collect();
    let one_minus: Vec<f64> = (0..=n).map(|k| 1.0 - pw[k]).collect();

    let mut cross = 0.0;
    for j in 1..=n {
        let mut row = 0.0;
        for k in 1..=n {
            row += (pw[j.abs_diff(k)] - pw[j + k]) * one_minus[k];
        }
        cross += row * one_minus[j];
    }
    let sq: f64 = one_minus[1..].iter().map(|x| x * x).sum();

    let a_2n2 = powu(alpha, 2 * n + 2);
    let a_4n4 = powu(alpha, 4 * n + 4);
    let kappa2 = 4.0 * nf * a_2n2 / oa2.powi(3)
        - (4.0 * a2 + a2 * a2 - 4.0 * a_2n2 - a_4n4) / oa2.powi(4)
        - 2.0 / nf * cross / (om * om * oa2)
        + sq * sq / (nf * nf * om.powi(4));
    Ok(((1.0 + a2) / (nf * oa2.powi(3)) + kappa2 / (nf * nf), kappa2))
}

/// Numeric `Σλ⁴` from the spectrum and the bound `C3(α)·n⁻³`.
pub fn quartic_sum_bound(n: usize, alpha: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(invalid("n must be at least 2"));
    }
    let spec = eigen_sym(&build_kernel(n, alpha)?)?;
    Ok((
        spec.power_sums.2,
        rate_constants(alpha)?.c3 / (n as f64).powi(3),
    ))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClosedProduct {
    /// `∏_{k<n} λ_k`; underflows to 0 for large n, use `log_product`.
    pub product: f64,
    pub log_product: f64,
    /// `(n−1)·(∏λ_k)^{1/(n−1)}`, bounded below by 1/4.
    pub geomean_stat: f64,
}

/// `∏_{k=1}^{n−1} λ_k = n^{−(n−1)}(1 + α²(n−1)/n − 2α(n−1)/n)`.
pub fn closed_product(n: usize, alpha: f64) -> Result<ClosedProduct> {
    check_alpha(alpha)?;
    if n < 2 {
        return Err(invalid("n must be at least 2"));
    }
    let nf = n as f64;
    let m = nf - 1.0;
    let factor = 1.0 + alpha * alpha * m / nf - 2.0 * alpha * m / nf;
    let log_product = -m * nf.ln() + factor.ln();
    Ok(ClosedProduct {
        product: log_product.exp(),
        log_product,
        geomean_stat: m * (log_product / m).exp(),
    })
}

/// Explicit constants in the eigenvalue bounds and the normal-approximation
/// rates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
}

/// `sup_{n ≥ 1} n α^{2n+2}`.
fn sup_n_alpha_pow(alpha: f64) -> f64 {
    let a = alpha * alpha;
    if a == 0.0 {
        return 0.0;
    }
    // n a^{n+1} increases while n ≤ a/(1−a).
    let peak = (a / (1.0 - a)).floor().max(1.0);
    [peak, peak + 1.0]
        .iter()
        .map(|&n| n * a.powf(n + 1.0))
        .fold(0.0, f64::max)
}

pub fn rate_constants(alpha: f64) -> Result<RateConstants> {
    check_alpha(alpha)?;
    let a = alpha;
    let aa = a.abs();
    let a2 = a * a;
    let om = 1.0 - a;
    let oa2 = 1.0 - a2;

    let c1 = (a2 + (1.0 + a).powi(2)) / oa2.powi(2) + (4.0 * aa + 5.0 * a2) / (om * om * oa2);
    let c2 = 4.0 / oa2.powi(3) * sup_n_alpha_pow(a)
        + (4.0 * a2 + a2 * a2) / oa2.powi(4)
        + 8.0 / (om * om * oa2)
        + 16.0 * aa / ((1.0 - aa) * om * om * oa2)
        + 16.0 / om.powi(4);
    let c3 = (2f64.powf(4.0 / 3.0) / (oa2.powf(4.0 / 3.0) * (1.0 - aa.powf(4.0 / 3.0)))
        + 16.0 / om.powf(8.0 / 3.0))
    .powi(3);
    let c4 = oa2.powi(3) / (1.0 + a2) * (c2 * c2 + c3).sqrt();
    let c5 = 81.0 * ((1.0 + a2) / oa2.powi(3) + c2 / 10.0).powi(2);
    let k = 2.0 * (2.0 / std::f64::consts::PI).sqrt() + 1.0;
    let c6 = (4.0 * k.powi(4) * (oa2 / (1.0 + a2)).sqrt() + 2.0 * k * k * oa2 / (1.0 + a2).sqrt())
        * c5.powf(0.25)
        * (2.0 * (1.0 + a2) / oa2 + oa2 * oa2 * c1 * c1 / 10.0 + oa2 * oa2 * c2 / 5.0).sqrt();
    Ok(RateConstants {
        c1,
        c2,
        c3,
        c4,
        c5,
        c6,
    })
}
