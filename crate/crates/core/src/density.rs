//! Density approximation from raw moments by Legendre projection.
//!
//! With `t = (2x - a - b)/(b - a)` mapping the support onto [-1, 1], the
//! density of `t` is approximated by `sum_j c_j P_j(t)` with
//! `c_j = (2j + 1)/2 * E[P_j(T)]`. The expectation expands in the raw moments
//! of `x` through the binomial theorem.

use serde::Serialize;

use crate::error::{invalid, Result};

/// Legendre series on `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityApprox {
    pub support: (f64, f64),
    pub coeffs: Vec<f64>,
    pub order: usize,
}

/// Default support for `sqrt(n) * theta_n`.
pub const DEFAULT_SUPPORT: (f64, f64) = (-5.0, 5.0);

/// Default number of grid points for tabulation.
pub const DEFAULT_GRID_POINTS: usize = 401;

/// Monomial coefficients of `P_0..=P_k`, row `j` holding `P_j`.
fn legendre_monomials(k: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    rows.push(vec![1.0]);
    if k >= 1 {
        rows.push(vec![0.0, 1.0]);
    }
    for j in 2..=k {
        // j P_j = (2j - 1) t P_{j-1} - (j - 1) P_{j-2}
        let mut p = vec![0.0; j + 1];
        for (i, &c) in rows[j - 1].iter().enumerate() {
            p[i + 1] += (2 * j - 1) as f64 * c;
        }
        for (i, &c) in rows[j - 2].iter().enumerate() {
            p[i] -= (j - 1) as f64 * c;
        }
        for c in &mut p {
            *c /= j as f64;
        }
        rows.push(p);
    }
    rows
}

/// Raw moments of `t = (x - mid)/half` from raw moments of `x`.
fn rescaled_moments(moments: &[f64], mid: f64, half: f64) -> Vec<f64> {
    let k = moments.len();
    let mut out = vec![0.0; k];
    // E[(x - mid)^i] = sum_p C(i, p) E[x^p] (-mid)^(i - p)
    for (i, slot) in out.iter_mut().enumerate() {
        let mut binom = 1.0;
        let mut acc = 0.0;
        for (p, m) in moments[..=i].iter().enumerate() {
            acc += binom * m * (-mid).powi((i - p) as i32);
            binom = binom * (i - p) as f64 / (p + 1) as f64;
        }
        *slot = acc / half.powi(i as i32);
    }
    out
}

/// Project the moment sequence `m_0..=m_K` onto Legendre polynomials on `support`.
pub fn legendre_from_moments(moments: &[f64], support: (f64, f64)) -> Result<DensityApprox> {
    if moments.is_empty() {
        return Err(invalid("at least one moment (m0 = 1) is required"));
    }
    let (a, b) = support;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(invalid(format!("degenerate support [{a}, {b}]")));
    }
    if let Some(i) = moments.iter().position(|m| !m.is_finite()) {
        return Err(invalid(format!("moment {i} is not finite")));
    }
    if (moments[0] - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("m0 must be 1, got {}", moments[0])));
    }
    let order = moments.len() - 1;
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mu = rescaled_moments(moments, mid, half);
    let coeffs = legendre_monomials(order)
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let e: f64 = p.iter().zip(&mu).map(|(c, m)| c * m).sum();
            (2 * j + 1) as f64 / 2.0 * e
        })
        .collect();
    Ok(DensityApprox {
        support,
        coeffs,
        order,
    })
}

impl DensityApprox {
    /// Density at `x`; zero outside the support. Clenshaw recurrence.
    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = self.support;
        if !(a..=b).contains(&x) {
            return 0.0;
        }
        let t = (2.0 * x - a - b) / (b - a);
        let (mut b1, mut b2) = (0.0, 0.0);
        for j in (0..self.coeffs.len()).rev() {
            // P_{j+1} = alpha_j(t) P_j + beta_{j+1} P_{j-1}
            let alpha = (2 * j + 1) as f64 / (j + 1) as f64 * t;
            let beta = -((j + 1) as f64) / (j + 2) as f64;
            let bk = self.coeffs[j] + alpha * b1 + beta * b2;
            b2 = b1;
            b1 = bk;
        }
        b1 * 2.0 / (b - a)
    }

    /// `points` evenly spaced `(x, density)` pairs spanning the support.
    pub fn grid(&self, points: usize) -> Vec<(f64, f64)> {
        let (a, b) = self.support;
        match points {
            0 => Vec::new(),
            1 => vec![(0.5 * (a + b), self.eval(0.5 * (a + b)))],
            _ => (0..points)
                .map(|i| {
                    let x = a + (b - a) * i as f64 / (points - 1) as f64;
                    (x, self.eval(x))
                })
                .collect(),
        }
    }

    /// Maximal runs of grid points (out of `points`) where the series is
    /// negative, as `(first, last)` abscissae.
    pub fn negative_lobes(&self, points: usize) -> Vec<(f64, f64)> {
        let mut lobes = Vec::new();
        let mut run: Option<(f64, f64)> = None;
        for (x, y) in self.grid(points) {
            if y < 0.0 {
                run = Some(run.map_or((x, x), |(s, _)| (s, x)));
            } else if let Some(r) = run.take() {
                lobes.push(r);
            }
        }
        lobes.extend(run);
        lobes
    }

    /// `int x^k f(x) dx` over the support for `k = 0..=kmax`, by Gauss-Legendre.
    pub fn moments(&self, kmax: usize) -> Vec<f64> {
        let (a, b) = self.support;
        let rule = crate::quadrature::GaussLegendre::new(self.order / 2 + kmax / 2 + 8);
        let mut out = vec![0.0; kmax + 1];
        for (x, w) in rule.on(a, b) {
            let f = self.eval(x) * w;
            let mut xp = 1.0;
            for slot in out.iter_mut() {
                *slot += f * xp;
                xp *= x;
            }
        }
        out
    }
}

/// Free-function form of [`DensityApprox::eval`].
pub fn evaluate_density(d: &DensityApprox, x: f64) -> f64 {
    d.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;

    fn uniform_moments(k: usize) -> Vec<f64> {
        (0..=k)
            .map(|i| {
                if i % 2 == 0 {
                    1.0 / (i + 1) as f64
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn uniform_is_flat() {
        let d = legendre_from_moments(&uniform_moments(10), (-1.0, 1.0)).unwrap();
        assert!((d.coeffs[0] - 0.5).abs() < 1e-12);
        for c in &d.coeffs[1..] {
            assert!(c.abs() < 1e-12, "{c}");
        }
        assert!((d.eval(0.0) - 0.5).abs() < 1e-12);
        assert!((d.eval(0.73) - 0.5).abs() < 1e-12);
        assert_eq!(d.eval(1.5), 0.0);
        assert_eq!(d.coeffs.len(), d.order + 1);
    }

    #[test]
    fn normal_moments() {
        let m = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0, 0.0, 105.0, 0.0, 945.0];
        let d = legendre_from_moments(&m, (-6.0, 6.0)).unwrap();
        let worst = (0..=600)
            .map(|i| -3.0 + 6.0 * i as f64 / 600.0)
            .map(|x| (d.eval(x) - normal::pdf(x)).abs())
            .fold(0.0, f64::max);
        // Truncation error of the order-10 projection, from an independent
        // computation of the exact coefficients.
        assert!((worst - 0.022516763).abs() < 1e-6, "{worst}");
    }

    #[test]
    fn reproduces_input_moments() {
        let m = [
            1.0, 0.0, 1.038702, 0.0, 3.026394, 0.0, 13.8, 0.0, 83.03, 0.0, 607.46,
        ];
        let d = legendre_from_moments(&m, DEFAULT_SUPPORT).unwrap();
        let back = d.moments(10);
        for (k, (a, b)) in back.iter().zip(&m).enumerate() {
            let err = if b.abs() > 0.0 {
                ((a - b) / b).abs()
            } else {
                a.abs()
            };
            assert!(err < 1e-6, "k={k}: {a} vs {b}");
        }
    }

    #[test]
    fn even_moments_give_even_density() {
        let m = [1.0, 0.0, 1.2, 0.0, 4.0, 0.0, 20.0];
        let d = legendre_from_moments(&m, (-4.0, 4.0)).unwrap();
        for i in 0..50 {
            let x = 0.08 * i as f64;
            assert!((d.eval(x) - d.eval(-x)).abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_support() {
        // Uniform on [2, 5].
        let m: Vec<f64> = (0..6)
            .map(|k| (5f64.powi(k + 1) - 2f64.powi(k + 1)) / (3.0 * (k + 1) as f64))
            .collect();
        let d = legendre_from_moments(&m, (2.0, 5.0)).unwrap();
        assert!((d.eval(3.3) - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(legendre_from_moments(&[], (-1.0, 1.0)).is_err());
        assert!(legendre_from_moments(&[1.0], (1.0, 1.0)).is_err());
        assert!(legendre_from_moments(&[0.9, 0.0], (-1.0, 1.0)).is_err());
        assert!(legendre_from_moments(&[1.0, f64::NAN], (-1.0, 1.0)).is_err());
    }

    #[test]
    fn negative_lobes_reported() {
        // Two-point mass at +-0.9 forces oscillation.
        let m: Vec<f64> = (0..=8)
            .map(|k| if k % 2 == 0 { 0.9f64.powi(k) } else { 0.0 })
            .collect();
        let d = legendre_from_moments(&m, (-1.0, 1.0)).unwrap();
        assert!(!d.negative_lobes(401).is_empty());
    }
}
