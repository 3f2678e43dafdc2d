//! Joint MGF `φ_n(s11, s12, s22) = (d_n(ρ) d_n(υ))^{−1/2}` and the exact
//! moments of `√n θ_n` obtained by integrating its `s12`-derivatives.
//!
//! The m-th derivative at `s12 = 0` is a jet in `ε = s12`. Writing
//! `ρ, υ = c ∓ √t` with `c = (ρ+υ)/2`, `ln d_n(ρ) + ln d_n(υ)` is even in
//! `√t`, so near the diagonal (small `t`) it is summed as a series in `t`
//! around `c0 = c|_{ε=0}`. That avoids the `t^{1/2−k}` blow-up of the
//! individual jets of `√t`. Away from the diagonal `ρ` and `υ` are
//! evaluated directly.
//!
//! Moments are integrated in the coordinates `u = s11 + s22`,
//! `w = s11/u`. The series coefficients depend on `u` only, so one jet of
//! `d_n` serves a whole row of quadrature nodes.

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::charpoly::{d_n_log_derivative, ln_d_n_generic};
use crate::error::{check_alpha, invalid, Error, Result};
use crate::jet::{Jet, Scalar};
use crate::quadrature::{
    half_line_map, integrate_unit_square, try_integrate_triangle_symmetric, GaussLegendre, Panel,
    QuadOptions, QuadResult,
};

pub const MAX_MOMENT: usize = 10;

/// Arguments of `φ_n`. `r = 0` is the independent model.
#[derive(Debug, Clone)]
pub struct MgfInputs<S> {
    pub s11: f64,
    pub s12: S,
    pub s22: f64,
    pub r: f64,
}

impl<S: Scalar> MgfInputs<S> {
    pub fn new(s11: f64, s12: S, s22: f64, r: f64) -> Result<Self> {
        if !(s11 >= 0.0 && s22 >= 0.0 && s11.is_finite() && s22.is_finite()) {
            return Err(invalid("s11 and s22 must be finite and non-negative"));
        }
        if !(-1.0..=1.0).contains(&r) {
            return Err(invalid(format!("r must lie in [−1, 1], got {r}")));
        }
        let e = s12.value();
        if r == 0.0 && e * e > s11 * s22 * (1.0 + 1e-12) {
            return Err(Error::Domain {
                op: "MgfInputs",
                detail: "s12² exceeds s11·s22".into(),
            });
        }
        Ok(MgfInputs { s11, s12, s22, r })
    }
}

/// `(ρ, υ)`, the negated larger and smaller roots that enter `φ_n`.
pub fn rho_upsilon<S: Scalar>(inp: &MgfInputs<S>) -> Result<(S, S)> {
    let (a, b, r) = (inp.s11, inp.s22, inp.r);
    let e = inp.s12.clone();
    let radicand = (e.clone() + r * a) * (e.clone() + r * b) * 4.0 + (a - b) * (a - b);
    if radicand.value() < 0.0 {
        return Err(Error::Domain {
            op: "rho_upsilon",
            detail: "negative radicand".into(),
        });
    }
    let root = radicand.sqrt();
    let sum = e * (2.0 * r) + (a + b);
    let rho = -(sum.clone() + root.clone()) * 0.5;
    let upsilon = -(sum - root) * 0.5;
    if !(rho.is_all_finite() && upsilon.is_all_finite()) {
        return Err(Error::NonFinite { op: "rho_upsilon" });
    }
    Ok((rho, upsilon))
}

/// `(d_n(ρ) d_n(υ))^{−1/2}`.
pub fn phi_n<S: Scalar>(n: usize, alpha: f64, inp: &MgfInputs<S>) -> Result<S> {
    let (rho, ups) = rho_upsilon(inp)?;
    let g = log_d(n, alpha, &rho)? + log_d(n, alpha, &ups)?;
    let phi = (g * -0.5).exp();
    if phi.is_all_finite() {
        Ok(phi)
    } else {
        Err(Error::NonFinite { op: "phi_n" })
    }
}

fn log_d<S: Scalar>(n: usize, alpha: f64, lambda: &S) -> Result<S> {
    ln_d_n_generic(n, alpha, lambda)
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentResult {
    pub m: usize,
    pub n: usize,
    pub alpha: f64,
    pub r: f64,
    /// `E[(√n θ_n)^m]`.
    pub value: f64,
    pub quad: QuadResult,
}

/// Quadrature settings used by [`moment`] when none are given.
pub fn default_moment_options(m: usize) -> QuadOptions {
    let tol_rel = if m <= 5 { 1e-7 } else { 1e-5 };
    QuadOptions {
        tol_rel,
        tol_abs: 1e-12,
        scale: 2.0 * m.max(1) as f64,
        ..QuadOptions::default()
    }
}

/// Ratio `h0/R` below which the even series is used.
const NEAR: f64 = 0.1;
const MAX_SERIES_ORDER: usize = 96;

fn binom(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Number of `t`-terms so that the dropped tail is below double precision.
fn series_terms(q: f64, k: usize, max_l: usize) -> usize {
    let q2 = q * q;
    let mut l = k;
    while l < max_l && binom(l, k) * q2.powi((l - k) as i32) >= 1e-17 {
        l += 1;
    }
    l.min(max_l)
}

/// Taylor coefficients of `ln d_n` at `c0`, up to `order`.
pub fn log_d_taylor(n: usize, alpha: f64, c0: f64, order: usize) -> Result<Vec<f64>> {
    Ok(ln_d_n_generic(n, alpha, &Jet::variable(c0, order))?
        .coeffs()
        .to_vec())
}

/// Evaluates `∂^m φ_n/∂s12^m (s11, 0, s22)` along a ray of constant `u`.
struct MomentKernel {
    n: usize,
    alpha: f64,
    r: f64,
    m: usize,
    /// `n(1−|α|)²`, a lower bound on `1/λ_max`.
    r0: f64,
    m_fact: f64,
}

impl MomentKernel {
    fn new(n: usize, alpha: f64, r: f64, m: usize) -> Self {
        MomentKernel {
            n,
            alpha,
            r,
            m,
            r0: n as f64 * (1.0 - alpha.abs()).powi(2),
            m_fact: (1..=m).product::<usize>() as f64,
        }
    }

    /// `k` used in the truncation bound.
    fn k(&self) -> usize {
        if self.r == 0.0 {
            self.m.div_ceil(2)
        } else {
            self.m
        }
    }

    fn radius(&self, u: f64) -> f64 {
        0.5 * u + self.r0
    }

    fn t0(&self, u: f64, w: f64) -> f64 {
        let (a, b) = (u * w, u * (1.0 - w));
        0.25 * (a - b) * (a - b) + self.r * self.r * a * b
    }

    /// `m!` times the `ε^m` coefficient of `exp(−E/2)`.
    fn finish(&self, e: Jet, s11: f64, s22: f64) -> Result<f64> {
        let phi = (e * -0.5).exp();
        let v = phi.coeff(self.m) * self.m_fact;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteIntegrand { s11, s22 })
        }
    }

    fn series(&self, a: &[f64], c0: f64, t0: f64, q: f64, s11: f64, s22: f64) -> Result<f64> {
        let m = self.m;
        let r = self.r;
        let max_l = (a.len() - 1 - m) / 2;
        let l_top = series_terms(q, self.k(), max_l);
        let mut tc = vec![0.0; m + 1];
        tc[0] = t0;
        if m >= 1 {
            tc[1] = -2.0 * r * c0;
        }
        if m >= 2 {
            tc[2] = 1.0;
        }
        let t = Jet::from_coeffs(tc)?;
        let b = |l: usize| -> Jet {
            let mut c = vec![0.0; m + 1];
            let mut rp = 1.0;
            for (p, cp) in c.iter_mut().enumerate() {
                let j = 2 * l + p;
                *cp = a[j] * binom(j, p) * rp;
                rp *= -r;
            }
            Jet::from_coeffs(c).expect("finite series coefficients")
        };
        let mut acc = b(l_top);
        for l in (0..l_top).rev() {
            acc = b(l) + &t * &acc;
        }
        self.finish(acc * 2.0, s11, s22)
    }

    fn direct(&self, c0: f64, t0: f64, s11: f64, s22: f64) -> Result<f64> {
        let m = self.m;
        let mut tc = vec![0.0; m + 1];
        tc[0] = t0;
        let mut cc = vec![0.0; m + 1];
        cc[0] = c0;
        if m >= 1 {
            tc[1] = -2.0 * self.r * c0;
            cc[1] = -self.r;
        }
        if m >= 2 {
            tc[2] = 1.0;
        }
        let root = Jet::from_coeffs(tc)?.sqrt();
        let c = Jet::from_coeffs(cc)?;
        let rho = &c - &root;
        let ups = &c + &root;
        let e = log_d(self.n, self.alpha, &rho)? + log_d(self.n, self.alpha, &ups)?;
        self.finish(e, s11, s22)
    }

    /// Values at `(u, w_k)` for all `w` in `ws`.
    fn row(&self, u: f64, ws: &[f64]) -> Result<Vec<f64>> {
        let c0 = -0.5 * u;
        let rad = self.radius(u);
        let qs: Vec<(f64, f64)> = ws
            .iter()
            .map(|&w| {
                let t0 = self.t0(u, w);
                (t0, t0.sqrt() / rad)
            })
            .collect();
        let q_max = qs
            .iter()
            .filter(|(_, q)| *q <= NEAR)
            .map(|(_, q)| *q)
            .fold(-1.0, f64::max);
        let coeffs = if q_max >= 0.0 {
            let l = series_terms(q_max, self.k(), (MAX_SERIES_ORDER - self.m) / 2);
            Some(log_d_taylor(self.n, self.alpha, c0, self.m + 2 * l)?)
        } else {
            None
        };
        ws.iter()
            .zip(&qs)
            .map(|(&w, &(t0, q))| {
                let (s11, s22) = (u * w, u * (1.0 - w));
                match (&coeffs, q <= NEAR) {
                    (Some(a), true) => self.series(a, c0, t0, q, s11, s22),
                    _ => self.direct(c0, t0, s11, s22),
                }
            })
            .collect()
    }
}

/// `∂^m φ_n/∂s12^m` at `(s11, 0, s22)` through the stable evaluation used
/// by [`moment`].
pub fn phi_derivative(n: usize, alpha: f64, r: f64, m: usize, s11: f64, s22: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let u = s11 + s22;
    let w = if u == 0.0 { 0.5 } else { s11 / u };
    Ok(MomentKernel::new(n, alpha, r, m).row(u, &[w])?[0])
}

fn check_moment_args(m: usize, n: usize, alpha: f64, r: f64) -> Result<()> {
    check_alpha(alpha)?;
    if n < 2 {
        return Err(invalid("n must be at least 2"));
    }
    if m > MAX_MOMENT {
        return Err(invalid(format!(
            "moments above order {MAX_MOMENT} are not supported"
        )));
    }
    if !(-1.0..=1.0).contains(&r) {
        return Err(invalid(format!("r must lie in [−1, 1], got {r}")));
    }
    Ok(())
}

/// `E[(√n θ_n)^m]`.
pub fn moment(
    m: usize,
    n: usize,
    alpha: f64,
    r: f64,
    opts: Option<QuadOptions>,
) -> Result<MomentResult> {
    check_moment_args(m, n, alpha, r)?;
    if m == 0 {
        let quad = QuadResult {
            value: 1.0,
            error_estimate: 0.0,
            nodes_used: 0,
            converged: true,
        };
        return Ok(MomentResult {
            m,
            n,
            alpha,
            r,
            value: 1.0,
            quad,
        });
    }
    let opts = opts.unwrap_or_else(|| default_moment_options(m));
    let kernel = MomentKernel::new(n, alpha, r, m);
    let mf = m as f64;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    // factor 2: the integrand is symmetric in w ↔ 1 − w
    let pre =
        2.0 * sign * (n as f64).powf(0.5 * mf) / (2f64.powi(m as i32) * gamma(0.5 * mf).powi(2));
    let gl = GaussLegendre::new(opts.points);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let rule = |p: &Panel| -> Result<f64> {
        // w = (1 − cos πy)/2 with y = z/2 ∈ [0, 1/2]
        let mut ws = Vec::with_capacity(opts.points);
        let mut wz = Vec::with_capacity(opts.points);
        for (z, wt) in gl.on(p.y0, p.y1) {
            let y = 0.5 * z;
            let sn = (std::f64::consts::PI * y).sin();
            ws.push(0.5 * (1.0 - (std::f64::consts::PI * y).cos()));
            wz.push(wt * (0.5 * sn).powi(m as i32 - 2) * half_pi * sn * 0.5);
        }
        let mut acc = 0.0;
        for (x, wx) in gl.on(p.x0, p.x1) {
            let (u, du) = half_line_map(x, opts.scale);
            let vals = kernel.row(u, &ws)?;
            let radial = wx * du * u.powi(m as i32 - 1);
            for (v, w) in vals.iter().zip(&wz) {
                acc += radial * w * v;
            }
        }
        Ok(pre * acc)
    };
    let quad = integrate_unit_square(rule, opts.points * opts.points, &opts)?;
    Ok(MomentResult {
        m,
        n,
        alpha,
        r,
        value: quad.value,
        quad,
    })
}

/// `E[(√n θ_n)²]` from the dedicated one-derivative representation,
/// integrated over `s22 < s11`.
pub fn second_moment_scaled(
    n: usize,
    alpha: f64,
    opts: Option<QuadOptions>,
) -> Result<MomentResult> {
    check_moment_args(2, n, alpha, 0.0)?;
    let opts = opts.unwrap_or(QuadOptions {
        tol_rel: 1e-8,
        tol_abs: 1e-12,
        scale: 2.0,
        ..QuadOptions::default()
    });
    let nf = n as f64;
    let r0 = nf * (1.0 - alpha.abs()).powi(2);
    let f = |s11: f64, s22: f64| -> Result<f64> {
        let u = s11 + s22;
        let c0 = -0.5 * u;
        let h = 0.5 * (s11 - s22).abs();
        let (phi, quot) = if h <= 1e-3 * (0.5 * u + r0) {
            let a = log_d_taylor(n, alpha, c0, 8)?;
            let h2 = h * h;
            let g = a[0] + h2 * (a[2] + h2 * (a[4] + h2 * (a[6] + h2 * a[8])));
            let q = -(2.0 * a[2] + h2 * (4.0 * a[4] + h2 * (6.0 * a[6] + h2 * 8.0 * a[8])));
            ((-g).exp(), q)
        } else {
            let (hi, lo) = (s11.max(s22), s11.min(s22));
            let g = log_d(n, alpha, &-hi)? + log_d(n, alpha, &-lo)?;
            let q = (d_n_log_derivative(n, alpha, -hi)? - d_n_log_derivative(n, alpha, -lo)?)
                / (hi - lo);
            ((-0.5 * g).exp(), q)
        };
        Ok(0.25 * nf * phi * quot)
    };
    let quad = try_integrate_triangle_symmetric(f, &opts)?;
    Ok(MomentResult {
        m: 2,
        n,
        alpha,
        r: 0.0,
        value: quad.value,
        quad,
    })
}

/// `(1 + α²)/(1 − α²)`, the limiting variance of `√n θ_n`.
pub fn limit_second_moment(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((1.0 + alpha * alpha) / (1.0 - alpha * alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel, eigen_sym};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn rho_upsilon_cases() {
        let (r, u) = rho_upsilon(&MgfInputs::new(3.0, 0.0, 1.0, 0.0).unwrap()).unwrap();
        assert_eq!((r, u), (-3.0, -1.0));
        let (r, u) = rho_upsilon(&MgfInputs::new(2.0, 2.0, 2.0, 0.0).unwrap()).unwrap();
        assert!((r + 4.0).abs() < 1e-15 && u.abs() < 1e-15);
        let (r, u) = rho_upsilon(&MgfInputs::new(2.0, 0.0, 2.0, 1.0).unwrap()).unwrap();
        assert!((r + 4.0).abs() < 1e-15 && u.abs() < 1e-15);
        let (r, u) = rho_upsilon(&MgfInputs::new(1.5, 0.2, 0.7, -0.4).unwrap()).unwrap();
        assert!((r * u - (1.0 - 0.16) * (1.5 * 0.7 - 0.04)).abs() < 1e-14);
        assert!((r + u + (2.2 - 0.16)).abs() < 1e-14);
        assert!(MgfInputs::new(1.0, 2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn phi_cases() {
        let one = phi_n(7, 0.3, &MgfInputs::new(0.0, 0.0, 0.0, 0.0).unwrap()).unwrap();
        assert!((one - 1.0).abs() < 1e-15);
        let v = phi_n(2, 0.0, &MgfInputs::new(2.0, 0.0, 0.0, 0.0).unwrap()).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-15);
        let d = crate::charpoly::d_n(9, 0.4, &-1.3).unwrap();
        let v = phi_n(9, 0.4, &MgfInputs::new(1.3, 0.0, 0.0, 0.0).unwrap()).unwrap();
        assert!(close(v, d.powf(-0.5), 1e-13));
    }

    #[test]
    fn phi_decreases_in_each_argument() {
        let mut prev = 1.0;
        for k in 1..20 {
            let v = phi_n(
                12,
                0.2,
                &MgfInputs::new(0.5 * k as f64, 0.0, 1.0, 0.0).unwrap(),
            )
            .unwrap();
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
    }

    /// `a_j = −(1/j) Σ_k (λ_k / (1 − λ_k c0))^j`.
    fn eigen_taylor(ev: &[f64], c0: f64, order: usize) -> Vec<f64> {
        let mut a = vec![ev.iter().map(|l| (1.0 - l * c0).ln()).sum()];
        for j in 1..=order {
            let s: f64 = ev.iter().map(|l| (l / (1.0 - l * c0)).powi(j as i32)).sum();
            a.push(-s / j as f64);
        }
        a
    }

    #[test]
    fn taylor_coefficients_match_spectrum() {
        for &(n, alpha) in &[(10usize, 0.1), (30, 0.05), (30, 0.5), (200, 0.1)] {
            let ev = eigen_sym(&build_kernel(n, alpha).unwrap())
                .unwrap()
                .eigenvalues;
            for c0 in [0.0, -0.7, -12.0, -150.0] {
                let got = log_d_taylor(n, alpha, c0, 60).unwrap();
                let want = eigen_taylor(&ev, c0, 60);
                let r = 1.0 / ev[0] - c0;
                let nf = n as f64;
                assert!((got[0] - want[0]).abs() <= 1e-12 * want[0].abs().max(1.0));
                for j in 1..=60 {
                    // ln d_n is close to linear for large n, so its high-order
                    // coefficients are tiny remainders and lose relative accuracy;
                    // what matters is their size at the largest offset the series uses
                    let e = (got[j] - want[j]).abs();
                    assert!(
                        e * (NEAR * r).powi(j as i32) <= 1e-14 * nf,
                        "n={n} α={alpha} c0={c0} j={j}"
                    );
                }
            }
        }
    }

    fn eigen_phi_derivative(ev: &[f64], r: f64, m: usize, s11: f64, s22: f64) -> f64 {
        let mut g = Jet::zeros(m);
        for &l in ev {
            let mut c = vec![0.0; m + 1];
            c[0] = 1.0 + l * (s11 + s22) + l * l * (1.0 - r * r) * s11 * s22;
            if m >= 1 {
                c[1] = 2.0 * r * l;
            }
            if m >= 2 {
                c[2] = -l * l * (1.0 - r * r);
            }
            g = g + Jet::from_coeffs(c).unwrap().ln();
        }
        (g * -0.5).exp().coeff(m) * (1..=m).product::<usize>() as f64
    }

    #[test]
    fn derivative_matches_spectral_product_on_and_off_the_diagonal() {
        for &(n, alpha, r) in &[
            (10usize, 0.1, 0.0),
            (30, 0.05, 0.1),
            (30, 0.5, -0.3),
            (200, 0.1, 0.0),
            (200, 0.1, 0.1),
        ] {
            let ev: Vec<f64> = eigen_sym(&build_kernel(n, alpha).unwrap())
                .unwrap()
                .eigenvalues
                .into_iter()
                .filter(|l| *l > 1e-13)
                .collect();
            let orders: &[usize] = if n > 100 {
                &[1, 2, 4]
            } else {
                &[1, 2, 4, 7, 10]
            };
            for &m in orders {
                for &(a, b) in &[
                    (1.0, 1.0),
                    (1.0, 1.0 + 1e-7),
                    (2.0, 2.3),
                    (0.3, 5.0),
                    (40.0, 1e-3),
                    (8.0, 6.0),
                    (100.0, 100.5),
                    (300.0, 290.0),
                    (250.0, 3.0),
                ] {
                    let got = phi_derivative(n, alpha, r, m, a, b).unwrap();
                    let want = eigen_phi_derivative(&ev, r, m, a, b);
                    let scale = eigen_phi_derivative(&ev, r, m, 0.5 * (a + b), 0.5 * (a + b))
                        .abs()
                        .max(want.abs());
                    let tol = 1e-8;
                    assert!(
                        (got - want).abs() <= tol * scale.max(1e-300),
                        "n={n} α={alpha} r={r} m={m} ({a},{b}): {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn odd_derivatives_vanish_without_correlation() {
        for m in [1usize, 3, 5, 9] {
            for &(a, b) in &[(1.0, 1.0), (0.2, 3.0), (50.0, 0.1)] {
                assert_eq!(phi_derivative(20, 0.3, 0.0, m, a, b).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn limit_values() {
        assert!((limit_second_moment(0.1).unwrap() - 1.0202020202020203).abs() < 1e-15);
        assert_eq!(limit_second_moment(0.0).unwrap(), 1.0);
        assert!((limit_second_moment(0.5).unwrap() - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zeroth_and_odd_moments() {
        assert_eq!(moment(0, 10, 0.1, 0.0, None).unwrap().value, 1.0);
        assert_eq!(moment(3, 10, 0.1, 0.0, None).unwrap().value, 0.0);
        assert!(moment(11, 10, 0.1, 0.0, None).is_err());
    }

    #[test]
    fn second_moment_two_ways() {
        let a = moment(2, 10, 0.1, 0.0, None).unwrap();
        let b = second_moment_scaled(10, 0.1, None).unwrap();
        assert!(a.quad.converged && b.quad.converged);
        assert!((a.value - 1.122613).abs() < 1e-4, "{a:?}");
        assert!(
            (a.value - b.value).abs() <= a.quad.error_estimate + b.quad.error_estimate + 1e-9,
            "{a:?} {b:?}"
        );
    }
}
