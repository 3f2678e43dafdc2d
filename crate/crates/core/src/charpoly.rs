//! The characteristic polynomial `d_n(λ) = det(I − λ K_n)`.
//!
//! [`d_n`] evaluates a closed form in `γ1, γ2` (the roots of
//! `z² − (1 − x + α²) z + α²` at `x = λ/n`). It has removable singularities
//! where `Δ = (1 − x + α²)² − 4α²` vanishes and at `λ = n(1−α)²`. Near those
//! points evaluation switches to the tridiagonal recurrence plus a rank-one
//! update, which is branch free.
//!
//! Powers `γⁿ` overflow for very negative `λ` and large `n`, so the closed
//! form is assembled as `mantissa · exp(log_scale)` ([`Scaled`]).

use crate::error::{check_alpha, invalid, Error, Result};
use crate::jet::{Jet, Scalar};
use crate::kernel::{build_kernel, powu};

/// `γ1 = (A + √Δ)/2`, `γ2 = (A − √Δ)/2`, `Δ = A² − 4α²` with `A = 1 − x + α²`.
#[derive(Debug, Clone)]
pub struct GammaDelta<S> {
    pub gamma1: S,
    pub gamma2: S,
    pub delta: S,
}

pub fn gamma_delta<S: Scalar>(x: &S, alpha: f64) -> Result<GammaDelta<S>> {
    let a2 = alpha * alpha;
    let sum = -x.clone() + (1.0 + a2);
    let delta = sum.clone() * sum.clone() - 4.0 * a2;
    if !(delta.value() > 0.0) {
        return Err(Error::Domain {
            op: "gamma_delta",
            detail: format!("Δ = {} is not positive; use the recurrence", delta.value()),
        });
    }
    let sd = delta.sqrt();
    Ok(GammaDelta {
        gamma1: (sum.clone() + sd.clone()) * 0.5,
        gamma2: (sum - sd) * 0.5,
        delta,
    })
}

/// `p_m(x)` from `p_{−1} = 0`, `p_0 = 1`, `p_m = (1 − x + α²) p_{m−1} − α² p_{m−2}`.
pub fn p_poly<S: Scalar>(m: i64, x: &S, alpha: f64) -> Result<S> {
    if m < -1 {
        return Err(invalid("p_poly needs m ≥ −1"));
    }
    Ok(p_sequence(m.max(0) as usize, x, alpha).swap_remove((m + 1) as usize))
}

/// `[p_{−1}, p_0, ..., p_m]`.
fn p_sequence<S: Scalar>(m: usize, x: &S, alpha: f64) -> Vec<S> {
    let a2 = alpha * alpha;
    let coef = -x.clone() + (1.0 + a2);
    let mut p = Vec::with_capacity(m + 2);
    p.push(x.lift(0.0));
    p.push(x.lift(1.0));
    for i in 1..=m {
        let next = coef.clone() * p[i].clone() - p[i - 1].clone() * a2;
        p.push(next);
    }
    p
}

/// Value `mantissa · exp(log_scale)`.
#[derive(Debug, Clone)]
pub struct Scaled<S> {
    pub mantissa: S,
    pub log_scale: f64,
}

impl<S: Scalar> Scaled<S> {
    pub fn value(&self) -> S {
        self.mantissa.clone() * self.log_scale.exp()
    }

    /// `ln` of the value; requires a positive constant term.
    pub fn ln(&self) -> S {
        self.mantissa.ln() + self.log_scale
    }
}

/// Which formula [`d_n`] uses at a given base point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPath {
    ClosedForm,
    Recurrence,
}

pub fn eval_path(n: usize, alpha: f64, lambda: f64) -> EvalPath {
    let nf = n as f64;
    let x = lambda / nf;
    let a2 = alpha * alpha;
    let s = 1.0 - x + a2;
    let delta = s * s - 4.0 * a2;
    let pole = nf * (1.0 - alpha) * (1.0 - alpha) - lambda;
    if delta < 1e-8 * (1.0 + x.abs()).powi(2) || pole.abs() < 1e-8 * nf {
        EvalPath::Recurrence
    } else {
        EvalPath::ClosedForm
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(invalid("n must be at least 1"))
    } else {
        Ok(())
    }
}

/// `α^k / s^n` computed without overflow, `ln_s = ln s`.
fn alpha_pow_over(alpha: f64, k: usize, n: usize, ln_s: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    let sign = if alpha < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
    sign * (k as f64 * alpha.abs().ln() - n as f64 * ln_s).exp()
}

/// Roots normalised by `s = |dominant root|`, shared by `d_n` and `d_n'`.
struct Roots<S> {
    /// `γ_a / s`, `γ_b / s`, with `|γ_a| ≥ |γ_b|` at the base point.
    u: S,
    v: S,
    /// `√Δ` with the sign matching the (a, b) ordering.
    sd: S,
    delta: S,
    sum: S,
    s: f64,
    ln_s: f64,
}

impl<S: Scalar> Roots<S> {
    fn new(x: &S, alpha: f64) -> Result<Roots<S>> {
        let gd = gamma_delta(x, alpha)?;
        let sum = gd.gamma1.clone() + gd.gamma2.clone();
        let sd = gd.gamma1.clone() - gd.gamma2.clone();
        let (ga, gb, sd) = if gd.gamma1.value().abs() >= gd.gamma2.value().abs() {
            (gd.gamma1, gd.gamma2, sd)
        } else {
            (gd.gamma2, gd.gamma1, -sd)
        };
        let s = ga.value().abs();
        Ok(Roots {
            u: ga / s,
            v: gb / s,
            sd,
            delta: gd.delta,
            sum,
            s,
            ln_s: s.ln(),
        })
    }

    /// `(u^k, v^k)` for `k = n−1, n, n+1`.
    fn powers(&self, n: usize) -> [(S, S); 3] {
        let k = n as i64 - 1;
        let um = self.u.powi(k);
        let vm = self.v.powi(k);
        let u0 = um.clone() * self.u.clone();
        let v0 = vm.clone() * self.v.clone();
        let u1 = u0.clone() * self.u.clone();
        let v1 = v0.clone() * self.v.clone();
        [(um, vm), (u0, v0), (u1, v1)]
    }
}

fn closed_form<S: Scalar>(n: usize, alpha: f64, lam: &S) -> Result<Scaled<S>> {
    let nf = n as f64;
    let a2 = alpha * alpha;
    let x = lam.clone() / nf;
    let r = Roots::new(&x, alpha)?;
    let [(um, vm), (u0, v0), (u1, v1)] = r.powers(n);
    let s = r.s;
    let delta = r.delta.clone();
    let dp = delta.clone() * (-lam.clone() + nf * (1.0 - alpha) * (1.0 - alpha));
    let e1 = alpha_pow_over(alpha, n + 1, n, r.ln_s);
    let e2 = alpha_pow_over(alpha, n + 2, n, r.ln_s);

    let plus1 = u1.clone() + v1.clone();
    let plus0 = u0.clone() + v0.clone();
    let plusm = um + vm;

    let mut m = ((u1 - v1) * s - (u0 - v0) * a2) / r.sd.clone();
    m = m + lam.clone() * plus1.clone() * (s / nf) / delta.clone();
    m = m - lam.clone() * plus0.clone() * ((nf - 1.0) * a2 / (nf * nf)) / delta;
    let mut t = plus1 * (2.0 * (nf - 1.0) * alpha * s / nf)
        - plus0 * ((2.0 * (nf - 2.0) * alpha * a2 + 2.0 * (nf + 1.0) * a2) / nf)
        + plusm * (2.0 * a2 * a2 / s);
    t = t + r.sum.clone() * (2.0 * e1 * (1.0 - alpha) / nf) + 4.0 * e2 * (1.0 - alpha) / nf;
    m = m + lam.clone() * t / dp;
    Ok(Scaled {
        mantissa: m,
        log_scale: nf * r.ln_s,
    })
}

/// `d_n` via the recurrence for `p_m` and the rank-one identity
/// `d_n(n²μ) = q_n(nμ) + μ Σ_{j,k} α^{|k−j|} q_{min(j,k)−1}(nμ) p_{n−max(j,k)}(nμ)`,
/// `q_m = p_m − α² p_{m−1}`, summed in O(n).
pub fn d_n_recurrence<S: Scalar>(n: usize, alpha: f64, lambda: &S) -> Result<S> {
    check_n(n)?;
    check_alpha(alpha)?;
    let nf = n as f64;
    let a2 = alpha * alpha;
    let x = lambda.clone() / nf;
    let mu = lambda.clone() / (nf * nf);
    let p = p_sequence(n, &x, alpha);
    // p[i + 1] = p_i
    let q = |m: usize| p[m + 1].clone() - p[m].clone() * a2;
    let mut t = x.lift(0.0);
    let mut sum = x.lift(0.0);
    for k in 1..=n {
        if k >= 2 {
            t = (t + q(k - 2)) * alpha;
        }
        sum = sum + p[n - k + 1].clone() * (q(k - 1) + t.clone() * 2.0);
    }
    let d = q(n) + mu * sum;
    finite(d, "d_n_recurrence")
}

fn finite<S: Scalar>(v: S, op: &'static str) -> Result<S> {
    if v.is_all_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { op })
    }
}

/// `d_n(λ)` in scaled form, closed form with recurrence fallback.
pub fn d_n_scaled<S: Scalar>(n: usize, alpha: f64, lambda: &S) -> Result<Scaled<S>> {
    check_n(n)?;
    check_alpha(alpha)?;
    if n == 1 {
        return Ok(Scaled {
            mantissa: lambda.lift(1.0),
            log_scale: 0.0,
        });
    }
    let out = match eval_path(n, alpha, lambda.value()) {
        EvalPath::ClosedForm => closed_form(n, alpha, lambda)?,
        EvalPath::Recurrence => Scaled {
            mantissa: d_n_recurrence(n, alpha, lambda)?,
            log_scale: 0.0,
        },
    };
    if out.mantissa.is_all_finite() && out.log_scale.is_finite() {
        Ok(out)
    } else {
        Err(Error::NonFinite { op: "d_n" })
    }
}

/// `d_n(λ) = det(I_n − λ K_n)` for real or jet `λ`.
pub fn d_n<S: Scalar>(n: usize, alpha: f64, lambda: &S) -> Result<S> {
    finite(d_n_scaled(n, alpha, lambda)?.value(), "d_n")
}

/// `ln d_n(λ)` for `λ` below the first root, where `d_n > 0`.
pub fn ln_d_n(n: usize, alpha: f64, lambda: f64) -> Result<f64> {
    ln_d_n_generic(n, alpha, &lambda)
}

/// `ln d_n(λ)` for real or jet `λ` with `d_n(λ) > 0`.
///
/// On the closed-form path with `1 − x + α² > 2|α|` the polynomial is
/// factored as `γ1^{n+1} F(λ)` and the two logarithms are taken separately.
/// For large `n`, `ln d_n` is nearly linear, so taking the log of the jet of
/// `d_n` itself would leave its higher coefficients as tiny remainders of
/// much larger numbers.
pub fn ln_d_n_generic<S: Scalar>(n: usize, alpha: f64, lambda: &S) -> Result<S> {
    check_n(n)?;
    check_alpha(alpha)?;
    let lam0 = lambda.value();
    let nf = n as f64;
    let x0 = lam0 / nf;
    let factored = n >= 2
        && eval_path(n, alpha, lam0) == EvalPath::ClosedForm
        && 1.0 - x0 + alpha * alpha > 2.0 * alpha.abs();
    if factored {
        if let Some(v) = ln_factored(n, alpha, lambda)? {
            return finite(v, "ln_d_n");
        }
    }
    let d = d_n_scaled(n, alpha, lambda)?;
    if !(d.mantissa.value() > 0.0) {
        return Err(Error::Domain {
            op: "ln_d_n",
            detail: format!("d_n({lam0}) is not positive"),
        });
    }
    finite(d.ln(), "ln_d_n")
}

fn ln_factored<S: Scalar>(n: usize, alpha: f64, lam: &S) -> Result<Option<S>> {
    let nf = n as f64;
    let a2 = alpha * alpha;
    let x = lam.clone() / nf;
    let gd = gamma_delta(&x, alpha)?;
    let (g1, g2) = (gd.gamma1, gd.gamma2);
    let ig = g1.powi(-1);
    let rho = g2.clone() * ig.clone();
    let sd = gd.delta.sqrt();
    let d = gd.delta;
    let dp = d.clone() * (-lam.clone() + nf * (1.0 - alpha) * (1.0 - alpha));
    let one = lam.lift(1.0);
    let r_n1 = rho.powi(n as i64 + 1);
    let r_n = rho.powi(n as i64);
    let r_nm = rho.powi(n as i64 - 1);
    let e = (ig.clone() * alpha).powi(n as i64 + 1);

    let mut f = ((one.clone() - r_n1.clone()) - ig.clone() * (one.clone() - r_n.clone()) * a2) / sd;
    f = f + lam.clone() * (one.clone() + r_n1.clone()) / (d.clone() * nf);
    f = f - lam.clone() * ig.clone() * (one.clone() + r_n.clone()) * ((nf - 1.0) * a2 / (nf * nf))
        / d;
    let mut t = (one.clone() + r_n1) * (2.0 * (nf - 1.0) * alpha / nf)
        - ig.clone()
            * (one.clone() + r_n)
            * ((2.0 * (nf - 2.0) * alpha * a2 + 2.0 * (nf + 1.0) * a2) / nf)
        + ig.clone() * ig.clone() * (one + r_nm) * (2.0 * a2 * a2);
    t = t
        + e.clone() * (g1.clone() + g2) * (2.0 * (1.0 - alpha) / nf)
        + e * (4.0 * alpha * (1.0 - alpha) / nf);
    f = f + lam.clone() * t / dp;
    if !(f.value() > 0.0) {
        return Ok(None);
    }
    Ok(Some(g1.ln() * (nf + 1.0) + f.ln()))
}

/// `(sign, ln|d_n(λ)|)` from the recurrence, renormalising as it goes so
/// that very large `n` neither overflows nor underflows.
pub fn ln_d_n_recurrence(n: usize, alpha: f64, lambda: f64) -> Result<(f64, f64)> {
    check_n(n)?;
    check_alpha(alpha)?;
    let nf = n as f64;
    let a2 = alpha * alpha;
    let x = lambda / nf;
    let mu = lambda / (nf * nf);
    let coef = 1.0 - x + a2;

    // p_m = pm[m] · exp(pe[m]); consecutive entries share a scale while the
    // recurrence runs.
    let mut pm = vec![0.0; n + 2];
    let mut pe = vec![0.0; n + 2];
    pm[1] = 1.0;
    let mut scale = 0.0;
    for i in 2..n + 2 {
        let mut next = coef * pm[i - 1] - a2 * pm[i - 2];
        let mag = next.abs();
        if mag > 1e100 || (mag < 1e-100 && mag > 0.0) {
            let shift = mag.ln();
            next /= mag;
            pm[i - 1] /= mag;
            pe[i - 1] = scale + shift;
            scale += shift;
        }
        pm[i] = next;
        pe[i] = scale;
        // keep pm[i-1] usable at the new scale for the next step
        if pe[i - 1] != scale {
            // already rescaled above
        }
    }
    // q_m = p_m − α² p_{m−1}; p_m and p_{m−1} as stored may differ in scale.
    let val = |m: usize, e: f64| pm[m + 1] * (pe[m + 1] - e).exp();
    let q = |m: usize, e: f64| val(m, e) - a2 * if m == 0 { 0.0 } else { val(m - 1, e) };

    let mut t = Ln::zero();
    let mut sum = Ln::zero();
    for k in 1..=n {
        if k >= 2 {
            let e = pe[k - 1];
            t = t.add(Ln::from_parts(q(k - 2, e), e)).mul(alpha);
        }
        let e = pe[k];
        let qk = Ln::from_parts(q(k - 1, e), e);
        let pterm = Ln::from_parts(pm[n - k + 1], pe[n - k + 1]);
        sum = sum.add(pterm.mul_ln(qk.add(t.mul(2.0))));
    }
    let e = pe[n + 1];
    let total = Ln::from_parts(q(n, e), e).add(sum.mul(mu));
    Ok((
        total.m.signum() * if total.m == 0.0 { 0.0 } else { 1.0 },
        total.m.abs().ln() + total.e,
    ))
}

/// `m · exp(e)` with a normalised mantissa.
#[derive(Clone, Copy, Debug)]
struct Ln {
    m: f64,
    e: f64,
}

impl Ln {
    fn zero() -> Ln {
        Ln {
            m: 0.0,
            e: f64::NEG_INFINITY,
        }
    }

    fn from_parts(m: f64, e: f64) -> Ln {
        if m == 0.0 {
            return Ln::zero();
        }
        let a = m.abs();
        Ln {
            m: m / a,
            e: e + a.ln(),
        }
    }

    fn add(self, o: Ln) -> Ln {
        if self.m == 0.0 {
            return o;
        }
        if o.m == 0.0 {
            return self;
        }
        let e = self.e.max(o.e);
        Ln::from_parts(self.m * (self.e - e).exp() + o.m * (o.e - e).exp(), e)
    }

    fn mul(self, k: f64) -> Ln {
        Ln::from_parts(self.m * k, self.e)
    }

    fn mul_ln(self, o: Ln) -> Ln {
        Ln::from_parts(self.m * o.m, self.e + o.e)
    }
}

/// `(p_m, r_m, l1, l2)` at argument `x`:
/// `p_m = (γ1^{m+1} − γ2^{m+1})/√Δ`, `r_m = (γ1^{m+1} + γ2^{m+1})/Δ`,
/// `l1 = 1/(Δ((1−α)² − x))`, `l2 = (3γ1 + 3γ2 + 2α)·l1`.
pub fn r_l_helpers(m: usize, x: f64, alpha: f64) -> Result<(f64, f64, f64, f64)> {
    check_alpha(alpha)?;
    let a2 = alpha * alpha;
    let s = 1.0 - x + a2;
    let delta = s * s - 4.0 * a2;
    let pole = (1.0 - alpha).powi(2) - x;
    if delta.abs() < 1e-8 * (1.0 + x.abs()).powi(2) || delta <= 0.0 {
        return Err(Error::Domain {
            op: "r_l_helpers",
            detail: format!("Δ({x}) is too close to zero"),
        });
    }
    if pole.abs() < 1e-8 {
        return Err(Error::Domain {
            op: "r_l_helpers",
            detail: format!("x = {x} is at the pole (1−α)²; perturb it"),
        });
    }
    let gd = gamma_delta(&x, alpha)?;
    let k = m as i64 + 1;
    let p = (gd.gamma1.powi(k as i32) - gd.gamma2.powi(k as i32)) / delta.sqrt();
    let r = (gd.gamma1.powi(k as i32) + gd.gamma2.powi(k as i32)) / delta;
    let l1 = 1.0 / (delta * pole);
    let l2 = (3.0 * s + 2.0 * alpha) * l1;
    Ok((p, r, l1, l2))
}

/// Explicit closed-form derivative, returned as `d_n'(λ) / s^n` together
/// with the matching `d_n(λ) / s^n`, `ln s^n` being the shared scale.
fn prime_display(n: usize, alpha: f64, lam: f64) -> Result<(f64, f64, f64)> {
    let nf = n as f64;
    let a2 = alpha * alpha;
    let x = lam / nf;
    let r = Roots::new(&x, alpha)?;
    let d = closed_form(n, alpha, &lam)?;
    let s = r.s;
    // scaled p_k and r_k for k ∈ {n−2, n−1, n}
    let pw = |k: i64| -> (f64, f64) {
        let f = ((k + 1 - n as i64) as f64 * r.ln_s).exp();
        (Scalar::powi(&r.u, k + 1) * f, Scalar::powi(&r.v, k + 1) * f)
    };
    let pk = |k: i64| {
        let (a, b) = pw(k);
        (a - b) / r.sd
    };
    let rk = |k: i64| {
        let (a, b) = pw(k);
        (a + b) / r.delta
    };
    let ni = n as i64;
    let (p_n, p_n1, p_n2) = (pk(ni), pk(ni - 1), pk(ni - 2));
    let (r_n, r_n1, r_n2) = (rk(ni), rk(ni - 1), rk(ni - 2));
    let r0 = r.sum / r.delta;
    let dd = r.delta;
    let l1 = 1.0 / (dd * ((1.0 - alpha).powi(2) - x));
    let l2 = (3.0 * r.sum + 2.0 * alpha) * l1;
    let e1 = alpha_pow_over(alpha, n + 1, n, r.ln_s);
    let e2 = alpha_pow_over(alpha, n + 2, n, r.ln_s);
    let _ = s;
    let n2 = nf * nf;
    let n3 = n2 * nf;
    let l = lam;

    let mut v = (d.mantissa - p_n + a2 * p_n1) / l;
    v += -(nf + 1.0) / nf * r_n + r0 * p_n / nf + a2 * r_n1 - a2 / nf * r0 * p_n1;
    v += -(nf + 1.0) / n2 * (l / dd) * p_n + 2.0 / n2 * l * r0 * r_n;
    v += (nf - 1.0) * a2 / n2 * (l / dd) * p_n1 - 2.0 * (nf - 1.0) * a2 / n3 * l * r0 * r_n1;
    v += -2.0 * (n2 - 1.0) * alpha / n3 * l * p_n * l1
        + 2.0 * (nf - 1.0) * alpha / n3 * l * r_n * l2;
    v += 2.0 * (nf - 2.0) * alpha * a2 / n2 * l * p_n1 * l1
        - 2.0 * (nf - 2.0) * alpha * a2 / n3 * l * r_n1 * l2;
    v += 2.0 * (nf + 1.0) * a2 / n2 * l * p_n1 * l1 - 2.0 * (nf + 1.0) * a2 / n3 * l * r_n1 * l2;
    v += -2.0 * (nf - 1.0) * a2 * a2 / n2 * l * p_n2 * l1 + 2.0 * a2 * a2 / n2 * l * r_n2 * l2;
    v += -2.0 * e1 * (1.0 - alpha) / n3 * l * l1 + 2.0 * e1 * (1.0 - alpha) / n3 * l * r0 * l2;
    v += 4.0 * e2 * (1.0 - alpha) / n3 * (l / dd) * l2;
    Ok((v, d.mantissa, d.log_scale))
}

fn use_display(n: usize, alpha: f64, lambda: f64) -> bool {
    n >= 2 && lambda.abs() >= 1e-6 && eval_path(n, alpha, lambda) == EvalPath::ClosedForm
}

fn jet_prime(n: usize, alpha: f64, lambda: f64) -> Result<Scaled<Jet>> {
    d_n_scaled(n, alpha, &Jet::variable(lambda, 1))
}

/// `d_n'(λ)` from the explicit display; for `|λ| < 1e-6` or near the
/// removable singularities the first-order jet of `d_n` is used instead.
pub fn d_n_prime(n: usize, alpha: f64, lambda: f64) -> Result<f64> {
    check_n(n)?;
    check_alpha(alpha)?;
    let v = if use_display(n, alpha, lambda) {
        let (dp, _, ls) = prime_display(n, alpha, lambda)?;
        dp * ls.exp()
    } else {
        jet_prime(n, alpha, lambda)?.value().coeff(1)
    };
    finite(v, "d_n_prime")
}

/// `d_n'(λ)/d_n(λ)`, free of the overflow in either factor.
pub fn d_n_log_derivative(n: usize, alpha: f64, lambda: f64) -> Result<f64> {
    check_n(n)?;
    check_alpha(alpha)?;
    let v = if use_display(n, alpha, lambda) {
        let (dp, d, _) = prime_display(n, alpha, lambda)?;
        dp / d
    } else {
        let j = jet_prime(n, alpha, lambda)?.mantissa;
        j.coeff(1) / j.coeff(0)
    };
    finite(v, "d_n_log_derivative")
}

/// A determinant as `sign · exp(log_abs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetValue {
    pub sign: f64,
    pub log_abs: f64,
}

impl DetValue {
    pub fn value(&self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.log_abs.exp()
        }
    }
}

/// Brute-force `det(I − λ K_n)` by Gaussian elimination with complete
/// pivoting, accumulated as log-magnitude and sign.
pub fn det_oracle(n: usize, alpha: f64, lambda: f64) -> Result<DetValue> {
    if n > 400 {
        return Err(invalid("det_oracle is limited to n ≤ 400"));
    }
    let k = build_kernel(n, alpha)?;
    let mut a: Vec<f64> = k.entries().iter().map(|v| -lambda * v).collect();
    for i in 0..n {
        a[i * n + i] += 1.0;
    }
    Ok(log_det(&mut a, n))
}

pub(crate) fn log_det(a: &mut [f64], n: usize) -> DetValue {
    let mut sign = 1.0;
    let mut log_abs = 0.0;
    for c in 0..n {
        let (mut pr, mut pc, mut best) = (c, c, 0.0);
        for r in c..n {
            for cc in c..n {
                let v = a[r * n + cc].abs();
                if v > best {
                    best = v;
                    pr = r;
                    pc = cc;
                }
            }
        }
        if best == 0.0 {
            return DetValue {
                sign: 0.0,
                log_abs: f64::NEG_INFINITY,
            };
        }
        if pr != c {
            for j in 0..n {
                a.swap(pr * n + j, c * n + j);
            }
            sign = -sign;
        }
        if pc != c {
            for i in 0..n {
                a.swap(i * n + pc, i * n + c);
            }
            sign = -sign;
        }
        let piv = a[c * n + c];
        sign *= piv.signum();
        log_abs += piv.abs().ln();
        for r in c + 1..n {
            let f = a[r * n + c] / piv;
            if f != 0.0 {
                for j in c + 1..n {
                    a[r * n + j] -= f * a[c * n + j];
                }
            }
        }
    }
    DetValue { sign, log_abs }
}

/// Exponent of the large-n approximation of `d_n(t√(n ln n))`.
pub fn ln_d_n_asymptotic(t: f64, n: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if n < 3 {
        return Err(invalid("the asymptotic formula needs n ≥ 3"));
    }
    let nf = n as f64;
    let ln_n = nf.ln();
    let a2 = alpha * alpha;
    let oa2 = 1.0 - a2;
    let quad = (1.0 + a2).powi(2) * t * t / (4.0 * oa2.powi(3)) + t * t / (2.0 * oa2 * oa2)
        - t * t / (4.0 * oa2);
    Ok(-t * (nf * ln_n).sqrt() / oa2 - quad * ln_n)
}

pub fn d_n_asymptotic(t: f64, n: usize, alpha: f64) -> Result<f64> {
    Ok(ln_d_n_asymptotic(t, n, alpha)?.exp())
}

/// Product form `∏(1 − λ_k λ)` from a list of eigenvalues.
pub fn spectral_product(eigenvalues: &[f64], lambda: f64) -> f64 {
    eigenvalues.iter().map(|l| 1.0 - l * lambda).product()
}

/// `α^e` for non-negative integer `e`.
pub fn alpha_pow(alpha: f64, e: usize) -> f64 {
    powu(alpha, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::eigen_sym;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn gamma_delta_cases() {
        for a in [0.0, 0.3, -0.8] {
            let g = gamma_delta(&0.0, a).unwrap();
            assert!((g.gamma1 - 1.0).abs() < 1e-15);
            assert!((g.gamma2 - a * a).abs() < 1e-15);
            assert!((g.delta - (1.0 - a * a).powi(2)).abs() < 1e-15);
        }
        let g = gamma_delta(&0.4, 0.0).unwrap();
        assert!((g.gamma1 - 0.6).abs() < 1e-15 && g.gamma2.abs() < 1e-15);
        let g = gamma_delta(&-3.0, 0.5).unwrap();
        assert!((g.gamma1 * g.gamma2 - 0.25).abs() < 1e-14);
        assert!((g.gamma1 + g.gamma2 - (4.0 + 0.25)).abs() < 1e-14);
        assert!(gamma_delta(&1.0, 0.0).is_err());
        let j = gamma_delta(&Jet::variable(-2.0, 4), 0.6).unwrap();
        let prod = j.gamma1.clone() * j.gamma2.clone();
        assert!((prod.coeff(0) - 0.36).abs() < 1e-14);
        for k in 1..=4 {
            assert!(prod.coeff(k).abs() < 1e-14);
        }
    }

    #[test]
    fn p_poly_cases() {
        let (x, a) = (0.05, 0.6);
        assert_eq!(p_poly(-1, &x, a).unwrap(), 0.0);
        assert_eq!(p_poly(0, &x, a).unwrap(), 1.0);
        assert!((p_poly(1, &x, a).unwrap() - (1.0 - x + a * a)).abs() < 1e-15);
        let s: f64 = 1.0 - x + a * a;
        assert!((p_poly(2, &x, a).unwrap() - (s * s - a * a)).abs() < 1e-15);
        for m in 0..8 {
            assert!((p_poly(m, &x, 0.0).unwrap() - (1.0 - x).powi(m as i32)).abs() < 1e-15);
        }
        // agrees with the closed form away from Δ = 0
        let (p, _, _, _) = r_l_helpers(9, x, a).unwrap();
        assert!(rel(p_poly(9, &x, a).unwrap(), p) < 1e-13);
        assert!(p_poly(-2, &x, a).is_err());
    }

    #[test]
    fn d_n_basics() {
        for n in [1usize, 2, 7, 50] {
            assert!((d_n(n, 0.4, &0.0).unwrap() - 1.0).abs() < 1e-14);
        }
        for l in [-3.0, 0.5, 1.7] {
            assert!((d_n(2, 0.0, &l).unwrap() - (1.0 - l / 2.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn d_n_matches_oracle() {
        for l in [-10.0, -1.0, 0.5, 3.0] {
            let a = d_n(6, 0.4, &l).unwrap();
            let b = det_oracle(6, 0.4, l).unwrap().value();
            assert!(rel(a, b) < 1e-10, "λ={l}: {a} vs {b}");
        }
        let a = d_n(50, 0.7, &-5.0).unwrap();
        let b = det_oracle(50, 0.7, -5.0).unwrap().value();
        assert!(rel(a, b) < 1e-9);
    }

    #[test]
    fn recurrence_matches_closed_form() {
        for &(n, a, l) in &[
            (9usize, -0.7, -3.0),
            (12, 0.2, 2.0),
            (30, 0.5, -40.0),
            (5, 0.0, 0.3),
        ] {
            let c = d_n(n, a, &l).unwrap();
            let r = d_n_recurrence(n, a, &l).unwrap();
            assert!(rel(r, c) < 1e-11, "n={n} a={a} λ={l}");
            let (sg, ln) = ln_d_n_recurrence(n, a, l).unwrap();
            assert!(rel(sg * ln.exp(), c) < 1e-11);
        }
    }

    #[test]
    fn fallback_is_used_at_the_removable_points() {
        let (n, a) = (12usize, 0.2);
        let pole = n as f64 * (1.0 - a) * (1.0 - a);
        assert_eq!(eval_path(n, a, pole), EvalPath::Recurrence);
        let v = d_n(n, a, &pole).unwrap();
        let o = det_oracle(n, a, pole).unwrap().value();
        assert!((v - o).abs() < 1e-10 * o.abs().max(1.0));
        let branch = n as f64 * (1.0 - a).powi(2) * 1.0000000001;
        assert_eq!(eval_path(n, a, branch), EvalPath::Recurrence);
    }

    #[test]
    fn matches_spectral_product() {
        for &(n, a) in &[(5usize, 0.3), (17, -0.6), (30, 0.9)] {
            let spec = eigen_sym(&build_kernel(n, a).unwrap()).unwrap();
            for l in [-20.0, -2.5, 0.0, 0.3, 1.1] {
                let want = spectral_product(&spec.eigenvalues, l);
                let got = d_n(n, a, &l).unwrap();
                assert!(rel(got, want) < 1e-9, "n={n} a={a} λ={l}");
            }
        }
    }

    #[test]
    fn degree_is_n_minus_one() {
        // n-th forward difference of a degree n-1 polynomial vanishes.
        let (n, a) = (8usize, 0.35);
        let h = 0.4;
        let vals: Vec<f64> = (0..=n)
            .map(|i| d_n(n, a, &(-2.0 + i as f64 * h)).unwrap())
            .collect();
        let mut diff = vals.clone();
        for _ in 0..n {
            diff = diff.windows(2).map(|w| w[1] - w[0]).collect();
        }
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff[0].abs() < 1e-6 * scale);
        // while the (n-1)-th does not
        let mut diff = vals;
        for _ in 0..n - 1 {
            diff = diff.windows(2).map(|w| w[1] - w[0]).collect();
        }
        assert!(diff[0].abs() > 1e-6);
    }

    #[test]
    fn tridiagonal_plus_rank_one_identity() {
        for &(n, a) in &[(4usize, 0.5), (11, -0.3), (50, 0.8)] {
            for mu in [-0.2, -0.01, 0.004] {
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    let diag = if i == 0 { 1.0 } else { 1.0 + a * a };
                    m[i * n + i] = diag - n as f64 * mu;
                    if i + 1 < n {
                        m[i * n + i + 1] = -a;
                        m[(i + 1) * n + i] = -a;
                    }
                }
                for v in m.iter_mut() {
                    *v += mu;
                }
                let det = log_det(&mut m, n).value();
                let lam = (n * n) as f64 * mu;
                let d = d_n(n, a, &lam).unwrap();
                assert!(rel(d, det) < 1e-9, "n={n} a={a} mu={mu}: {d} vs {det}");
            }
        }
    }

    #[test]
    fn oracle_vanishes_at_reciprocal_top_eigenvalue() {
        let (n, a) = (15usize, 0.45);
        let spec = eigen_sym(&build_kernel(n, a).unwrap()).unwrap();
        let v = det_oracle(n, a, 1.0 / spec.eigenvalues[0]).unwrap().value();
        assert!(v.abs() < 1e-8);
        assert_eq!(det_oracle(3, 0.1, 0.0).unwrap().value(), 1.0);
    }

    #[test]
    fn prime_n2() {
        for l in [-4.0, -0.5, 0.0, 1e-8, 0.9] {
            assert!((d_n_prime(2, 0.0, l).unwrap() + 0.5).abs() < 1e-13, "λ={l}");
        }
    }

    #[test]
    fn prime_matches_jet_and_spectrum() {
        for &(n, a) in &[(6usize, 0.4), (10, 0.1), (7, -0.6), (29, 0.85)] {
            let spec = eigen_sym(&build_kernel(n, a).unwrap()).unwrap();
            for l in [-37.0, -10.0, -1.0, 0.5, 1.5] {
                let disp = d_n_prime(n, a, l).unwrap();
                let jet = d_n(n, a, &Jet::variable(l, 1)).unwrap().coeff(1);
                assert!(rel(disp, jet) < 1e-9, "n={n} a={a} λ={l}: {disp} vs {jet}");
            }
            for s in [0.1, 3.0, 40.0] {
                let want: f64 = -spec
                    .eigenvalues
                    .iter()
                    .map(|lk| lk / (1.0 + lk * s))
                    .sum::<f64>();
                let got = d_n_log_derivative(n, a, -s).unwrap();
                assert!(rel(got, want) < 1e-8, "n={n} a={a} s={s}");
            }
        }
    }

    #[test]
    fn helpers_at_origin() {
        let (p, r, l1, l2) = r_l_helpers(5, 0.0, 0.0).unwrap();
        assert!((p - 1.0).abs() < 1e-15 && (r - 1.0).abs() < 1e-15);
        assert!((l1 - 1.0).abs() < 1e-15 && (l2 - 3.0).abs() < 1e-15);
        let (x, a) = (-0.8, 0.35);
        let g = gamma_delta(&x, a).unwrap();
        let (_, _, l1, l2) = r_l_helpers(3, x, a).unwrap();
        assert!(rel(l2 / l1, 3.0 * (g.gamma1 + g.gamma2) + 2.0 * a) < 1e-14);
        assert!(rel(l2 / l1, 3.0 * (1.0 - x + a * a) + 2.0 * a) < 1e-14);
        assert!(r_l_helpers(3, (1.0f64 - a).powi(2), a).is_err());
    }

    #[test]
    fn large_n_scaled_evaluation() {
        // γ^n overflows a plain f64 here, the scaled form does not.
        let l = ln_d_n(800, 0.1, -5.0e4).unwrap();
        let (_, r) = ln_d_n_recurrence(800, 0.1, -5.0e4).unwrap();
        assert!(rel(l, r) < 1e-12);
        let l = ln_d_n(1_000_000, 0.1, 3717.0).unwrap();
        let (sg, r) = ln_d_n_recurrence(1_000_000, 0.1, 3717.0).unwrap();
        assert_eq!(sg, 1.0);
        assert!(rel(l, r) < 1e-9, "{l} vs {r}");
    }

    #[test]
    fn asymptotic_formula() {
        assert_eq!(d_n_asymptotic(0.0, 100, 0.3).unwrap(), 1.0);
        let n = 100_000usize;
        let nf = n as f64;
        let want = -2.0 * (nf * nf.ln()).sqrt() - 2.0 * nf.ln();
        assert!(rel(ln_d_n_asymptotic(2.0, n, 0.0).unwrap(), want) < 1e-14);
        let t = 1.0;
        let n = 1_000_000usize;
        let lam = t * (n as f64 * (n as f64).ln()).sqrt();
        let ratio = ln_d_n(n, 0.1, lam).unwrap() / ln_d_n_asymptotic(t, n, 0.1).unwrap();
        assert!((ratio - 1.0).abs() < 0.01);
    }
}
