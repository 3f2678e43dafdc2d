//! Truncated Taylor polynomials in one variable.
//!
//! A [`Jet`] of order `K` stores `c_0..=c_K`, the Taylor coefficients of a
//! function around an expansion point. Arithmetic on jets propagates all
//! derivatives up to order `K`, which is how the moment integrands obtain
//! `∂^m φ/∂s12^m` without symbolic algebra.
//!
//! The checked methods (`try_add`, `try_div`, ...) validate their inputs and
//! reject NaNs. The operator impls are the unchecked fast path used inside
//! generic numerical code; callers validate the final result with
//! [`Scalar::is_all_finite`].

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Jet order used for moment extraction (the tables stop at the 10th moment).
pub const DEFAULT_ORDER: usize = 10;

#[derive(Clone, PartialEq)]
pub struct Jet {
    c: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet{:?}", self.c)
    }
}

impl Jet {
    pub fn constant(value: f64, order: usize) -> Jet {
        let mut c = vec![0.0; order + 1];
        c[0] = value;
        Jet { c }
    }

    /// The independent variable `base + ε`.
    pub fn variable(base: f64, order: usize) -> Jet {
        let mut c = vec![0.0; order + 1];
        c[0] = base;
        if order >= 1 {
            c[1] = 1.0;
        }
        Jet { c }
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Jet> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument(
                "a jet needs at least one coefficient".into(),
            ));
        }
        Jet { c: coeffs }.checked("from_coeffs")
    }

    pub fn zeros(order: usize) -> Jet {
        Jet {
            c: vec![0.0; order + 1],
        }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.c.get(k).copied().unwrap_or(0.0)
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// The `m`-th derivative at the expansion point, `m! · c_m`.
    pub fn derivative(&self, m: usize) -> Result<f64> {
        if m > self.order() {
            return Err(Error::InvalidArgument(format!(
                "derivative order {m} exceeds jet order {}",
                self.order()
            )));
        }
        let fact: f64 = (1..=m).map(|k| k as f64).product();
        Ok(fact * self.c[m])
    }

    /// Copy with a different order: truncates or pads with zeros.
    pub fn with_order(&self, order: usize) -> Jet {
        let mut c = self.c.clone();
        c.resize(order + 1, 0.0);
        Jet { c }
    }

    fn checked(self, op: &'static str) -> Result<Jet> {
        if self.c.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(Error::NonFinite { op })
        }
    }

    fn same_order(&self, other: &Jet) -> Result<()> {
        if self.c.len() == other.c.len() {
            Ok(())
        } else {
            Err(Error::OrderMismatch {
                left: self.order(),
                right: other.order(),
            })
        }
    }

    pub fn try_add(&self, b: &Jet) -> Result<Jet> {
        self.same_order(b)?;
        (self + b).checked("jet_add")
    }

    pub fn try_sub(&self, b: &Jet) -> Result<Jet> {
        self.same_order(b)?;
        (self - b).checked("jet_sub")
    }

    pub fn try_mul(&self, b: &Jet) -> Result<Jet> {
        self.same_order(b)?;
        (self * b).checked("jet_mul")
    }

    pub fn try_div(&self, b: &Jet) -> Result<Jet> {
        self.same_order(b)?;
        if b.c[0] == 0.0 {
            return Err(Error::ZeroConstantTerm { op: "jet_div" });
        }
        (self / b).checked("jet_div")
    }

    pub fn try_sqrt(&self) -> Result<Jet> {
        if !(self.c[0] > 0.0) {
            return Err(Error::Domain {
                op: "jet_sqrt",
                detail: format!("constant term must be positive, got {}", self.c[0]),
            });
        }
        self.sqrt_impl().checked("jet_sqrt")
    }

    pub fn try_powi(&self, p: i64) -> Result<Jet> {
        if p < 0 && self.c[0] == 0.0 {
            return Err(Error::ZeroConstantTerm { op: "jet_powi" });
        }
        self.powi_impl(p).checked("jet_powi")
    }

    pub fn try_ln(&self) -> Result<Jet> {
        if !(self.c[0] > 0.0) {
            return Err(Error::Domain {
                op: "jet_ln",
                detail: format!("constant term must be positive, got {}", self.c[0]),
            });
        }
        self.ln_impl().checked("jet_ln")
    }

    pub fn try_exp(&self) -> Result<Jet> {
        self.exp_impl().checked("jet_exp")
    }

    fn recip(&self) -> Jet {
        let k = self.c.len();
        let b0 = self.c[0];
        let mut q = vec![0.0; k];
        q[0] = 1.0 / b0;
        for n in 1..k {
            let mut s = 0.0;
            for j in 1..=n {
                s += self.c[j] * q[n - j];
            }
            q[n] = -s / b0;
        }
        Jet { c: q }
    }

    fn sqrt_impl(&self) -> Jet {
        let k = self.c.len();
        let mut s = vec![0.0; k];
        s[0] = self.c[0].sqrt();
        let two_s0 = 2.0 * s[0];
        for n in 1..k {
            let mut acc = self.c[n];
            for j in 1..n {
                acc -= s[j] * s[n - j];
            }
            s[n] = acc / two_s0;
        }
        Jet { c: s }
    }

    fn exp_impl(&self) -> Jet {
        let k = self.c.len();
        let mut e = vec![0.0; k];
        e[0] = self.c[0].exp();
        for n in 1..k {
            let mut acc = 0.0;
            for j in 1..=n {
                acc += j as f64 * self.c[j] * e[n - j];
            }
            e[n] = acc / n as f64;
        }
        Jet { c: e }
    }

    fn ln_impl(&self) -> Jet {
        let k = self.c.len();
        let a0 = self.c[0];
        let mut l = vec![0.0; k];
        l[0] = a0.ln();
        for n in 1..k {
            let mut acc = 0.0;
            for (j, lj) in l.iter().enumerate().take(n).skip(1) {
                acc += j as f64 * lj * self.c[n - j];
            }
            l[n] = (self.c[n] - acc / n as f64) / a0;
        }
        Jet { c: l }
    }

    fn powi_impl(&self, p: i64) -> Jet {
        if p < 0 {
            return self.recip().powi_impl(-p);
        }
        let mut result = Jet::constant(1.0, self.order());
        let mut base = self.clone();
        let mut e = p as u64;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// Evaluate the truncated polynomial `Σ c_k h^k`.
    pub fn eval(&self, h: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &ck| acc * h + ck)
    }
}

/// `m! · a.coeffs[m]`.
pub fn extract_derivative(a: &Jet, m: usize) -> Result<f64> {
    a.derivative(m)
}

fn assert_same(a: &Jet, b: &Jet) {
    assert_eq!(a.c.len(), b.c.len(), "jet order mismatch");
}

impl Add<&Jet> for &Jet {
    type Output = Jet;
    fn add(self, b: &Jet) -> Jet {
        assert_same(self, b);
        Jet {
            c: self.c.iter().zip(&b.c).map(|(x, y)| x + y).collect(),
        }
    }
}

impl Sub<&Jet> for &Jet {
    type Output = Jet;
    fn sub(self, b: &Jet) -> Jet {
        assert_same(self, b);
        Jet {
            c: self.c.iter().zip(&b.c).map(|(x, y)| x - y).collect(),
        }
    }
}

impl Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, b: &Jet) -> Jet {
        assert_same(self, b);
        let k = self.c.len();
        let mut c = vec![0.0; k];
        for (i, &ai) in self.c.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (j, &bj) in b.c[..k - i].iter().enumerate() {
                c[i + j] += ai * bj;
            }
        }
        Jet { c }
    }
}

impl Div<&Jet> for &Jet {
    type Output = Jet;
    fn div(self, b: &Jet) -> Jet {
        assert_same(self, b);
        let k = self.c.len();
        let b0 = b.c[0];
        let mut q = vec![0.0; k];
        for n in 0..k {
            let mut acc = self.c[n];
            for j in 1..=n {
                acc -= b.c[j] * q[n - j];
            }
            q[n] = acc / b0;
        }
        Jet { c: q }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet {
            c: self.c.iter().map(|x| -x).collect(),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, b: Jet) -> Jet {
                (&self).$m(&b)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, b: &Jet) -> Jet {
                (&self).$m(b)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        self.c.iter_mut().for_each(|x| *x = -*x);
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, b: f64) -> Jet {
        self.c[0] += b;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, b: f64) -> Jet {
        self.c[0] -= b;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, b: f64) -> Jet {
        self.c.iter_mut().for_each(|x| *x *= b);
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(mut self, b: f64) -> Jet {
        self.c.iter_mut().for_each(|x| *x /= b);
        self
    }
}

/// Field-like operations shared by `f64` and [`Jet`], so the characteristic
/// polynomial and the MGF can be written once and differentiated for free.
pub trait Scalar:
    Clone
    + fmt::Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// A constant of the same shape (jet order) as `self`.
    fn lift(&self, v: f64) -> Self;
    /// Value at the expansion point.
    fn value(&self) -> f64;
    fn sqrt(&self) -> Self;
    fn ln(&self) -> Self;
    fn exp(&self) -> Self;
    fn powi(&self, p: i64) -> Self;
    fn is_all_finite(&self) -> bool;
}

impl Scalar for f64 {
    fn lift(&self, v: f64) -> f64 {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sqrt(&self) -> f64 {
        f64::sqrt(*self)
    }
    fn ln(&self) -> f64 {
        f64::ln(*self)
    }
    fn exp(&self) -> f64 {
        f64::exp(*self)
    }
    fn powi(&self, p: i64) -> f64 {
        match i32::try_from(p) {
            Ok(p) => f64::powi(*self, p),
            Err(_) => f64::powf(*self, p as f64),
        }
    }
    fn is_all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for Jet {
    fn lift(&self, v: f64) -> Jet {
        Jet::constant(v, self.order())
    }
    fn value(&self) -> f64 {
        self.c[0]
    }
    fn sqrt(&self) -> Jet {
        self.sqrt_impl()
    }
    fn ln(&self) -> Jet {
        self.ln_impl()
    }
    fn exp(&self) -> Jet {
        self.exp_impl()
    }
    fn powi(&self, p: i64) -> Jet {
        self.powi_impl(p)
    }
    fn is_all_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }
}
