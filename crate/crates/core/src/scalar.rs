//! Numeric scalars the expression engine and the geometry code are generic over.
//!
//! Three families implement [`Scalar`]: plain `f64`, the first-order [`Dual`]
//! number, and [`Taylor2`](crate::exprlang::Taylor2) (second-order truncated
//! Taylor arithmetic), which is itself generic over a `Scalar` so that
//! `Taylor2<Dual>` carries third derivatives along the dual directions.
//!
//! Derivative-carrying values use an empty tangent vector to mean "constant";
//! binary operations broadcast an empty side as zeros.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic and elementary functions needed by expressions and geometry.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// A constant (derivative-free) value.
    fn cst(c: f64) -> Self;
    /// The underlying real value.
    fn re(&self) -> f64;
    fn scale(&self, c: f64) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tan(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn sinh(&self) -> Self;
    fn cosh(&self) -> Self;
    fn recip(&self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    /// Integer power by repeated squaring; exact in the sense that no
    /// logarithm of the base is taken.
    fn powi(&self, k: i64) -> Self {
        if k == 0 {
            return Self::cst(1.0);
        }
        let mut base = self.clone();
        let mut e = k.unsigned_abs();
        let mut acc: Option<Self> = None;
        while e > 0 {
            if e & 1 == 1 {
                acc = Some(match acc {
                    None => base.clone(),
                    Some(a) => a * base.clone(),
                });
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        let p = acc.expect("k != 0");
        if k < 0 {
            p.recip()
        } else {
            p
        }
    }

    /// `self^e` for a positive base.
    fn powf(&self, e: &Self) -> Self {
        (e.clone() * self.ln()).exp()
    }

    fn add_f(&self, c: f64) -> Self {
        self.clone() + Self::cst(c)
    }
}

impl Scalar for f64 {
    fn cst(c: f64) -> Self {
        c
    }
    fn re(&self) -> f64 {
        *self
    }
    fn scale(&self, c: f64) -> Self {
        self * c
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn tan(&self) -> Self {
        f64::tan(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn sinh(&self) -> Self {
        f64::sinh(*self)
    }
    fn cosh(&self) -> Self {
        f64::cosh(*self)
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
    fn powi(&self, k: i64) -> Self {
        match i32::try_from(k) {
            Ok(k) => f64::powi(*self, k),
            Err(_) => f64::powf(*self, k as f64),
        }
    }
}

/// First-order forward-mode number over a fixed set of directions.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    /// Directional derivatives; empty means all zero.
    pub d: Vec<f64>,
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Dual { v, d: Vec::new() }
    }

    /// The `i`-th of `k` independent variables.
    pub fn variable(v: f64, i: usize, k: usize) -> Self {
        let mut d = vec![0.0; k];
        d[i] = 1.0;
        Dual { v, d }
    }

    pub fn with_tangent(v: f64, d: Vec<f64>) -> Self {
        Dual { v, d }
    }

    /// Derivative along direction `i` (zero when constant).
    pub fn deriv(&self, i: usize) -> f64 {
        self.d.get(i).copied().unwrap_or(0.0)
    }

    fn chain(&self, f0: f64, f1: f64) -> Self {
        Dual {
            v: f0,
            d: self.d.iter().map(|x| x * f1).collect(),
        }
    }
}

fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| f(a.get(i).copied().unwrap_or(0.0), b.get(i).copied().unwrap_or(0.0)))
        .collect()
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: zip_with(&self.d, &o.d, |a, b| a + b),
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: zip_with(&self.d, &o.d, |a, b| a - b),
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        let (av, bv) = (self.v, o.v);
        Dual {
            v: av * bv,
            d: zip_with(&self.d, &o.d, |a, b| a * bv + av * b),
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        self * o.recip()
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            v: -self.v,
            d: self.d.iter().map(|x| -x).collect(),
        }
    }
}

impl Scalar for Dual {
    fn cst(c: f64) -> Self {
        Dual::constant(c)
    }
    fn re(&self) -> f64 {
        self.v
    }
    fn scale(&self, c: f64) -> Self {
        self.chain(self.v * c, c)
    }
    fn sin(&self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(&self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn tan(&self) -> Self {
        let t = self.v.tan();
        self.chain(t, 1.0 + t * t)
    }
    fn exp(&self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn ln(&self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn sinh(&self) -> Self {
        self.chain(self.v.sinh(), self.v.cosh())
    }
    fn cosh(&self) -> Self {
        self.chain(self.v.cosh(), self.v.sinh())
    }
    fn recip(&self) -> Self {
        self.chain(1.0 / self.v, -1.0 / (self.v * self.v))
    }
}
