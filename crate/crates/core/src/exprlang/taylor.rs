use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Scalar;

/// Second-order truncated Taylor number over a caller-chosen seed set.
///
/// `grad` has one entry per seed; `hess` stores only the upper triangle
/// (row-major, `i <= j`), so the Hessian is symmetric by construction.
/// Empty `grad`/`hess` mean the value is constant.
#[derive(Clone, Debug, PartialEq)]
pub struct Taylor2<S = f64> {
    pub value: S,
    pub grad: Vec<S>,
    pub hess: Vec<S>,
}

/// Index of `(i, j)` in the packed upper triangle of a `k x k` matrix.
#[inline]
pub fn tri_index(i: usize, j: usize, k: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * k - a * (a + 1) / 2 + b
}

#[inline]
pub fn tri_len(k: usize) -> usize {
    k * (k + 1) / 2
}

impl<S: Scalar> Taylor2<S> {
    pub fn constant(value: S) -> Self {
        Taylor2 {
            value,
            grad: Vec::new(),
            hess: Vec::new(),
        }
    }

    /// Seed `i` of `k`, sitting at `value`.
    pub fn variable(value: S, i: usize, k: usize) -> Self {
        let mut grad = vec![S::zero(); k];
        grad[i] = S::cst(1.0);
        Taylor2 {
            value,
            grad,
            hess: vec![S::zero(); tri_len(k)],
        }
    }

    pub fn seeds(&self) -> usize {
        self.grad.len()
    }

    pub fn d1(&self, i: usize) -> S {
        self.grad.get(i).cloned().unwrap_or_else(S::zero)
    }

    pub fn d2(&self, i: usize, j: usize) -> S {
        let k = self.grad.len();
        if k == 0 {
            return S::zero();
        }
        self.hess[tri_index(i, j, k)].clone()
    }

    /// Composition with a scalar function whose value and first two
    /// derivatives at `self.value` are `f0, f1, f2`.
    pub fn chain(&self, f0: S, f1: S, f2: S) -> Self {
        let k = self.grad.len();
        let grad = self.grad.iter().map(|g| f1.clone() * g.clone()).collect();
        let mut hess = Vec::with_capacity(tri_len(k));
        for i in 0..k {
            for j in i..k {
                let h = f2.clone() * self.grad[i].clone() * self.grad[j].clone()
                    + f1.clone() * self.hess[tri_index(i, j, k)].clone();
                hess.push(h);
            }
        }
        Taylor2 { value: f0, grad, hess }
    }
}

fn zip<S: Scalar>(a: &[S], b: &[S], f: impl Fn(S, S) -> S) -> Vec<S> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            f(
                a.get(i).cloned().unwrap_or_else(S::zero),
                b.get(i).cloned().unwrap_or_else(S::zero),
            )
        })
        .collect()
}

impl<S: Scalar> Add for Taylor2<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Taylor2 {
            value: self.value + o.value,
            grad: zip(&self.grad, &o.grad, |a, b| a + b),
            hess: zip(&self.hess, &o.hess, |a, b| a + b),
        }
    }
}

impl<S: Scalar> Sub for Taylor2<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Taylor2 {
            value: self.value - o.value,
            grad: zip(&self.grad, &o.grad, |a, b| a - b),
            hess: zip(&self.hess, &o.hess, |a, b| a - b),
        }
    }
}

impl<S: Scalar> Mul for Taylor2<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        if self.grad.is_empty() {
            return o.scale_by(&self.value);
        }
        if o.grad.is_empty() {
            return self.scale_by(&o.value);
        }
        let k = self.grad.len().max(o.grad.len());
        let (a, b) = (&self, &o);
        let grad = (0..k)
            .map(|i| a.value.clone() * b.d1(i) + b.value.clone() * a.d1(i))
            .collect();
        let mut hess = Vec::with_capacity(tri_len(k));
        for i in 0..k {
            for j in i..k {
                let h =
                    a.value.clone() * b.d2(i, j) + b.value.clone() * a.d2(i, j) + a.d1(i) * b.d1(j) + a.d1(j) * b.d1(i);
                hess.push(h);
            }
        }
        Taylor2 {
            value: a.value.clone() * b.value.clone(),
            grad,
            hess,
        }
    }
}

impl<S: Scalar> Taylor2<S> {
    fn scale_by(&self, c: &S) -> Self {
        Taylor2 {
            value: self.value.clone() * c.clone(),
            grad: self.grad.iter().map(|g| g.clone() * c.clone()).collect(),
            hess: self.hess.iter().map(|h| h.clone() * c.clone()).collect(),
        }
    }
}

impl<S: Scalar> Div for Taylor2<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        if o.grad.is_empty() {
            return self.scale_by(&o.value.recip());
        }
        self * o.recip()
    }
}

impl<S: Scalar> Neg for Taylor2<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Taylor2 {
            value: -self.value,
            grad: self.grad.into_iter().map(|g| -g).collect(),
            hess: self.hess.into_iter().map(|h| -h).collect(),
        }
    }
}

impl<S: Scalar> Scalar for Taylor2<S> {
    fn cst(c: f64) -> Self {
        Taylor2::constant(S::cst(c))
    }
    fn re(&self) -> f64 {
        self.value.re()
    }
    fn scale(&self, c: f64) -> Self {
        Taylor2 {
            value: self.value.scale(c),
            grad: self.grad.iter().map(|g| g.scale(c)).collect(),
            hess: self.hess.iter().map(|h| h.scale(c)).collect(),
        }
    }
    fn sin(&self) -> Self {
        let (s, c) = (self.value.sin(), self.value.cos());
        self.chain(s.clone(), c, -s)
    }
    fn cos(&self) -> Self {
        let (s, c) = (self.value.sin(), self.value.cos());
        self.chain(c.clone(), -s, -c)
    }
    fn tan(&self) -> Self {
        let t = self.value.tan();
        let sec2 = t.clone() * t.clone() + S::cst(1.0);
        let f2 = (sec2.clone() * t.clone()).scale(2.0);
        self.chain(t, sec2, f2)
    }
    fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e.clone(), e.clone(), e)
    }
    fn ln(&self) -> Self {
        let r = self.value.recip();
        self.chain(self.value.ln(), r.clone(), -(r.clone() * r))
    }
    fn sqrt(&self) -> Self {
        let s = self.value.sqrt();
        let f1 = s.recip().scale(0.5);
        let f2 = -(f1.clone() * self.value.recip()).scale(0.5);
        self.chain(s, f1, f2)
    }
    fn sinh(&self) -> Self {
        let (s, c) = (self.value.sinh(), self.value.cosh());
        self.chain(s.clone(), c, s)
    }
    fn cosh(&self) -> Self {
        let (s, c) = (self.value.sinh(), self.value.cosh());
        self.chain(c.clone(), s, c)
    }
    fn recip(&self) -> Self {
        let r = self.value.recip();
        let r2 = r.clone() * r.clone();
        let r3 = (r2.clone() * r.clone()).scale(2.0);
        self.chain(r, -r2, r3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Dual;

    #[test]
    fn packed_indexing_covers_upper_triangle() {
        let k = 4;
        let mut seen = vec![false; tri_len(k)];
        for i in 0..k {
            for j in i..k {
                let idx = tri_index(i, j, k);
                assert!(!seen[idx]);
                seen[idx] = true;
                assert_eq!(idx, tri_index(j, i, k));
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn product_of_two_seeds() {
        let x = Taylor2::variable(2.0, 0, 2);
        let y = Taylor2::variable(5.0, 1, 2);
        let p = x.clone() * x * y;
        assert_eq!(p.value, 20.0);
        assert_eq!(p.d1(0), 20.0);
        assert_eq!(p.d1(1), 4.0);
        assert_eq!(p.d2(0, 0), 10.0);
        assert_eq!(p.d2(0, 1), 4.0);
        assert_eq!(p.d2(1, 1), 0.0);
    }

    #[test]
    fn nested_dual_yields_third_derivative() {
        // f = x^4 at x = 1.5: f''' = 24 x
        let x = Taylor2 {
            value: Dual::variable(1.5, 0, 1),
            grad: vec![Dual::constant(1.0)],
            hess: vec![Dual::constant(0.0)],
        };
        let f = x.powi(4);
        assert!((f.d2(0, 0).v - 12.0 * 2.25).abs() < 1e-12);
        assert!((f.d2(0, 0).deriv(0) - 36.0).abs() < 1e-12);
    }
}
