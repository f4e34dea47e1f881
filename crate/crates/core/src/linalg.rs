//! Small dense linear-algebra helpers shared by the geometry modules.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Scalar;

/// Inverse together with the 1-norm condition number `‖A‖₁‖A⁻¹‖₁`.
pub fn inverse_with_condition(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let inv = a.clone().lu().try_inverse()?;
    let cond = norm1(a) * norm1(&inv);
    if !cond.is_finite() {
        return None;
    }
    Some((inv, cond))
}

pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Relative discrepancy `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞)`, falling back to the
/// absolute discrepancy when both sides are below `1e-12`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = max_abs(a).max(max_abs(b));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    rel_err(a.as_slice(), b.as_slice())
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    rel_err(a.as_slice(), b.as_slice())
}

/// Solve `A z = b` by Gaussian elimination with partial pivoting on the real
/// parts. `a` is row-major `n x n`. Works for any [`Scalar`], so derivative
/// information in the entries propagates into the solution.
pub fn solve_generic<S: Scalar>(mut a: Vec<S>, mut b: Vec<S>) -> Option<Vec<S>> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].re().abs().total_cmp(&a[j * n + col].re().abs()))?;
        if a[piv * n + col].re() == 0.0 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let inv = a[col * n + col].recip();
        for row in col + 1..n {
            let f = a[row * n + col].clone() * inv.clone();
            for k in col..n {
                let v = a[row * n + k].clone() - f.clone() * a[col * n + k].clone();
                a[row * n + k] = v;
            }
            let v = b[row].clone() - f * b[col].clone();
            b[row] = v;
        }
    }
    let mut z: Vec<S> = vec![S::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for k in row + 1..n {
            acc = acc - a[row * n + k].clone() * z[k].clone();
        }
        z[row] = acc / a[row * n + row].clone();
    }
    Some(z)
}
