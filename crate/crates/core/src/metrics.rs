//! Temporal metric `h₁₁(t)`, spatial metric `φᵢⱼ(x)` and their Christoffel
//! symbols.
//!
//! Metrics report their values on [`Dual`] arguments so first derivatives are
//! exact whatever the metric was built from.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exprlang::{parse, ExprAst, Var};
use crate::jet::{CoordMap, JetChange};
use crate::linalg::inverse_with_condition;
use crate::scalar::Dual;

/// Largest admissible condition number of a metric matrix.
pub const MAX_CONDITION: f64 = 1e12;
/// Smallest admissible `|det φ|`.
pub const MIN_DET: f64 = 1e-12;

/// A Riemannian metric `h₁₁(t)` on the time axis.
pub trait TemporalMetric: Send + Sync + fmt::Debug {
    /// `h₁₁` evaluated on a dual number in `t`.
    fn h11_dual(&self, t: &Dual) -> Result<Dual>;

    /// `h₁₁(t)`, rejecting non-positive values.
    fn h11(&self, t: f64) -> Result<f64> {
        Ok(self.h11_and_derivative(t)?.0)
    }

    /// `(h₁₁(t), dh₁₁/dt)`, rejecting non-positive values.
    fn h11_and_derivative(&self, t: f64) -> Result<(f64, f64)> {
        let h = self.h11_dual(&Dual::variable(t, 0, 1))?;
        if !(h.v > 0.0) {
            return Err(Error::MetricDegenerate(format!("h11({t}) = {} is not positive", h.v)));
        }
        Ok((h.v, h.deriv(0)))
    }
}

/// `H¹₁₁ = (h¹¹/2) dh₁₁/dt`
pub fn temporal_christoffel(h: &dyn TemporalMetric, t: f64) -> Result<f64> {
    let (v, d) = h.h11_and_derivative(t)?;
    Ok(0.5 * d / v)
}

/// `h₁₁` given as an expression in `t`.
#[derive(Clone, Debug)]
pub struct ExprTemporalMetric {
    ast: ExprAst,
}

impl ExprTemporalMetric {
    pub fn parse(text: &str) -> Result<Self> {
        let ast = parse(text, 1)?;
        let mut bad = None;
        ast.root.visit_vars(&mut |v| {
            if v != Var::T {
                bad.get_or_insert(v);
            }
        });
        if let Some(v) = bad {
            return Err(Error::Invalid(format!("h11 may only depend on t, found `{v}`")));
        }
        Ok(ExprTemporalMetric { ast })
    }
}

impl TemporalMetric for ExprTemporalMetric {
    fn h11_dual(&self, t: &Dual) -> Result<Dual> {
        let z = Dual::constant(0.0);
        Ok(self.ast.eval(&[t.clone(), z.clone(), z])?)
    }
}

/// `h₁₁` from a callback returning `(h₁₁(t), dh₁₁/dt)`.
#[derive(Clone)]
pub struct FnTemporalMetric(pub Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>);

impl fmt::Debug for FnTemporalMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnTemporalMetric")
    }
}

impl TemporalMetric for FnTemporalMetric {
    fn h11_dual(&self, t: &Dual) -> Result<Dual> {
        let (v, d) = (self.0)(t.v);
        Ok(Dual::with_tangent(v, t.d.iter().map(|dt| dt * d).collect()))
    }
}

/// `h̃₁₁(t̃) = h₁₁(t(t̃))·(dt/dt̃)²`, the metric seen from the other chart of a
/// change.
#[derive(Clone, Debug)]
pub struct PulledBackTemporal {
    h: Arc<dyn TemporalMetric>,
    inverse: Arc<dyn CoordMap>,
}

impl PulledBackTemporal {
    pub fn new(h: Arc<dyn TemporalMetric>, change: &JetChange) -> Self {
        PulledBackTemporal {
            h,
            inverse: change.time.inverse.clone(),
        }
    }
}

impl TemporalMetric for PulledBackTemporal {
    fn h11_dual(&self, tt: &Dual) -> Result<Dual> {
        let jet = self.inverse.jet(&[tt.v])?;
        let arg = [tt.clone()];
        let t = jet.apply(&arg).remove(0);
        let dt = jet.apply_jacobian(&arg).remove(0);
        Ok(self.h.h11_dual(&t)? * dt.clone() * dt)
    }
}

/// A semi-Riemannian metric `φᵢⱼ(x)` on the spatial manifold.
pub trait SpatialMetric: Send + Sync + fmt::Debug {
    fn n(&self) -> usize;

    /// Row-major `n x n` components evaluated on dual spatial coordinates.
    fn phi_dual(&self, x: &[Dual]) -> Result<Vec<Dual>>;

    fn phi(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.n();
        let xs: Vec<Dual> = x.iter().map(|&v| Dual::constant(v)).collect();
        let e = self.phi_dual(&xs)?;
        Ok(DMatrix::from_fn(n, n, |i, j| e[i * n + j].v))
    }
}

/// `φ(x)` and `φ⁻¹(x)` after the symmetry and non-degeneracy checks.
pub fn metric_with_inverse(phi: &dyn SpatialMetric, x: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = phi.phi(x)?;
    let inv = checked_inverse(&m)?;
    Ok((m, inv))
}

fn checked_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(1.0) {
        return Err(Error::MetricDegenerate(format!(
            "phi is not symmetric (defect {asym:e})"
        )));
    }
    let det = m.determinant();
    if det.abs() < MIN_DET {
        return Err(Error::MetricDegenerate(format!("det phi = {det:e}")));
    }
    match inverse_with_condition(m) {
        Some((inv, cond)) if cond <= MAX_CONDITION => Ok(inv),
        Some((_, cond)) => Err(Error::MetricDegenerate(format!("condition number {cond:e}"))),
        None => Err(Error::MetricDegenerate("phi is singular".into())),
    }
}

/// Christoffel symbols `γⁱⱼₖ` at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    pub n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Christoffel {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + k] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `γⁱⱼₖ yʲ yᵏ`
    pub fn contract_yy(&self, y: &[f64]) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |i, _| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    acc += self.get(i, j, k) * y[j] * y[k];
                }
            }
            acc
        })
    }

    /// `(i, k) ↦ γⁱₖₘ yᵐ`
    pub fn contract_y(&self, y: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, k| (0..n).map(|m| self.get(i, k, m) * y[m]).sum())
    }
}

/// `γⁱⱼₖ = (φⁱᵐ/2)(∂ₖφⱼₘ + ∂ⱼφₖₘ − ∂ₘφⱼₖ)`, symmetric in `j, k` by
/// construction.
pub fn spatial_christoffel(phi: &dyn SpatialMetric, x: &[f64]) -> Result<Christoffel> {
    let n = phi.n();
    if x.len() != n {
        return Err(Error::Invalid(format!(
            "point has {} coordinates, metric has {n}",
            x.len()
        )));
    }
    let xs: Vec<Dual> = x.iter().enumerate().map(|(i, &v)| Dual::variable(v, i, n)).collect();
    let e = phi.phi_dual(&xs)?;
    let m = DMatrix::from_fn(n, n, |i, j| e[i * n + j].v);
    let inv = checked_inverse(&m)?;
    let d = |j: usize, m: usize, k: usize| e[j * n + m].deriv(k);
    let mut g = Christoffel::zeros(n);
    for j in 0..n {
        for k in j..n {
            // lowered symbol Γ_{m,jk}
            let low: Vec<f64> = (0..n).map(|m| 0.5 * (d(j, m, k) + d(k, m, j) - d(j, k, m))).collect();
            for i in 0..n {
                let v: f64 = (0..n).map(|m| inv[(i, m)] * low[m]).sum();
                g.set(i, j, k, v);
                g.set(i, k, j, v);
            }
        }
    }
    Ok(g)
}

/// `φᵢⱼ` given entry-wise as expressions in `x1..xn`.
#[derive(Clone, Debug)]
pub struct ExprSpatialMetric {
    n: usize,
    entries: Vec<ExprAst>,
}

impl ExprSpatialMetric {
    /// `rows[i][j]` is the text of `φᵢⱼ`.
    pub fn parse<S: AsRef<str>>(rows: &[Vec<S>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("phi must be a non-empty square matrix".into()));
        }
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            for s in row {
                let ast = parse(s.as_ref(), n)?;
                let mut bad = None;
                ast.root.visit_vars(&mut |v| {
                    if !matches!(v, Var::X(_)) {
                        bad.get_or_insert(v);
                    }
                });
                if let Some(v) = bad {
                    return Err(Error::Invalid(format!("phi may only depend on x, found `{v}`")));
                }
                entries.push(ast);
            }
        }
        Ok(ExprSpatialMetric { n, entries })
    }

    /// The flat metric `δᵢⱼ`.
    pub fn euclidean(n: usize) -> Self {
        let rows: Vec<Vec<&str>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { "1" } else { "0" }).collect())
            .collect();
        ExprSpatialMetric::parse(&rows).expect("constant metric parses")
    }
}

impl SpatialMetric for ExprSpatialMetric {
    fn n(&self) -> usize {
        self.n
    }

    fn phi_dual(&self, x: &[Dual]) -> Result<Vec<Dual>> {
        let n = self.n;
        let mut env = vec![Dual::constant(0.0); 2 * n + 1];
        env[1..=n].clone_from_slice(x);
        self.entries.iter().map(|e| Ok(e.eval(&env)?)).collect()
    }
}

type MetricCallback = dyn Fn(&[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) + Send + Sync;

/// `φ` from a callback returning the matrix and its partials `∂φ/∂xᵃ`.
#[derive(Clone)]
pub struct FnSpatialMetric {
    pub n: usize,
    pub f: Arc<MetricCallback>,
}

impl fmt::Debug for FnSpatialMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnSpatialMetric(n = {})", self.n)
    }
}

impl SpatialMetric for FnSpatialMetric {
    fn n(&self) -> usize {
        self.n
    }

    fn phi_dual(&self, x: &[Dual]) -> Result<Vec<Dual>> {
        let n = self.n;
        let re: Vec<f64> = x.iter().map(|v| v.v).collect();
        let (m, dm) = (self.f)(&re);
        let k = x.iter().map(|v| v.d.len()).max().unwrap_or(0);
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let d = (0..k)
                    .map(|c| (0..n).map(|a| dm[a][(i, j)] * x[a].deriv(c)).sum())
                    .collect();
                out.push(Dual::with_tangent(m[(i, j)], d));
            }
        }
        Ok(out)
    }
}

/// `φ̃ₚq(x̃) = φᵢⱼ(x(x̃)) (∂xⁱ/∂x̃ᵖ)(∂xʲ/∂x̃q)`
#[derive(Clone, Debug)]
pub struct PulledBackSpatial {
    phi: Arc<dyn SpatialMetric>,
    inverse: Arc<dyn CoordMap>,
}

impl PulledBackSpatial {
    pub fn new(phi: Arc<dyn SpatialMetric>, change: &JetChange) -> Self {
        PulledBackSpatial {
            phi,
            inverse: change.space.inverse.clone(),
        }
    }
}

impl SpatialMetric for PulledBackSpatial {
    fn n(&self) -> usize {
        self.phi.n()
    }

    fn phi_dual(&self, xt: &[Dual]) -> Result<Vec<Dual>> {
        let n = self.n();
        let re: Vec<f64> = xt.iter().map(|v| v.v).collect();
        let jet = self.inverse.jet(&re)?;
        let x = jet.apply(xt);
        let jinv = jet.apply_jacobian(xt);
        let p = self.phi.phi_dual(&x)?;
        let mut out = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let mut acc = Dual::constant(0.0);
                for i in 0..n {
                    for j in 0..n {
                        acc = acc + p[i * n + j].clone() * jinv[i * n + a].clone() * jinv[j * n + b].clone();
                    }
                }
                out.push(acc);
            }
        }
        Ok(out)
    }
}
