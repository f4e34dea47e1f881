//! Seeded random generators for property tests and the covariance harness.
//!
//! All randomness flows through [`ChaCha8Rng`], so a seed reproduces the same
//! draws on every platform.
//!
//! Jet changes are drawn from the family
//! `t̃ = a·t + b + ε·sin t`, `x̃ = A·x + ε·sin(B·x)` with `|a| ∈ [0.5, 2]`,
//! `b ∈ [−1, 1]`, `ε ∈ [0, 0.1]`, singular values of `A` in `[0.5, 2]`
//! (so `cond A ≤ 4`) and `‖B‖₂ ≤ 1`. The Jacobians then stay invertible
//! everywhere. The inverse maps have no closed form and are solved
//! numerically, seeded with the inverse of the affine part.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::exprlang::{BinOp, Expr, ExprAst, Func, Var};
use crate::jet::{CoordMap, ExprMap, InverseMap, JetChange, JetPoint, SpaceChange, TimeChange};
use crate::lagrange::ExprLagrangian;
use crate::metrics::{ExprSpatialMetric, ExprTemporalMetric};
use crate::spray::ExprConnection;

/// Literal for a float inside expression text; exact round trip.
fn lit(v: f64) -> String {
    if v < 0.0 {
        format!("({v:e})")
    } else {
        format!("{v:e}")
    }
}

/// Half-width of the probing box for `t`, `x` and `y`.
pub const PROBE_BOX: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct Generator {
    rng: ChaCha8Rng,
}

impl Generator {
    pub fn new(seed: u64) -> Self {
        Generator {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..=hi)
    }

    fn sign(&mut self) -> f64 {
        if self.rng.gen_bool(0.5) {
            1.0
        } else {
            -1.0
        }
    }

    fn gaussian_matrix(&mut self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| self.rng.sample(StandardNormal))
    }

    fn orthogonal(&mut self, n: usize) -> DMatrix<f64> {
        self.gaussian_matrix(n).qr().q()
    }

    fn vector(&mut self, n: usize, r: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.rng.gen_range(-r..=r))
    }

    pub fn probe_point(&mut self, n: usize) -> JetPoint {
        let t = self.uniform(-PROBE_BOX, PROBE_BOX);
        JetPoint {
            t,
            x: self.vector(n, PROBE_BOX),
            y: self.vector(n, PROBE_BOX),
        }
    }

    pub fn time_change(&mut self) -> Result<TimeChange> {
        let a = self.sign() * self.uniform(0.5, 2.0);
        let b = self.uniform(-1.0, 1.0);
        let eps = self.uniform(0.0, 0.1);
        let fwd = ExprMap::parse_time(&format!("{} * t + {} + {} * sin(t)", lit(a), lit(b), lit(eps)))?;
        let fwd: Arc<dyn CoordMap> = Arc::new(fwd);
        let inv = InverseMap::with_affine_guess(
            fwd.clone(),
            DMatrix::from_element(1, 1, 1.0 / a),
            DVector::from_element(1, -b / a),
        );
        TimeChange::new(fwd, Arc::new(inv))
    }

    pub fn space_change(&mut self, n: usize) -> Result<SpaceChange> {
        let s = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| self.rng.gen_range(0.5..=2.0)));
        let a = self.orthogonal(n) * s * self.orthogonal(n);
        let mut b = self.gaussian_matrix(n);
        let norm = b.norm().max(1e-300);
        b *= self.uniform(0.0, 1.0) / norm;
        let eps = self.uniform(0.0, 0.1);
        let row = |m: &DMatrix<f64>, i: usize| {
            (0..n)
                .map(|j| format!("{} * x{}", lit(m[(i, j)]), j + 1))
                .collect::<Vec<_>>()
                .join(" + ")
        };
        let texts: Vec<String> = (0..n)
            .map(|i| format!("{} + {} * sin({})", row(&a, i), lit(eps), row(&b, i)))
            .collect();
        let fwd: Arc<dyn CoordMap> = Arc::new(ExprMap::parse_space(&texts)?);
        let a_inv = a.try_inverse().expect("singular values are at least 0.5");
        let inv = InverseMap::with_affine_guess(fwd.clone(), a_inv, DVector::zeros(n));
        SpaceChange::new(fwd, Arc::new(inv))
    }

    pub fn jet_change(&mut self, n: usize) -> Result<JetChange> {
        Ok(JetChange::new(self.time_change()?, self.space_change(n)?))
    }

    /// `h₁₁ = c₀·exp(c₁·t) + c₂·t²`, positive for all `t`.
    pub fn temporal_metric(&mut self) -> Result<ExprTemporalMetric> {
        ExprTemporalMetric::parse(&self.temporal_metric_text())
    }

    pub fn temporal_metric_text(&mut self) -> String {
        let c0 = self.uniform(0.5, 2.0);
        let c1 = self.uniform(-0.5, 0.5);
        let c2 = self.uniform(0.0, 0.5);
        format!("{} * exp({} * t) + {} * t^2", lit(c0), lit(c1), lit(c2))
    }

    /// A diagonally dominant, `x`-dependent Riemannian metric.
    pub fn spatial_metric(&mut self, n: usize) -> Result<ExprSpatialMetric> {
        ExprSpatialMetric::parse(&self.spatial_metric_rows(n))
    }

    pub fn spatial_metric_rows(&mut self, n: usize) -> Vec<Vec<String>> {
        let mut rows = vec![vec![String::new(); n]; n];
        let off = 0.4 / n as f64;
        for i in 0..n {
            let d = self.uniform(1.0, 2.0);
            let w = self.uniform(0.0, 0.4);
            let k = self.rng.gen_range(0..n);
            rows[i][i] = format!("{} + {} * sin(x{})^2", lit(d), lit(w), k + 1);
            for j in 0..i {
                let c = self.uniform(-off, off);
                let k = self.rng.gen_range(0..n);
                let ph = self.uniform(-1.0, 1.0);
                let e = format!("{} * cos(x{} + {})", lit(c), k + 1, lit(ph));
                rows[i][j] = e.clone();
                rows[j][i] = e;
            }
        }
        rows
    }

    /// A polynomial Lagrangian whose `y`-Hessian stays invertible on the
    /// probing box while `∂L/∂x` and `∂L/∂y` differ generically.
    pub fn polynomial_lagrangian(&mut self, n: usize) -> Result<ExprLagrangian> {
        ExprLagrangian::parse(&self.polynomial_lagrangian_text(n), n)
    }

    pub fn polynomial_lagrangian_text(&mut self, n: usize) -> String {
        let mut terms = Vec::new();
        for i in 1..=n {
            let c = self.uniform(1.0, 2.0);
            let w = self.uniform(0.0, 0.2);
            terms.push(format!("{} * (1 + {} * x{i}^2) * y{i}^2", lit(c), lit(w)));
            let j = i % n + 1;
            terms.push(format!("{} * t * x{j} * y{i}", lit(self.uniform(-1.0, 1.0))));
            terms.push(format!("{} * x{i}^2 * (1 + t)", lit(self.uniform(-1.0, 1.0))));
            terms.push(format!("{} * y{i}^3", lit(self.uniform(-0.05, 0.05))));
        }
        if n > 1 {
            terms.push(format!("{} * y1 * y2 * x1", lit(self.uniform(-0.1, 0.1))));
        }
        terms.join(" + ")
    }

    /// A connection with polynomial components in `(t, x, y)`.
    pub fn connection(&mut self, n: usize) -> Result<ExprConnection> {
        let poly = |g: &mut Self| {
            let mut terms = vec![lit(g.uniform(-1.0, 1.0))];
            for v in std::iter::once("t".to_string())
                .chain((1..=n).map(|i| format!("x{i}")))
                .chain((1..=n).map(|i| format!("y{i}")))
            {
                terms.push(format!("{} * {v}", lit(g.uniform(-1.0, 1.0))));
            }
            let i = g.rng.gen_range(1..=n);
            let j = g.rng.gen_range(1..=n);
            terms.push(format!("{} * x{i} * y{j}^2", lit(g.uniform(-1.0, 1.0))));
            terms.join(" + ")
        };
        let m: Vec<String> = (0..n).map(|_| poly(self)).collect();
        let rows: Vec<Vec<String>> = (0..n).map(|_| (0..n).map(|_| poly(self)).collect()).collect();
        ExprConnection::parse(&m, &rows)
    }

    /// A random expression in `(t, x, y)` that is smooth everywhere: every
    /// `log`, `sqrt` and division is applied to something bounded below.
    pub fn expression(&mut self, n: usize, depth: usize) -> ExprAst {
        ExprAst {
            root: self.expr(n, depth),
            n,
        }
    }

    fn leaf(&mut self, n: usize) -> Expr {
        match self.rng.gen_range(0..4) {
            0 => Expr::constant(self.uniform(-2.0, 2.0)),
            1 => Expr::var(Var::T),
            2 => Expr::var(Var::X(self.rng.gen_range(0..n))),
            _ => Expr::var(Var::Y(self.rng.gen_range(0..n))),
        }
    }

    fn expr(&mut self, n: usize, depth: usize) -> Expr {
        if depth == 0 {
            return self.leaf(n);
        }
        let sub = |g: &mut Self| g.expr(n, depth - 1);
        let one_plus_sq = |e: Expr| {
            Expr::binary(
                BinOp::Add,
                Expr::constant(1.0),
                Expr::binary(BinOp::Pow, e, Expr::constant(2.0)),
            )
        };
        match self.rng.gen_range(0..11) {
            0 => Expr::binary(BinOp::Add, sub(self), sub(self)),
            1 => Expr::binary(BinOp::Sub, sub(self), sub(self)),
            2 | 3 => Expr::binary(BinOp::Mul, sub(self), sub(self)),
            4 => Expr::binary(BinOp::Div, sub(self), one_plus_sq(sub(self))),
            5 => Expr::binary(BinOp::Pow, sub(self), Expr::constant(self.rng.gen_range(2..=3) as f64)),
            6 => Expr::neg(sub(self)),
            7 => Expr::call(if self.rng.gen_bool(0.5) { Func::Sin } else { Func::Cos }, sub(self)),
            8 => Expr::call(Func::Log, one_plus_sq(sub(self))),
            9 => Expr::call(Func::Sqrt, one_plus_sq(sub(self))),
            _ => {
                // keep the argument of exp moderate
                let inner = Expr::call(Func::Sin, sub(self));
                Expr::call(if self.rng.gen_bool(0.5) { Func::Exp } else { Func::Cosh }, inner)
            }
        }
    }
}
