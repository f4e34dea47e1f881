//! Points of J¹(ℝ, M), coordinate changes of the base and their prolongation.
//!
//! A [`JetChange`] pairs a time reparametrisation `t̃(t)` with a spatial
//! diffeomorphism `x̃(x)`. Both directions are supplied by the caller as
//! [`CoordMap`]s; consistency of the pair is verified at the points where the
//! change is used rather than by numerical inversion.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exprlang::{parse, tri_len, Expr, ExprAst, Taylor2, Var};
use crate::scalar::{Dual, Scalar};

/// Smallest admissible `|dt̃/dt|` and `|det ∂x̃/∂x|`.
pub const SINGULAR_EPS: f64 = 1e-12;
/// Tolerance of the forward∘inverse identity check.
pub const INVERSE_TOL: f64 = 1e-9;

/// A point `(t, xⁱ, y₁ⁱ)` of the 1-jet space.
#[derive(Clone, Debug, PartialEq)]
pub struct JetPoint {
    pub t: f64,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl JetPoint {
    pub fn new(t: f64, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Invalid(format!(
                "jet point needs len(x) = len(y) >= 1, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        if !t.is_finite() || x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("jet point has non-finite entries".into()));
        }
        Ok(JetPoint {
            t,
            x: DVector::from_vec(x),
            y: DVector::from_vec(y),
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `[t, x1..xn, y1..yn]`
    pub fn env(&self) -> Vec<f64> {
        crate::exprlang::pack(self.t, self.x.as_slice(), self.y.as_slice())
    }

    pub fn with_y(&self, y: DVector<f64>) -> JetPoint {
        JetPoint {
            t: self.t,
            x: self.x.clone(),
            y,
        }
    }
}

/// Derivatives up to third order of a map `ℝᵈ → ℝᵈ` at a base point.
#[derive(Clone, Debug)]
pub struct MapJet {
    pub dim: usize,
    pub at: Vec<f64>,
    pub value: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    d3: Vec<f64>,
}

impl MapJet {
    /// `∂fⁱ/∂uᵃ`
    pub fn d1(&self, i: usize, a: usize) -> f64 {
        self.d1[i * self.dim + a]
    }

    /// `∂²fⁱ/∂uᵃ∂uᵇ`
    pub fn d2(&self, i: usize, a: usize, b: usize) -> f64 {
        let d = self.dim;
        self.d2[(i * d + a) * d + b]
    }

    /// `∂³fⁱ/∂uᵃ∂uᵇ∂uᶜ`
    pub fn d3(&self, i: usize, a: usize, b: usize, c: usize) -> f64 {
        let d = self.dim;
        self.d3[((i * d + a) * d + b) * d + c]
    }

    pub fn jacobian(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, a| self.d1(i, a))
    }

    /// Hessian of component `i`.
    pub fn hessian(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |a, b| self.d2(i, a, b))
    }

    /// Build from outputs evaluated on inputs seeded as independent variables
    /// in both layers of `Taylor2<Dual>` around `at`.
    pub(crate) fn from_outputs(at: Vec<f64>, outs: &[Taylor2<Dual>]) -> Self {
        let d = at.len();
        let mut value = Vec::with_capacity(d);
        let mut d1 = Vec::with_capacity(d * d);
        let mut d2 = Vec::with_capacity(d * d * d);
        let mut d3 = Vec::with_capacity(d * d * d * d);
        for o in outs {
            value.push(o.value.v);
            for a in 0..d {
                d1.push(o.d1(a).v);
            }
            for a in 0..d {
                for b in 0..d {
                    d2.push(o.d2(a, b).v);
                }
            }
            for a in 0..d {
                for b in 0..d {
                    let h = o.d2(a, b);
                    for c in 0..d {
                        d3.push(h.deriv(c));
                    }
                }
            }
        }
        MapJet {
            dim: d,
            at,
            value,
            d1,
            d2,
            d3,
        }
    }

    /// Evaluate the cubic Taylor polynomial of the map at `input`, whose real
    /// parts must equal `self.at`. For derivative-carrying scalars of total
    /// order at most three this reproduces the composition exactly.
    pub fn apply<S: Scalar>(&self, input: &[S]) -> Vec<S> {
        let d = self.dim;
        let delta: Vec<S> = input
            .iter()
            .zip(&self.at)
            .map(|(u, &a)| u.clone() - S::cst(a))
            .collect();
        (0..d)
            .map(|i| {
                let mut acc = S::cst(self.value[i]);
                for a in 0..d {
                    acc = acc + delta[a].scale(self.d1(i, a));
                    for b in 0..d {
                        let ab = delta[a].clone() * delta[b].clone();
                        acc = acc + ab.scale(0.5 * self.d2(i, a, b));
                        for c in 0..d {
                            let c3 = self.d3(i, a, b, c);
                            if c3 != 0.0 {
                                acc = acc + (ab.clone() * delta[c].clone()).scale(c3 / 6.0);
                            }
                        }
                    }
                }
                acc
            })
            .collect()
    }

    /// Jacobian entries `(i, a)` (row-major) as functions of `input`, accurate
    /// to second order in the displacement from `self.at`.
    pub fn apply_jacobian<S: Scalar>(&self, input: &[S]) -> Vec<S> {
        let d = self.dim;
        let delta: Vec<S> = input
            .iter()
            .zip(&self.at)
            .map(|(u, &a)| u.clone() - S::cst(a))
            .collect();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for a in 0..d {
                let mut acc = S::cst(self.d1(i, a));
                for b in 0..d {
                    acc = acc + delta[b].scale(self.d2(i, a, b));
                    for c in 0..d {
                        let c3 = self.d3(i, a, b, c);
                        if c3 != 0.0 {
                            acc = acc + (delta[b].clone() * delta[c].clone()).scale(0.5 * c3);
                        }
                    }
                }
                out.push(acc);
            }
        }
        out
    }
}

/// Inputs seeded in both layers of `Taylor2<Dual>` as the `k` independent
/// variables sitting at `at`.
pub(crate) fn seed_t2d(at: &[f64]) -> Vec<Taylor2<Dual>> {
    let k = at.len();
    at.iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut grad = vec![Dual::constant(0.0); k];
            grad[i] = Dual::constant(1.0);
            Taylor2 {
                value: Dual::variable(v, i, k),
                grad,
                hess: vec![Dual::constant(0.0); tri_len(k)],
            }
        })
        .collect()
}

/// A smooth map `ℝᵈ → ℝᵈ` that can report its derivatives up to order three.
pub trait CoordMap: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn jet(&self, at: &[f64]) -> Result<MapJet>;

    fn value_jacobian(&self, at: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let j = self.jet(at)?;
        let m = j.jacobian();
        Ok((j.value, m))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapArg {
    /// A map of the time coordinate `t`.
    Time,
    /// A map of the spatial coordinates `x1..xn`.
    Space,
}

/// A coordinate map given by one expression per output component.
#[derive(Clone, Debug)]
pub struct ExprMap {
    arg: MapArg,
    exprs: Vec<ExprAst>,
    n: usize,
}

impl ExprMap {
    /// Check that every component only uses the admissible variables.
    pub fn new(arg: MapArg, exprs: Vec<ExprAst>) -> Result<Self> {
        let n = match arg {
            MapArg::Time => 1,
            MapArg::Space => exprs.len(),
        };
        if exprs.len() != n || n == 0 {
            return Err(Error::Invalid(format!(
                "a {arg:?} map needs {n} component(s), got {}",
                exprs.len()
            )));
        }
        for e in &exprs {
            let mut bad = None;
            e.root.visit_vars(&mut |v| {
                let ok = match (arg, v) {
                    (MapArg::Time, Var::T) => true,
                    (MapArg::Space, Var::X(i)) => i < n,
                    _ => false,
                };
                if !ok && bad.is_none() {
                    bad = Some(v);
                }
            });
            if let Some(v) = bad {
                return Err(Error::Invalid(format!(
                    "variable `{v}` is not allowed in a {} map",
                    match arg {
                        MapArg::Time => "time",
                        MapArg::Space => "space",
                    }
                )));
            }
        }
        let exprs = exprs.into_iter().map(|e| ExprAst { root: e.root, n }).collect();
        Ok(ExprMap { arg, exprs, n })
    }

    pub fn parse_time(text: &str) -> Result<Self> {
        ExprMap::new(MapArg::Time, vec![parse(text, 1)?])
    }

    pub fn parse_space<S: AsRef<str>>(texts: &[S]) -> Result<Self> {
        let n = texts.len();
        let exprs = texts
            .iter()
            .map(|s| parse(s.as_ref(), n.max(1)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        ExprMap::new(MapArg::Space, exprs)
    }

    pub fn from_exprs(arg: MapArg, roots: Vec<Expr>) -> Result<Self> {
        let n = roots.len();
        ExprMap::new(arg, roots.into_iter().map(|root| ExprAst { root, n }).collect())
    }

    pub fn identity(arg: MapArg, n: usize) -> Self {
        let roots = match arg {
            MapArg::Time => vec![Expr::var(Var::T)],
            MapArg::Space => (0..n).map(|i| Expr::var(Var::X(i))).collect(),
        };
        ExprMap::from_exprs(arg, roots).expect("identity map is well formed")
    }

    pub fn components(&self) -> &[ExprAst] {
        &self.exprs
    }

    fn slots(&self) -> Vec<usize> {
        match self.arg {
            MapArg::Time => vec![0],
            MapArg::Space => (1..=self.n).collect(),
        }
    }

    fn eval_env<S: Scalar>(&self, inputs: &[S]) -> Result<Vec<S>> {
        let mut env = vec![S::zero(); 2 * self.n + 1];
        for (slot, v) in self.slots().into_iter().zip(inputs) {
            env[slot] = v.clone();
        }
        self.exprs.iter().map(|e| Ok(e.eval(&env)?)).collect()
    }
}

impl CoordMap for ExprMap {
    fn dim(&self) -> usize {
        self.exprs.len()
    }

    fn jet(&self, at: &[f64]) -> Result<MapJet> {
        let outs = self.eval_env(&seed_t2d(at))?;
        Ok(MapJet::from_outputs(at.to_vec(), &outs))
    }

    fn value_jacobian(&self, at: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let k = at.len();
        let inputs: Vec<Dual> = at.iter().enumerate().map(|(i, &v)| Dual::variable(v, i, k)).collect();
        let outs = self.eval_env(&inputs)?;
        let value = outs.iter().map(|o| o.v).collect();
        let jac = DMatrix::from_fn(k, k, |i, a| outs[i].deriv(a));
        Ok((value, jac))
    }
}

/// Numerical inverse of a forward map, for changes whose inverse has no
/// closed form. The value is found by Newton's method; derivatives come from
/// inverting the forward map's cubic Taylor polynomial in jet arithmetic.
/// Recent jets are memoized, since laws evaluate the same point many times.
#[derive(Clone, Debug)]
pub struct InverseMap {
    forward: Arc<dyn CoordMap>,
    /// Affine starting guess `x₀ = P u + q`.
    guess: Option<(DMatrix<f64>, DVector<f64>)>,
    cache: Arc<Mutex<VecDeque<(Vec<f64>, MapJet)>>>,
}

const INVERSE_CACHE: usize = 8;

impl InverseMap {
    pub fn new(forward: Arc<dyn CoordMap>) -> Self {
        InverseMap {
            forward,
            guess: None,
            cache: Arc::default(),
        }
    }

    pub fn with_affine_guess(forward: Arc<dyn CoordMap>, p: DMatrix<f64>, q: DVector<f64>) -> Self {
        InverseMap {
            forward,
            guess: Some((p, q)),
            cache: Arc::default(),
        }
    }

    fn solve(&self, u: &[f64]) -> Result<Vec<f64>> {
        let target = DVector::from_column_slice(u);
        let mut x = match &self.guess {
            Some((p, q)) => p * &target + q,
            None => target.clone(),
        };
        let scale = 1.0 + target.amax();
        for _ in 0..100 {
            let (fx, jac) = self.forward.value_jacobian(x.as_slice())?;
            let r = DVector::from_vec(fx) - &target;
            if r.amax() <= 4.0 * f64::EPSILON * scale {
                return Ok(x.as_slice().to_vec());
            }
            let step = jac.lu().solve(&r).ok_or(Error::SingularChange {
                what: "det of forward Jacobian during inversion",
                value: 0.0,
            })?;
            x -= &step;
            if step.amax() <= 1e-16 * (1.0 + x.amax()) {
                return Ok(x.as_slice().to_vec());
            }
        }
        let (fx, _) = self.forward.value_jacobian(x.as_slice())?;
        let r = (DVector::from_vec(fx) - &target).amax();
        if r <= 1e-12 * scale {
            Ok(x.as_slice().to_vec())
        } else {
            Err(Error::InverseMismatch { mismatch: r })
        }
    }
}

impl CoordMap for InverseMap {
    fn dim(&self) -> usize {
        self.forward.dim()
    }

    fn jet(&self, at: &[f64]) -> Result<MapJet> {
        let hit = |k: &Vec<f64>| k.len() == at.len() && k.iter().zip(at).all(|(a, b)| a.to_bits() == b.to_bits());
        if let Some((_, j)) = self.cache.lock().expect("cache lock").iter().find(|(k, _)| hit(k)) {
            return Ok(j.clone());
        }
        let jet = self.jet_uncached(at)?;
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() == INVERSE_CACHE {
            cache.pop_front();
        }
        cache.push_back((at.to_vec(), jet.clone()));
        Ok(jet)
    }

    fn value_jacobian(&self, at: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let x = self.solve(at)?;
        let (_, jac) = self.forward.value_jacobian(&x)?;
        let inv = jac.lu().try_inverse().ok_or(Error::SingularChange {
            what: "det of forward Jacobian",
            value: 0.0,
        })?;
        Ok((x, inv))
    }
}

impl InverseMap {
    fn jet_uncached(&self, at: &[f64]) -> Result<MapJet> {
        let x_star = self.solve(at)?;
        let fwd = self.forward.jet(&x_star)?;
        let k_inv = fwd.jacobian().lu().try_inverse().ok_or(Error::SingularChange {
            what: "det of forward Jacobian",
            value: 0.0,
        })?;
        let d = at.len();
        let u = seed_t2d(at);
        let mut x: Vec<Taylor2<Dual>> = x_star.iter().map(|&v| Taylor2::constant(Dual::constant(v))).collect();
        // each sweep at least doubles the order to which x(u) is exact
        for _ in 0..3 {
            let fx = fwd.apply(&x);
            let r: Vec<Taylor2<Dual>> = fx.into_iter().zip(&u).map(|(f, ui)| f - ui.clone()).collect();
            x = (0..d)
                .map(|i| {
                    let mut acc = x[i].clone();
                    for (a, ra) in r.iter().enumerate() {
                        acc = acc - ra.scale(k_inv[(i, a)]);
                    }
                    acc
                })
                .collect();
        }
        let mut jet = MapJet::from_outputs(at.to_vec(), &x);
        jet.value = x_star;
        Ok(jet)
    }
}

/// `second ∘ first`
#[derive(Clone, Debug)]
pub struct ComposedMap {
    first: Arc<dyn CoordMap>,
    second: Arc<dyn CoordMap>,
}

impl ComposedMap {
    pub fn new(first: Arc<dyn CoordMap>, second: Arc<dyn CoordMap>) -> Self {
        ComposedMap { first, second }
    }
}

impl CoordMap for ComposedMap {
    fn dim(&self) -> usize {
        self.first.dim()
    }

    fn jet(&self, at: &[f64]) -> Result<MapJet> {
        let j1 = self.first.jet(at)?;
        let x = j1.apply(&seed_t2d(at));
        let mid: Vec<f64> = x.iter().map(|v| v.re()).collect();
        let j2 = self.second.jet(&mid)?;
        Ok(MapJet::from_outputs(at.to_vec(), &j2.apply(&x)))
    }

    fn value_jacobian(&self, at: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (v1, j1) = self.first.value_jacobian(at)?;
        let (v2, j2) = self.second.value_jacobian(&v1)?;
        Ok((v2, j2 * j1))
    }
}

/// A time reparametrisation `t̃ = t̃(t)` with its inverse `t = t(t̃)`.
#[derive(Clone, Debug)]
pub struct TimeChange {
    pub forward: Arc<dyn CoordMap>,
    pub inverse: Arc<dyn CoordMap>,
}

impl TimeChange {
    pub fn new(forward: Arc<dyn CoordMap>, inverse: Arc<dyn CoordMap>) -> Result<Self> {
        if forward.dim() != 1 || inverse.dim() != 1 {
            return Err(Error::Invalid("time maps must be one-dimensional".into()));
        }
        Ok(TimeChange { forward, inverse })
    }

    pub fn parse(forward: &str, inverse: &str) -> Result<Self> {
        TimeChange::new(
            Arc::new(ExprMap::parse_time(forward)?),
            Arc::new(ExprMap::parse_time(inverse)?),
        )
    }

    pub fn identity() -> Self {
        let id: Arc<dyn CoordMap> = Arc::new(ExprMap::identity(MapArg::Time, 1));
        TimeChange {
            forward: id.clone(),
            inverse: id,
        }
    }
}

/// A spatial diffeomorphism `x̃ = x̃(x)` with its inverse.
#[derive(Clone, Debug)]
pub struct SpaceChange {
    pub forward: Arc<dyn CoordMap>,
    pub inverse: Arc<dyn CoordMap>,
}

impl SpaceChange {
    pub fn new(forward: Arc<dyn CoordMap>, inverse: Arc<dyn CoordMap>) -> Result<Self> {
        if forward.dim() != inverse.dim() {
            return Err(Error::Invalid("space maps must have equal dimensions".into()));
        }
        Ok(SpaceChange { forward, inverse })
    }

    pub fn parse<S: AsRef<str>>(forward: &[S], inverse: &[S]) -> Result<Self> {
        SpaceChange::new(
            Arc::new(ExprMap::parse_space(forward)?),
            Arc::new(ExprMap::parse_space(inverse)?),
        )
    }

    pub fn identity(n: usize) -> Self {
        let id: Arc<dyn CoordMap> = Arc::new(ExprMap::identity(MapArg::Space, n));
        SpaceChange {
            forward: id.clone(),
            inverse: id,
        }
    }

    pub fn n(&self) -> usize {
        self.forward.dim()
    }
}

/// A change of jet coordinates induced by `(t̃(t), x̃(x))`.
#[derive(Clone, Debug)]
pub struct JetChange {
    pub time: TimeChange,
    pub space: SpaceChange,
}

/// Everything a transformation law needs about a change at one point.
#[derive(Clone, Debug)]
pub struct ChangeAt {
    pub t: f64,
    pub t_tilde: f64,
    /// `dt̃/dt`
    pub dtt_dt: f64,
    /// `d²t̃/dt²`
    pub d2tt_dt2: f64,
    /// `dt/dt̃`, read from the inverse map at `t̃`
    pub dt_dtt: f64,
    /// `d²t/dt̃²`
    pub d2t_dtt2: f64,
    pub x: DVector<f64>,
    pub x_tilde: DVector<f64>,
    /// `∂x̃ⁱ/∂xʲ`
    pub jac: DMatrix<f64>,
    /// `∂xⁱ/∂x̃ʲ` at `x̃`
    pub jac_inv: DMatrix<f64>,
    /// `hess_fwd[k][(i, j)] = ∂²x̃ᵏ/∂xⁱ∂xʲ`
    pub hess_fwd: Vec<DMatrix<f64>>,
    /// `hess_inv[l][(q, r)] = ∂²xˡ/∂x̃q∂x̃r`
    pub hess_inv: Vec<DMatrix<f64>>,
    pub time_fwd: MapJet,
    pub time_inv: MapJet,
    pub space_fwd: MapJet,
    pub space_inv: MapJet,
}

impl ChangeAt {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `ỹ = (∂x̃/∂x)(dt/dt̃) y`
    pub fn prolong_y<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        let n = self.n();
        (0..n)
            .map(|k| {
                let mut acc = S::zero();
                for j in 0..n {
                    acc = acc + y[j].scale(self.jac[(k, j)] * self.dt_dtt);
                }
                acc
            })
            .collect()
    }

    /// `d(dt/dt̃)/dt = (d²t/dt̃²)(dt̃/dt)`
    pub fn d_dtdtt_dt(&self) -> f64 {
        self.d2t_dtt2 * self.dtt_dt
    }

    /// `∂ỹᵏ/∂t`
    pub fn dyt_dt<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        let n = self.n();
        let f = self.d_dtdtt_dt();
        (0..n)
            .map(|k| {
                let mut acc = S::zero();
                for j in 0..n {
                    acc = acc + y[j].scale(self.jac[(k, j)] * f);
                }
                acc
            })
            .collect()
    }

    /// `∂ỹᵏ/∂xⁱ`, row-major `(k, i)`.
    pub fn dyt_dx<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * n);
        for k in 0..n {
            for i in 0..n {
                let mut acc = S::zero();
                for m in 0..n {
                    acc = acc + y[m].scale(self.hess_fwd[k][(i, m)] * self.dt_dtt);
                }
                out.push(acc);
            }
        }
        out
    }

    pub fn dyt_dx_mat(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_row_slice(n, n, &self.dyt_dx(y.as_slice()))
    }
}

impl JetChange {
    pub fn new(time: TimeChange, space: SpaceChange) -> Self {
        JetChange { time, space }
    }

    pub fn identity(n: usize) -> Self {
        JetChange {
            time: TimeChange::identity(),
            space: SpaceChange::identity(n),
        }
    }

    pub fn n(&self) -> usize {
        self.space.n()
    }

    /// The change going the other way.
    pub fn inverse(&self) -> JetChange {
        JetChange {
            time: TimeChange {
                forward: self.time.inverse.clone(),
                inverse: self.time.forward.clone(),
            },
            space: SpaceChange {
                forward: self.space.inverse.clone(),
                inverse: self.space.forward.clone(),
            },
        }
    }

    /// Apply `self` first and `next` afterwards.
    pub fn then(&self, next: &JetChange) -> JetChange {
        let c = |a: &Arc<dyn CoordMap>, b: &Arc<dyn CoordMap>| -> Arc<dyn CoordMap> {
            Arc::new(ComposedMap::new(a.clone(), b.clone()))
        };
        JetChange {
            time: TimeChange {
                forward: c(&self.time.forward, &next.time.forward),
                inverse: c(&next.time.inverse, &self.time.inverse),
            },
            space: SpaceChange {
                forward: c(&self.space.forward, &next.space.forward),
                inverse: c(&next.space.inverse, &self.space.inverse),
            },
        }
    }

    /// Evaluate the change at `(t, x)`, checking non-singularity and the
    /// consistency of the two directions.
    pub fn at(&self, t: f64, x: &DVector<f64>) -> Result<ChangeAt> {
        let n = x.len();
        if n != self.n() {
            return Err(Error::Invalid(format!(
                "point dimension {n} does not match change dimension {}",
                self.n()
            )));
        }
        let time_fwd = self.time.forward.jet(&[t])?;
        let t_tilde = time_fwd.value[0];
        let dtt_dt = time_fwd.d1(0, 0);
        if dtt_dt.abs() < SINGULAR_EPS {
            return Err(Error::SingularChange {
                what: "dt̃/dt",
                value: dtt_dt,
            });
        }
        let time_inv = self.time.inverse.jet(&[t_tilde])?;
        let back = time_inv.value[0];
        if (back - t).abs() > INVERSE_TOL * t.abs().max(1.0) {
            return Err(Error::InverseMismatch {
                mismatch: (back - t).abs(),
            });
        }
        let space_fwd = self.space.forward.jet(x.as_slice())?;
        let jac = space_fwd.jacobian();
        let det = jac.determinant();
        if det.abs() < SINGULAR_EPS {
            return Err(Error::SingularChange {
                what: "det ∂x̃/∂x",
                value: det,
            });
        }
        let x_tilde = DVector::from_vec(space_fwd.value.clone());
        let space_inv = self.space.inverse.jet(x_tilde.as_slice())?;
        let mismatch = space_inv
            .value
            .iter()
            .zip(x.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / b.abs().max(1.0)));
        if mismatch > INVERSE_TOL {
            return Err(Error::InverseMismatch { mismatch });
        }
        Ok(ChangeAt {
            t,
            t_tilde,
            dtt_dt,
            d2tt_dt2: time_fwd.d2(0, 0, 0),
            dt_dtt: time_inv.d1(0, 0),
            d2t_dtt2: time_inv.d2(0, 0, 0),
            x: x.clone(),
            jac,
            jac_inv: space_inv.jacobian(),
            hess_fwd: (0..n).map(|k| space_fwd.hessian(k)).collect(),
            hess_inv: (0..n).map(|l| space_inv.hessian(l)).collect(),
            x_tilde,
            time_fwd,
            time_inv,
            space_fwd,
            space_inv,
        })
    }
}

/// The jet-prolonged image of `p`: `(t̃, x̃, ỹ)` with `ỹ = (∂x̃/∂x)(dt/dt̃) y`.
pub fn prolong(change: &JetChange, p: &JetPoint) -> Result<JetPoint> {
    let c = change.at(p.t, &p.x)?;
    Ok(prolong_at(&c, p))
}

pub fn prolong_at(c: &ChangeAt, p: &JetPoint) -> JetPoint {
    JetPoint {
        t: c.t_tilde,
        x: c.x_tilde.clone(),
        y: DVector::from_vec(c.prolong_y(p.y.as_slice())),
    }
}

/// Natural frame `{∂/∂t, ∂/∂xⁱ, ∂/∂y₁ⁱ}` at `p` expressed in the tilde frame
/// at the prolonged point: row `r` holds the tilde components of the `r`-th
/// old basis vector. Its inverse transpose carries the coframe `{dt, dxⁱ, dy₁ⁱ}`.
pub fn jet_jacobian(change: &JetChange, p: &JetPoint) -> Result<DMatrix<f64>> {
    let c = change.at(p.t, &p.x)?;
    Ok(jet_jacobian_at(&c, p))
}

pub fn jet_jacobian_at(c: &ChangeAt, p: &JetPoint) -> DMatrix<f64> {
    let n = c.n();
    let dim = 2 * n + 1;
    let mut m = DMatrix::zeros(dim, dim);
    m[(0, 0)] = c.dtt_dt;
    let dyt_dt = c.dyt_dt(p.y.as_slice());
    let dyt_dx = c.dyt_dx(p.y.as_slice());
    for j in 0..n {
        m[(0, 1 + n + j)] = dyt_dt[j];
    }
    for i in 0..n {
        for j in 0..n {
            m[(1 + i, 1 + j)] = c.jac[(j, i)];
            m[(1 + i, 1 + n + j)] = dyt_dx[j * n + i];
            m[(1 + n + i, 1 + n + j)] = c.jac[(j, i)] * c.dt_dtt;
        }
    }
    m
}
