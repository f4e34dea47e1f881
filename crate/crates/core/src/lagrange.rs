//! Jet Lagrangians `L(t, x, y)`: fundamental metrical d-tensor, Euler–Lagrange
//! semisprays of `𝓛 = L√h₁₁`, the canonical connection `Γ_L` and the
//! gravitational potential, together with a direct Euler–Lagrange residual
//! used as an oracle.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dtensor::{DTensorValue, IndexSlot};
use crate::error::{Error, Result};
use crate::exprlang::{pack, parse, ExprAst, Taylor2};
use crate::jet::{CoordMap, JetChange, JetPoint};
use crate::linalg::{inverse_with_condition, solve_generic};
use crate::metrics::{temporal_christoffel, TemporalMetric};
use crate::scalar::{Dual, Scalar};
use crate::spray::{
    adapted_coframe, connection_from_semispray, CanonicalTemporal, ConnectionFromSemispray, NonlinearConnection,
    RelativisticSemispray, SpatialSemispray,
};

/// Condition number of `g` above which a Lagrangian is rejected.
pub const DEGENERATE_CONDITION: f64 = 1e12;
/// Condition number of `g` above which results carry a warning.
pub const WARN_CONDITION: f64 = 1e8;
/// Step of the central-difference fallback for `∂G/∂y`.
pub const FALLBACK_STEP: f64 = 1e-5;

/// A jet Lagrangian evaluated over truncated-Taylor arithmetic. Environments
/// are laid out as `[t, x1..xn, y1..yn]`.
pub trait LagrangianFn: Send + Sync + fmt::Debug {
    fn n(&self) -> usize;

    /// Value with first and second derivatives over whatever `env` carries.
    fn eval_t2(&self, env: &[Taylor2]) -> Result<Taylor2>;

    /// The same with an extra first-order layer, giving third derivatives.
    /// `None` means the Lagrangian cannot provide them.
    fn eval_t2d(&self, _env: &[Taylor2<Dual>]) -> Option<Result<Taylor2<Dual>>> {
        None
    }

    fn value(&self, p: &JetPoint) -> Result<f64> {
        let env: Vec<Taylor2> = p.env().into_iter().map(Taylor2::constant).collect();
        Ok(self.eval_t2(&env)?.value)
    }
}

/// A Lagrangian given as an expression.
#[derive(Clone, Debug)]
pub struct ExprLagrangian {
    ast: ExprAst,
}

impl ExprLagrangian {
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        Ok(ExprLagrangian { ast: parse(text, n)? })
    }

    /// `L = h¹¹ φᵢⱼ yⁱ yʲ`, whose Euler–Lagrange equations are those of the
    /// affine maps between `(ℝ, h)` and `(M, φ)`.
    pub fn harmonic<S: AsRef<str>>(h11: &str, phi: &[Vec<S>]) -> Result<Self> {
        let n = phi.len();
        let mut terms = Vec::new();
        for (i, row) in phi.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                terms.push(format!("({})*y{}*y{}", e.as_ref(), i + 1, j + 1));
            }
        }
        ExprLagrangian::parse(&format!("({}) / ({h11})", terms.join(" + ")), n)
    }

    pub fn ast(&self) -> &ExprAst {
        &self.ast
    }
}

impl LagrangianFn for ExprLagrangian {
    fn n(&self) -> usize {
        self.ast.n
    }

    fn eval_t2(&self, env: &[Taylor2]) -> Result<Taylor2> {
        Ok(self.ast.eval(env)?)
    }

    fn eval_t2d(&self, env: &[Taylor2<Dual>]) -> Option<Result<Taylor2<Dual>>> {
        Some(self.ast.eval(env).map_err(Error::from))
    }
}

type LagCallback = dyn Fn(&[Taylor2]) -> Result<Taylor2> + Send + Sync;

/// A Lagrangian from a callback over [`Taylor2`]. It cannot supply third
/// derivatives, so `∂G/∂y` falls back to central differences.
#[derive(Clone)]
pub struct FnLagrangian {
    pub n: usize,
    pub f: Arc<LagCallback>,
}

impl fmt::Debug for FnLagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnLagrangian(n = {})", self.n)
    }
}

impl LagrangianFn for FnLagrangian {
    fn n(&self) -> usize {
        self.n
    }

    fn eval_t2(&self, env: &[Taylor2]) -> Result<Taylor2> {
        (self.f)(env)
    }
}

/// `L̃(t̃, x̃, ỹ) = L(t, x, y)`: the same scalar function written in the other
/// chart of a change.
#[derive(Clone, Debug)]
pub struct PulledBackLagrangian {
    l: Arc<dyn LagrangianFn>,
    time_inverse: Arc<dyn CoordMap>,
    space_inverse: Arc<dyn CoordMap>,
}

impl PulledBackLagrangian {
    pub fn new(l: Arc<dyn LagrangianFn>, change: &JetChange) -> Self {
        PulledBackLagrangian {
            l,
            time_inverse: change.time.inverse.clone(),
            space_inverse: change.space.inverse.clone(),
        }
    }

    fn pull<S: Scalar>(&self, env: &[S]) -> Result<Vec<S>> {
        let n = self.l.n();
        let tj = self.time_inverse.jet(&[env[0].re()])?;
        let t = tj.apply(&env[..1]).remove(0);
        let dtt_dt = tj.apply_jacobian(&env[..1]).remove(0).recip();
        let xt = &env[1..=n];
        let xre: Vec<f64> = xt.iter().map(|v| v.re()).collect();
        let sj = self.space_inverse.jet(&xre)?;
        let x = sj.apply(xt);
        let jinv = sj.apply_jacobian(xt);
        let yt = &env[1 + n..];
        let y: Vec<S> = (0..n)
            .map(|i| {
                let mut acc = S::zero();
                for j in 0..n {
                    acc = acc + jinv[i * n + j].clone() * yt[j].clone();
                }
                acc * dtt_dt.clone()
            })
            .collect();
        Ok(pack(t, &x, &y))
    }
}

impl LagrangianFn for PulledBackLagrangian {
    fn n(&self) -> usize {
        self.l.n()
    }

    fn eval_t2(&self, env: &[Taylor2]) -> Result<Taylor2> {
        self.l.eval_t2(&self.pull(env)?)
    }

    fn eval_t2d(&self, env: &[Taylor2<Dual>]) -> Option<Result<Taylor2<Dual>>> {
        match self.pull(env) {
            Ok(e) => self.l.eval_t2d(&e),
            Err(err) => Some(Err(err)),
        }
    }
}

/// Partial derivatives of `L` entering the Euler–Lagrange equations. Square
/// blocks are row-major: `l_xy[j*n + k] = ∂²L/∂xʲ∂yᵏ`.
#[derive(Clone, Debug)]
pub struct LagDerivs<S> {
    pub n: usize,
    pub l_x: Vec<S>,
    pub l_y: Vec<S>,
    pub l_ty: Vec<S>,
    pub l_xy: Vec<S>,
    pub l_yy: Vec<S>,
}

impl<S: Scalar> LagDerivs<S> {
    fn from_taylor(out: &Taylor2<S>, n: usize) -> Self {
        let k = 2 * n + 1;
        let d1 = |a: usize| if out.grad.is_empty() { S::zero() } else { out.d1(a) };
        let d2 = |a: usize, b: usize| if out.grad.len() < k { S::zero() } else { out.d2(a, b) };
        let y = |i: usize| 1 + n + i;
        LagDerivs {
            n,
            l_x: (0..n).map(|j| d1(1 + j)).collect(),
            l_y: (0..n).map(|j| d1(y(j))).collect(),
            l_ty: (0..n).map(|j| d2(0, y(j))).collect(),
            l_xy: (0..n * n).map(|e| d2(1 + e / n, y(e % n))).collect(),
            l_yy: (0..n * n).map(|e| d2(y(e / n), y(e % n))).collect(),
        }
    }
}

fn full_seeds(p: &JetPoint) -> Vec<Taylor2> {
    let env = p.env();
    let k = env.len();
    env.iter()
        .enumerate()
        .map(|(i, &v)| Taylor2::variable(v, i, k))
        .collect()
}

/// Second-order seeds on every variable, with an extra first-order layer on
/// the velocities.
fn full_seeds_dy(p: &JetPoint) -> Vec<Taylor2<Dual>> {
    let n = p.n();
    let env = p.env();
    let k = env.len();
    env.iter()
        .enumerate()
        .map(|(i, &v)| {
            let inner = if i > n {
                Dual::variable(v, i - 1 - n, n)
            } else {
                Dual::constant(v)
            };
            Taylor2::variable(inner, i, k)
        })
        .collect()
}

pub fn derivatives(l: &dyn LagrangianFn, p: &JetPoint) -> Result<LagDerivs<f64>> {
    check_dim(l, p)?;
    let out = l.eval_t2(&full_seeds(p))?;
    Ok(LagDerivs::from_taylor(&out, p.n()))
}

/// Derivatives carrying their own `y`-gradients, or `None` when `l` has no
/// third-order evaluation.
pub fn derivatives_dy(l: &dyn LagrangianFn, p: &JetPoint) -> Option<Result<LagDerivs<Dual>>> {
    if let Err(e) = check_dim(l, p) {
        return Some(Err(e));
    }
    let out = l.eval_t2d(&full_seeds_dy(p))?;
    Some(out.map(|o| LagDerivs::from_taylor(&o, p.n())))
}

fn check_dim(l: &dyn LagrangianFn, p: &JetPoint) -> Result<()> {
    if l.n() != p.n() {
        return Err(Error::Invalid(format!(
            "Lagrangian has dimension {}, point has {}",
            l.n(),
            p.n()
        )));
    }
    Ok(())
}

/// Fundamental metrical d-tensor `(1/2) ∂²L/∂yⁱ∂yʲ`, signature
/// `(VelDown, VelDown)`.
pub fn fundamental_metric(l: &dyn LagrangianFn, p: &JetPoint) -> Result<DTensorValue> {
    let d = derivatives(l, p)?;
    DTensorValue::new(
        vec![IndexSlot::VelDown, IndexSlot::VelDown],
        d.l_yy.iter().map(|v| 0.5 * v).collect(),
        p.clone(),
    )
}

/// `gᵢⱼ = (h₁₁/2) ∂²L/∂yⁱ∂yʲ` with its inverse.
#[derive(Clone, Debug)]
pub struct GMatrix {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub condition: f64,
    /// Set when the condition number exceeds [`WARN_CONDITION`].
    pub ill_conditioned: bool,
}

fn g_from(d: &LagDerivs<f64>, h11: f64) -> Result<GMatrix> {
    let n = d.n;
    let g = DMatrix::from_row_slice(n, n, &d.l_yy) * (0.5 * h11);
    match inverse_with_condition(&g) {
        Some((g_inv, condition)) if condition <= DEGENERATE_CONDITION => Ok(GMatrix {
            g,
            g_inv,
            condition,
            ill_conditioned: condition > WARN_CONDITION,
        }),
        Some((_, condition)) => Err(Error::DegenerateLagrangian { condition }),
        None => Err(Error::DegenerateLagrangian {
            condition: f64::INFINITY,
        }),
    }
}

pub fn g_matrix(l: &dyn LagrangianFn, h: &dyn TemporalMetric, p: &JetPoint) -> Result<GMatrix> {
    g_from(&derivatives(l, p)?, h.h11(p.t)?)
}

/// Which fourth term enters the spatial Euler–Lagrange bracket.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Bracket {
    /// `∂L/∂yᵏ · H¹₁₁`, obtained by differentiating `√h₁₁ ∂L/∂yᵏ` in time.
    #[default]
    Corrected,
    /// `∂L/∂xᵏ · H¹₁₁`, the variant found in print.
    Printed,
}

/// `Gⁱ = (h₁₁ gⁱᵏ/4)[∂²L/∂xʲ∂yᵏ yʲ − ∂L/∂xᵏ + ∂²L/∂t∂yᵏ + (bracket term)
/// + 2h¹¹ H¹₁₁ gₖₗ yˡ]`, over any scalar so that `y`-derivatives can ride
/// along.
fn spatial_el<S: Scalar>(d: &LagDerivs<S>, y: &[S], h11: f64, hc: f64, bracket: Bracket) -> Option<Vec<S>> {
    let n = d.n;
    let g: Vec<S> = d.l_yy.iter().map(|v| v.scale(0.5 * h11)).collect();
    let rhs: Vec<S> = (0..n)
        .map(|k| {
            let mut b = d.l_ty[k].clone() - d.l_x[k].clone();
            for j in 0..n {
                b = b + d.l_xy[j * n + k].clone() * y[j].clone();
                b = b + (g[k * n + j].clone() * y[j].clone()).scale(2.0 * hc / h11);
            }
            let fourth = match bracket {
                Bracket::Corrected => &d.l_y[k],
                Bracket::Printed => &d.l_x[k],
            };
            b + fourth.scale(hc)
        })
        .collect();
    let z = solve_generic(g, rhs)?;
    Some(z.into_iter().map(|v| v.scale(0.25 * h11)).collect())
}

/// Temporal and spatial semispray components of the Euler–Lagrange
/// equations of `𝓛 = L√h₁₁` at `p`.
pub fn el_semisprays(
    l: &dyn LagrangianFn,
    h: &dyn TemporalMetric,
    p: &JetPoint,
    bracket: Bracket,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = derivatives(l, p)?;
    let h11 = h.h11(p.t)?;
    let gm = g_from(&d, h11)?;
    let hc = temporal_christoffel(h, p.t)?;
    let temporal = &p.y * (-0.5 * hc);
    let g = spatial_el(&d, p.y.as_slice(), h11, hc, bracket).ok_or(Error::DegenerateLagrangian {
        condition: gm.condition,
    })?;
    Ok((temporal, DVector::from_vec(g)))
}

/// Residual of the Euler–Lagrange equations of `𝓛 = L√h₁₁` along a curve
/// through `(t, x)` with velocity `v` and acceleration `a`, with the scale of
/// the largest term entering it.
pub fn el_residual_with_scale(
    l: &dyn LagrangianFn,
    h: &dyn TemporalMetric,
    t: f64,
    x: &[f64],
    v: &[f64],
    a: &[f64],
) -> Result<(DVector<f64>, f64)> {
    let p = JetPoint::new(t, x.to_vec(), v.to_vec())?;
    let n = p.n();
    let d = derivatives(l, &p)?;
    let (h11, dh) = h.h11_and_derivative(t)?;
    let sq = h11.sqrt();
    let dsq = 0.5 * dh / sq;
    let mut scale = 0.0f64;
    let r = DVector::from_fn(n, |k, _| {
        // d/dt(√h ∂L/∂yᵏ) − √h ∂L/∂xᵏ, expanded by the chain rule
        let mut terms = vec![dsq * d.l_y[k], sq * d.l_ty[k], -sq * d.l_x[k]];
        for j in 0..n {
            terms.push(sq * d.l_xy[j * n + k] * v[j]);
            terms.push(sq * d.l_yy[j * n + k] * a[j]);
        }
        scale = terms.iter().fold(scale, |m, t| m.max(t.abs()));
        terms.iter().sum()
    });
    Ok((r, scale))
}

pub fn el_residual(
    l: &dyn LagrangianFn,
    h: &dyn TemporalMetric,
    t: f64,
    x: &[f64],
    v: &[f64],
    a: &[f64],
) -> Result<DVector<f64>> {
    Ok(el_residual_with_scale(l, h, t, x, v, a)?.0)
}

/// Spatial semispray of the Euler–Lagrange equations.
#[derive(Debug)]
pub struct LagrangianSpatial {
    pub l: Arc<dyn LagrangianFn>,
    pub h: Arc<dyn TemporalMetric>,
    pub bracket: Bracket,
    fallback_used: AtomicBool,
}

impl LagrangianSpatial {
    pub fn new(l: Arc<dyn LagrangianFn>, h: Arc<dyn TemporalMetric>, bracket: Bracket) -> Self {
        LagrangianSpatial {
            l,
            h,
            bracket,
            fallback_used: AtomicBool::new(false),
        }
    }

    /// Whether any `y`-derivative so far came from central differences.
    pub fn used_finite_differences(&self) -> bool {
        self.fallback_used.load(Ordering::Relaxed)
    }
}

impl SpatialSemispray for LagrangianSpatial {
    fn n(&self) -> usize {
        self.l.n()
    }

    fn eval(&self, p: &JetPoint) -> Result<DVector<f64>> {
        Ok(el_semisprays(self.l.as_ref(), self.h.as_ref(), p, self.bracket)?.1)
    }

    fn eval_dy(&self, p: &JetPoint) -> Result<DMatrix<f64>> {
        let n = p.n();
        match derivatives_dy(self.l.as_ref(), p) {
            Some(d) => {
                let d = d?;
                let h11 = self.h.h11(p.t)?;
                g_from(&derivatives(self.l.as_ref(), p)?, h11)?;
                let hc = temporal_christoffel(self.h.as_ref(), p.t)?;
                let y: Vec<Dual> = (0..n).map(|i| Dual::variable(p.y[i], i, n)).collect();
                let g = spatial_el(&d, &y, h11, hc, self.bracket).ok_or(Error::DegenerateLagrangian {
                    condition: f64::INFINITY,
                })?;
                Ok(DMatrix::from_fn(n, n, |j, k| g[j].deriv(k)))
            }
            None => {
                self.fallback_used.store(true, Ordering::Relaxed);
                let mut out = DMatrix::zeros(n, n);
                for k in 0..n {
                    let mut yp = p.y.clone();
                    let mut ym = p.y.clone();
                    yp[k] += FALLBACK_STEP;
                    ym[k] -= FALLBACK_STEP;
                    let gp = self.eval(&p.with_y(yp))?;
                    let gm = self.eval(&p.with_y(ym))?;
                    out.set_column(k, &((gp - gm) / (2.0 * FALLBACK_STEP)));
                }
                Ok(out)
            }
        }
    }
}

/// The Euler–Lagrange semispray pair of `𝓛 = L√h₁₁`.
pub fn lagrangian_semispray(
    l: Arc<dyn LagrangianFn>,
    h: Arc<dyn TemporalMetric>,
    bracket: Bracket,
) -> (RelativisticSemispray, Arc<LagrangianSpatial>) {
    let spatial = Arc::new(LagrangianSpatial::new(l.clone(), h.clone(), bracket));
    let s = RelativisticSemispray {
        temporal: Arc::new(CanonicalTemporal { h, n: l.n() }),
        spatial: spatial.clone(),
    };
    (s, spatial)
}

/// `Γ_L = (2H, ∂G/∂y)` of the Euler–Lagrange semispray.
pub fn connection_from_lagrangian(l: Arc<dyn LagrangianFn>, h: Arc<dyn TemporalMetric>) -> ConnectionFromSemispray {
    connection_from_semispray(&lagrangian_semispray(l, h, Bracket::Corrected).0)
}

/// `G = h₁₁ dt⊗dt + gᵢⱼ dxⁱ⊗dxʲ + h¹¹gᵢⱼ δy₁ⁱ⊗δy₁ʲ` at one point.
#[derive(Clone, Debug)]
pub struct GravPotential {
    pub h_block: f64,
    pub g_block: DMatrix<f64>,
    pub v_block: DMatrix<f64>,
    pub coframe: DMatrix<f64>,
}

impl GravPotential {
    /// `G(u, w)` for tangent vectors given in natural components.
    pub fn pair(&self, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let n = self.g_block.nrows();
        let cu = &self.coframe * u;
        let cw = &self.coframe * w;
        let xu = cu.rows(1, n);
        let xw = cw.rows(1, n);
        let yu = cu.rows(1 + n, n);
        let yw = cw.rows(1 + n, n);
        self.h_block * cu[0] * cw[0]
            + (xu.transpose() * &self.g_block * xw)[0]
            + (yu.transpose() * &self.v_block * yw)[0]
    }
}

/// The gravitational potential of `L` at `p`, using `Γ_L` unless another
/// connection is supplied.
pub fn gravitational_potential(
    l: Arc<dyn LagrangianFn>,
    h: Arc<dyn TemporalMetric>,
    p: &JetPoint,
    connection: Option<&dyn NonlinearConnection>,
) -> Result<GravPotential> {
    let h11 = h.h11(p.t)?;
    let gm = g_matrix(l.as_ref(), h.as_ref(), p)?;
    let coframe = match connection {
        Some(c) => adapted_coframe(c, p)?,
        None => adapted_coframe(&connection_from_lagrangian(l, h), p)?,
    };
    Ok(GravPotential {
        h_block: h11,
        v_block: &gm.g / h11,
        g_block: gm.g,
        coframe,
    })
}
