//! Semisprays, nonlinear connections, the canonical objects built from a
//! pair of metrics, the semispray/connection correspondences and adapted
//! frames.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dtensor::{FnDTensorField, IndexSlot};
use crate::error::{Error, Result};
use crate::exprlang::{eval2, parse, ExprAst, Var};
use crate::jet::{ChangeAt, JetPoint};
use crate::metrics::{spatial_christoffel, temporal_christoffel, SpatialMetric, TemporalMetric};

/// Components `H⁽ʲ⁾₍₁₎₁` of a temporal semispray.
pub trait TemporalSemispray: Send + Sync + fmt::Debug {
    fn n(&self) -> usize;
    fn eval(&self, p: &JetPoint) -> Result<DVector<f64>>;
}

/// Components `G⁽ʲ⁾₍₁₎₁` of a spatial semispray with their `y`-derivatives.
pub trait SpatialSemispray: Send + Sync + fmt::Debug {
    fn n(&self) -> usize;
    fn eval(&self, p: &JetPoint) -> Result<DVector<f64>>;
    /// `(j, k) ↦ ∂Gʲ/∂y₁ᵏ`
    fn eval_dy(&self, p: &JetPoint) -> Result<DMatrix<f64>>;
    /// Entry `m` holds `(j, k) ↦ ∂²Gʲ/∂y₁ᵏ∂y₁ᵐ`.
    fn eval_dyy(&self, _p: &JetPoint) -> Result<Vec<DMatrix<f64>>> {
        Err(Error::MissingDerivative(
            "second y-derivatives of the spatial semispray",
        ))
    }
}

/// Components `(M⁽ʲ⁾₍₁₎₁, N⁽ʲ⁾₍₁₎ᵢ)` of a nonlinear connection.
pub trait NonlinearConnection: Send + Sync + fmt::Debug {
    fn n(&self) -> usize;
    fn temporal(&self, p: &JetPoint) -> Result<DVector<f64>>;
    /// `(j, i) ↦ N⁽ʲ⁾₍₁₎ᵢ`
    fn spatial(&self, p: &JetPoint) -> Result<DMatrix<f64>>;
    /// Entry `m` holds `(j, i) ↦ ∂N⁽ʲ⁾ᵢ/∂y₁ᵐ`.
    fn spatial_dy(&self, _p: &JetPoint) -> Result<Vec<DMatrix<f64>>> {
        Err(Error::MissingDerivative("y-derivatives of the spatial connection"))
    }
}

/// A temporal and a spatial semispray of the same dimension.
#[derive(Clone, Debug)]
pub struct RelativisticSemispray {
    pub temporal: Arc<dyn TemporalSemispray>,
    pub spatial: Arc<dyn SpatialSemispray>,
}

impl RelativisticSemispray {
    pub fn new(temporal: Arc<dyn TemporalSemispray>, spatial: Arc<dyn SpatialSemispray>) -> Result<Self> {
        if temporal.n() != spatial.n() {
            return Err(Error::Invalid(format!(
                "semispray dimensions differ: {} and {}",
                temporal.n(),
                spatial.n()
            )));
        }
        Ok(RelativisticSemispray { temporal, spatial })
    }

    /// The canonical pair `(H̊, G̊)` of `(h, φ)`.
    pub fn canonical(h: Arc<dyn TemporalMetric>, phi: Arc<dyn SpatialMetric>) -> Self {
        let n = phi.n();
        RelativisticSemispray {
            temporal: Arc::new(CanonicalTemporal { h, n }),
            spatial: Arc::new(CanonicalSpatial { phi }),
        }
    }

    pub fn n(&self) -> usize {
        self.spatial.n()
    }
}

/// `H̊⁽ʲ⁾ = −(1/2) H¹₁₁ y₁ʲ`
#[derive(Clone, Debug)]
pub struct CanonicalTemporal {
    pub h: Arc<dyn TemporalMetric>,
    pub n: usize,
}

impl TemporalSemispray for CanonicalTemporal {
    fn n(&self) -> usize {
        self.n
    }

    fn eval(&self, p: &JetPoint) -> Result<DVector<f64>> {
        let c = temporal_christoffel(self.h.as_ref(), p.t)?;
        Ok(&p.y * (-0.5 * c))
    }
}

/// `G̊⁽ʲ⁾ = (1/2) γʲₖₗ y₁ᵏ y₁ˡ`
#[derive(Clone, Debug)]
pub struct CanonicalSpatial {
    pub phi: Arc<dyn SpatialMetric>,
}

impl SpatialSemispray for CanonicalSpatial {
    fn n(&self) -> usize {
        self.phi.n()
    }

    fn eval(&self, p: &JetPoint) -> Result<DVector<f64>> {
        let g = spatial_christoffel(self.phi.as_ref(), p.x.as_slice())?;
        Ok(g.contract_yy(p.y.as_slice()) * 0.5)
    }

    fn eval_dy(&self, p: &JetPoint) -> Result<DMatrix<f64>> {
        let g = spatial_christoffel(self.phi.as_ref(), p.x.as_slice())?;
        Ok(g.contract_y(p.y.as_slice()))
    }

    fn eval_dyy(&self, p: &JetPoint) -> Result<Vec<DMatrix<f64>>> {
        let g = spatial_christoffel(self.phi.as_ref(), p.x.as_slice())?;
        let n = g.n;
        Ok((0..n).map(|m| DMatrix::from_fn(n, n, |j, k| g.get(j, k, m))).collect())
    }
}

/// The canonical connection `Γ̊ = (−H¹₁₁ y₁ʲ, γʲᵢₘ y₁ᵐ)` of `(h, φ)`.
#[derive(Clone, Debug)]
pub struct CanonicalConnection {
    pub h: Arc<dyn TemporalMetric>,
    pub phi: Arc<dyn SpatialMetric>,
}

impl NonlinearConnection for CanonicalConnection {
    fn n(&self) -> usize {
        self.phi.n()
    }

    fn temporal(&self, p: &JetPoint) -> Result<DVector<f64>> {
        Ok(&p.y * -temporal_christoffel(self.h.as_ref(), p.t)?)
    }

    fn spatial(&self, p: &JetPoint) -> Result<DMatrix<f64>> {
        Ok(spatial_christoffel(self.phi.as_ref(), p.x.as_slice())?.contract_y(p.y.as_slice()))
    }

    fn spatial_dy(&self, p: &JetPoint) -> Result<Vec<DMatrix<f64>>> {
        let g = spatial_christoffel(self.phi.as_ref(), p.x.as_slice())?;
        let n = g.n;
        Ok((0..n).map(|m| DMatrix::from_fn(n, n, |j, i| g.get(j, i, m))).collect())
    }
}

fn parse_components<S: AsRef<str>>(texts: &[S], n: usize, what: &str) -> Result<Vec<ExprAst>> {
    texts
        .iter()
        .map(|s| parse(s.as_ref(), n).map_err(|e| Error::Invalid(format!("{what}: {e}"))))
        .collect()
}

fn y_seeds(n: usize) -> Vec<Var> {
    (0..n).map(Var::Y).collect()
}

fn eval_all(exprs: &[ExprAst], p: &JetPoint) -> Result<DVector<f64>> {
    let v = exprs
        .iter()
        .map(|e| e.eval_f64(p.t, p.x.as_slice(), p.y.as_slice()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(DVector::from_vec(v))
}

/// Gradient and Hessian in `y` of each expression.
fn y_derivatives(exprs: &[ExprAst], p: &JetPoint) -> Result<Vec<(Vec<f64>, DMatrix<f64>)>> {
    let n = p.n();
    let seeds = y_seeds(n);
    exprs
        .iter()
        .map(|e| {
            let r = eval2(e, p.t, p.x.as_slice(), p.y.as_slice(), &seeds)?;
            let hess = DMatrix::from_fn(n, n, |a, b| r.d2(a, b));
            Ok((r.grad, hess))
        })
        .collect()
}

/// A temporal semispray given by expressions in `(t, x, y)`.
#[derive(Clone, Debug)]
pub struct ExprTemporalSemispray {
    comps: Vec<ExprAst>,
}

impl ExprTemporalSemispray {
    pub fn parse<S: AsRef<str>>(texts: &[S]) -> Result<Self> {
        Ok(ExprTemporalSemispray {
            comps: parse_components(texts, texts.len(), "temporal semispray")?,
        })
    }
}

impl TemporalSemispray for ExprTemporalSemispray {
    fn n(&self) -> usize {
        self.comps.len()
    }

    fn eval(&self, p: &JetPoint) -> Result<DVector<f64>> {
        eval_all(&self.comps, p)
    }
}

/// A spatial semispray given by expressions in `(t, x, y)`; `y`-derivatives
/// come from automatic differentiation.
#[derive(Clone, Debug)]
pub struct ExprSpatialSemispray {
    comps: Vec<ExprAst>,
}

impl ExprSpatialSemispray {
    pub fn parse<S: AsRef<str>>(texts: &[S]) -> Result<Self> {
        Ok(ExprSpatialSemispray {
            comps: parse_components(texts, texts.len(), "spatial semispray")?,
        })
    }
}

impl SpatialSemispray for ExprSpatialSemispray {
    fn n(&self) -> usize {
        self.comps.len()
    }

    fn eval(&self, p: &JetPoint) -> Result<DVector<f64>> {
        eval_all(&self.comps, p)
    }

    fn eval_dy(&self, p: &JetPoint) -> Result<DMatrix<f64>> {
        let n = self.n();
        let d = y_derivatives(&self.comps, p)?;
        Ok(DMatrix::from_fn(n, n, |j, k| d[j].0[k]))
    }

    fn eval_dyy(&self, p: &JetPoint) -> Result<Vec<DMatrix<f64>>> {
        let n = self.n();
        let d = y_derivatives(&self.comps, p)?;
        Ok((0..n).map(|m| DMatrix::from_fn(n, n, |j, k| d[j].1[(k, m)])).collect())
    }
}

/// A nonlinear connection given by expressions; `N` entries are listed row
/// by row (`N⁽¹⁾₁, N⁽¹⁾₂, …`).
#[derive(Clone, Debug)]
pub struct ExprConnection {
    m: Vec<ExprAst>,
    nn: Vec<ExprAst>,
}

impl ExprConnection {
    pub fn parse<S: AsRef<str>>(m: &[S], n_rows: &[Vec<S>]) -> Result<Self> {
        let n = m.len();
        if n_rows.len() != n || n_rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("N must be an n x n matrix".into()));
        }
        let flat: Vec<&str> = n_rows.iter().flatten().map(|s| s.as_ref()).collect();
        Ok(ExprConnection {
            m: parse_components(m, n, "connection M")?,
            nn: parse_components(&flat, n, "connection N")?,
        })
    }
}

impl NonlinearConnection for ExprConnection {
    fn n(&self) -> usize {
        self.m.len()
    }

    fn temporal(&self, p: &JetPoint) -> Result<DVector<f64>> {
        eval_all(&self.m, p)
    }

    fn spatial(&self, p: &JetPoint) -> Result<DMatrix<f64>> {
        let n = self.n();
        let v = eval_all(&self.nn, p)?;
        Ok(DMatrix::from_row_slice(n, n, v.as_slice()))
    }

    fn spatial_dy(&self, p: &JetPoint) -> Result<Vec<DMatrix<f64>>> {
        let n = self.n();
        let d = y_derivatives(&self.nn, p)?;
        Ok((0..n)
            .map(|m| DMatrix::from_fn(n, n, |j, i| d[j * n + i].0[m]))
            .collect())
    }
}

/// `a + coef·b`
#[derive(Clone, Debug)]
pub struct TemporalSum {
    pub a: Arc<dyn TemporalSemispray>,
    pub b: Arc<dyn TemporalSemispray>,
    pub coef: f64,
}

impl TemporalSemispray for TemporalSum {
    fn n(&self) -> usize {
        self.a.n()
    }

    fn eval(&self, p: &JetPoint) -> Result<DVector<f64>> {
        Ok(self.a.eval(p)? + self.b.eval(p)? * self.coef)
    }
}

/// `a + coef·b`
#[derive(Clone, Debug)]
pub struct SpatialSum {
    pub a: Arc<dyn SpatialSemispray>,
    pub b: Arc<dyn SpatialSemispray>,
    pub coef: f64,
}

impl SpatialSemispray for SpatialSum {
    fn n(&self) -> usize {
        self.a.n()
    }

    fn eval(&self, p: &JetPoint) -> Result<DVector<f64>> {
        Ok(self.a.eval(p)? + self.b.eval(p)? * self.coef)
    }

    fn eval_dy(&self, p: &JetPoint) -> Result<DMatrix<f64>> {
        Ok(self.a.eval_dy(p)? + self.b.eval_dy(p)? * self.coef)
    }

    fn eval_dyy(&self, p: &JetPoint) -> Result<Vec<DMatrix<f64>>> {
        let a = self.a.eval_dyy(p)?;
        let b = self.b.eval_dyy(p)?;
        Ok(a.into_iter().zip(b).map(|(x, y)| x + y * self.coef).collect())
    }
}

/// The connection `M = 2H`, `N⁽ʲ⁾ₖ = ∂G⁽ʲ⁾/∂y₁ᵏ` produced by a semispray.
#[derive(Clone, Debug)]
pub struct ConnectionFromSemispray {
    pub s: RelativisticSemispray,
}

pub fn connection_from_semispray(s: &RelativisticSemispray) -> ConnectionFromSemispray {
    ConnectionFromSemispray { s: s.clone() }
}

impl NonlinearConnection for ConnectionFromSemispray {
    fn n(&self) -> usize {
        self.s.n()
    }

    fn temporal(&self, p: &JetPoint) -> Result<DVector<f64>> {
        Ok(self.s.temporal.eval(p)? * 2.0)
    }

    fn spatial(&self, p: &JetPoint) -> Result<DMatrix<f64>> {
        self.s.spatial.eval_dy(p)
    }

    fn spatial_dy(&self, p: &JetPoint) -> Result<Vec<DMatrix<f64>>> {
        self.s.spatial.eval_dyy(p)
    }
}

/// `H = M/2`
#[derive(Clone, Debug)]
pub struct TemporalFromConnection {
    pub conn: Arc<dyn NonlinearConnection>,
}

impl TemporalSemispray for TemporalFromConnection {
    fn n(&self) -> usize {
        self.conn.n()
    }

    fn eval(&self, p: &JetPoint) -> Result<DVector<f64>> {
        Ok(self.conn.temporal(p)? * 0.5)
    }
}

/// `G⁽ʲ⁾ = (1/2) N⁽ʲ⁾ₘ y₁ᵐ`
#[derive(Clone, Debug)]
pub struct SpatialFromConnection {
    pub conn: Arc<dyn NonlinearConnection>,
}

impl SpatialSemispray for SpatialFromConnection {
    fn n(&self) -> usize {
        self.conn.n()
    }

    fn eval(&self, p: &JetPoint) -> Result<DVector<f64>> {
        Ok(self.conn.spatial(p)? * &p.y * 0.5)
    }

    fn eval_dy(&self, p: &JetPoint) -> Result<DMatrix<f64>> {
        let n = self.n();
        let nn = self.conn.spatial(p)?;
        let dn = self.conn.spatial_dy(p)?;
        Ok(DMatrix::from_fn(n, n, |j, k| {
            let tail: f64 = (0..n).map(|m| dn[k][(j, m)] * p.y[m]).sum();
            0.5 * (nn[(j, k)] + tail)
        }))
    }
}

/// The semispray `H = M/2`, `G = (1/2) N y` produced by a connection.
pub fn semispray_from_connection(conn: Arc<dyn NonlinearConnection>) -> RelativisticSemispray {
    RelativisticSemispray {
        temporal: Arc::new(TemporalFromConnection { conn: conn.clone() }),
        spatial: Arc::new(SpatialFromConnection { conn }),
    }
}

/// Difference d-tensors `T = H̊ − H` and `S_sp = G̊ − G` between the canonical
/// pair of `(h, φ)` and `s`, both with signature `(VelUp, TimeDown)`.
pub fn semispray_difference(
    s: &RelativisticSemispray,
    h: Arc<dyn TemporalMetric>,
    phi: Arc<dyn SpatialMetric>,
) -> Result<(FnDTensorField, FnDTensorField)> {
    if s.n() != phi.n() {
        return Err(Error::Invalid("semispray and metric dimensions differ".into()));
    }
    let canon = RelativisticSemispray::canonical(h, phi);
    let signature = vec![IndexSlot::VelUp, IndexSlot::TimeDown];
    let (ht, h0) = (s.temporal.clone(), canon.temporal.clone());
    let (gs, g0) = (s.spatial.clone(), canon.spatial.clone());
    let t = FnDTensorField {
        signature: signature.clone(),
        f: Arc::new(move |p: &JetPoint| Ok((h0.eval(p)? - ht.eval(p)?).as_slice().to_vec())),
    };
    let sp = FnDTensorField {
        signature,
        f: Arc::new(move |p: &JetPoint| Ok((g0.eval(p)? - gs.eval(p)?).as_slice().to_vec())),
    };
    Ok((t, sp))
}

/// `δ/δt = ∂/∂t − Mʲ ∂/∂y₁ʲ`, `δ/δxⁱ = ∂/∂xⁱ − Nʲᵢ ∂/∂y₁ʲ`, `∂/∂y₁ⁱ`, as
/// rows in the natural basis.
pub fn adapted_frame_from(m: &DVector<f64>, nn: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.len();
    let mut f = DMatrix::identity(2 * n + 1, 2 * n + 1);
    for j in 0..n {
        f[(0, 1 + n + j)] = -m[j];
        for i in 0..n {
            f[(1 + i, 1 + n + j)] = -nn[(j, i)];
        }
    }
    f
}

/// `dt`, `dxⁱ`, `δy₁ⁱ = dy₁ⁱ + Mⁱ dt + Nⁱⱼ dxʲ`, as rows in the natural
/// cobasis.
pub fn adapted_coframe_from(m: &DVector<f64>, nn: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.len();
    let mut f = DMatrix::identity(2 * n + 1, 2 * n + 1);
    for i in 0..n {
        f[(1 + n + i, 0)] = m[i];
        for j in 0..n {
            f[(1 + n + i, 1 + j)] = nn[(i, j)];
        }
    }
    f
}

pub fn adapted_frame(g: &dyn NonlinearConnection, p: &JetPoint) -> Result<DMatrix<f64>> {
    Ok(adapted_frame_from(&g.temporal(p)?, &g.spatial(p)?))
}

pub fn adapted_coframe(g: &dyn NonlinearConnection, p: &JetPoint) -> Result<DMatrix<f64>> {
    Ok(adapted_coframe_from(&g.temporal(p)?, &g.spatial(p)?))
}

/// Temporal semispray components in the tilde chart:
/// `H̃ᵏ = Hʲ (dt/dt̃)² ∂x̃ᵏ/∂xʲ − (1/2)(dt/dt̃) ∂ỹᵏ/∂t`.
pub fn temporal_semispray_law(c: &ChangeAt, y: &DVector<f64>, h: &DVector<f64>) -> DVector<f64> {
    let q = c.dt_dtt;
    let dyt = DVector::from_vec(c.dyt_dt(y.as_slice()));
    &c.jac * h * (q * q) - dyt * (0.5 * q)
}

/// Spatial semispray components in the tilde chart:
/// `G̃ᵏ = Gʲ (dt/dt̃)² ∂x̃ᵏ/∂xʲ − (1/2)(∂xⁱ/∂x̃ʲ)(∂ỹᵏ/∂xⁱ) ỹʲ`.
pub fn spatial_semispray_law(c: &ChangeAt, y: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
    let q = c.dt_dtt;
    let yt = DVector::from_vec(c.prolong_y(y.as_slice()));
    let dyx = c.dyt_dx_mat(y);
    &c.jac * g * (q * q) - dyx * (&c.jac_inv * yt) * 0.5
}

/// Connection components in the tilde chart:
/// `M̃ᵏ = Mʲ (dt/dt̃)² ∂x̃ᵏ/∂xʲ − (dt/dt̃) ∂ỹᵏ/∂t` and
/// `Ñᵏₗ = Nʲᵢ (dt/dt̃)(∂xⁱ/∂x̃ˡ)(∂x̃ᵏ/∂xʲ) − (∂xⁱ/∂x̃ˡ) ∂ỹᵏ/∂xⁱ`.
/// With `drop_inhomogeneous` the last term of `Ñ` is omitted, which is wrong
/// and only serves as a negative control.
pub fn connection_law(
    c: &ChangeAt,
    y: &DVector<f64>,
    m: &DVector<f64>,
    nn: &DMatrix<f64>,
    drop_inhomogeneous: bool,
) -> (DVector<f64>, DMatrix<f64>) {
    let q = c.dt_dtt;
    let dyt = DVector::from_vec(c.dyt_dt(y.as_slice()));
    let mt = &c.jac * m * (q * q) - dyt * q;
    let mut nt = &c.jac * nn * &c.jac_inv * q;
    if !drop_inhomogeneous {
        nt -= c.dyt_dx_mat(y) * &c.jac_inv;
    }
    (mt, nt)
}

/// Block-diagonal matrix whose rows express the old adapted frame through
/// the new one: `δ/δt = (dt̃/dt) δ/δt̃`, `δ/δxⁱ = (∂x̃ʲ/∂xⁱ) δ/δx̃ʲ`,
/// `∂/∂y₁ⁱ = (∂x̃ʲ/∂xⁱ)(dt/dt̃) ∂/∂ỹ₁ʲ`.
pub fn frame_scaling(c: &ChangeAt) -> DMatrix<f64> {
    let n = c.n();
    let mut d = DMatrix::zeros(2 * n + 1, 2 * n + 1);
    d[(0, 0)] = c.dtt_dt;
    let jt = c.jac.transpose();
    d.view_mut((1, 1), (n, n)).copy_from(&jt);
    d.view_mut((1 + n, 1 + n), (n, n)).copy_from(&(jt * c.dt_dtt));
    d
}

/// Dual of [`frame_scaling`]: `dt = (dt/dt̃) dt̃`, `dxⁱ = (∂xⁱ/∂x̃ʲ) dx̃ʲ`,
/// `δy₁ⁱ = (∂xⁱ/∂x̃ʲ)(dt̃/dt) δỹ₁ʲ`.
pub fn coframe_scaling(c: &ChangeAt) -> DMatrix<f64> {
    let n = c.n();
    let mut e = DMatrix::zeros(2 * n + 1, 2 * n + 1);
    e[(0, 0)] = c.dt_dtt;
    e.view_mut((1, 1), (n, n)).copy_from(&c.jac_inv);
    e.view_mut((1 + n, 1 + n), (n, n)).copy_from(&(&c.jac_inv * c.dtt_dt));
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtensor::DTensorField;
    use crate::metrics::{ExprSpatialMetric, ExprTemporalMetric};

    fn pt(t: f64, x: &[f64], y: &[f64]) -> JetPoint {
        JetPoint::new(t, x.to_vec(), y.to_vec()).unwrap()
    }

    fn metrics(h: &str, phi: &[Vec<&str>]) -> (Arc<dyn TemporalMetric>, Arc<dyn SpatialMetric>) {
        (
            Arc::new(ExprTemporalMetric::parse(h).unwrap()),
            Arc::new(ExprSpatialMetric::parse(phi).unwrap()),
        )
    }

    fn polar() -> (Arc<dyn TemporalMetric>, Arc<dyn SpatialMetric>) {
        metrics("exp(2*t)", &[vec!["1", "0"], vec!["0", "x1^2"]])
    }

    #[test]
    fn canonical_semisprays() {
        let (h, phi) = metrics("1", &[vec!["1", "0"], vec!["0", "1"]]);
        let s = RelativisticSemispray::canonical(h, phi);
        let p = pt(0.3, &[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(s.temporal.eval(&p).unwrap(), DVector::zeros(2));
        assert_eq!(s.spatial.eval(&p).unwrap(), DVector::zeros(2));

        let (h, phi) = metrics("exp(2*t)", &[vec!["1"]]);
        let s = RelativisticSemispray::canonical(h, phi);
        let v = s.temporal.eval(&pt(0.4, &[0.0], &[4.0])).unwrap();
        assert!((v[0] + 2.0).abs() < 1e-15);

        let (h, phi) = polar();
        let s = RelativisticSemispray::canonical(h, phi);
        let g = s.spatial.eval(&pt(0.0, &[2.0, 0.0], &[0.0, 1.0])).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-15 && g[1].abs() < 1e-15);
    }

    #[test]
    fn canonical_connection_from_canonical_pair() {
        let (h, phi) = polar();
        let s = RelativisticSemispray::canonical(h.clone(), phi.clone());
        let a = connection_from_semispray(&s);
        let b = CanonicalConnection { h, phi };
        let p = pt(0.2, &[1.5, 0.4], &[0.7, -1.3]);
        assert!((a.temporal(&p).unwrap() - b.temporal(&p).unwrap()).amax() < 1e-15);
        assert!((a.spatial(&p).unwrap() - b.spatial(&p).unwrap()).amax() < 1e-15);
    }

    #[test]
    fn constant_semispray_gives_doubled_m() {
        let s = RelativisticSemispray::new(
            Arc::new(ExprTemporalSemispray::parse(&["3"]).unwrap()),
            Arc::new(ExprSpatialSemispray::parse(&["0"]).unwrap()),
        )
        .unwrap();
        let c = connection_from_semispray(&s);
        let p = pt(0.0, &[1.0], &[2.0]);
        assert_eq!(c.temporal(&p).unwrap()[0], 6.0);
        assert_eq!(c.spatial(&p).unwrap()[(0, 0)], 0.0);

        let conn: Arc<dyn NonlinearConnection> = Arc::new(ExprConnection::parse(&["6"], &[vec!["0"]]).unwrap());
        let back = semispray_from_connection(conn);
        assert_eq!(back.temporal.eval(&p).unwrap()[0], 3.0);
        assert_eq!(back.spatial.eval(&p).unwrap()[0], 0.0);
    }

    #[test]
    fn flat_metrics_give_zero_connection() {
        let (h, phi) = metrics("2", &[vec!["1", "0"], vec!["0", "3"]]);
        let c = connection_from_semispray(&RelativisticSemispray::canonical(h, phi));
        let p = pt(0.5, &[0.1, 0.2], &[1.0, -1.0]);
        assert_eq!(c.temporal(&p).unwrap().amax(), 0.0);
        assert_eq!(c.spatial(&p).unwrap().amax(), 0.0);
    }

    #[test]
    fn canonical_connection_gives_back_canonical_pair() {
        let (h, phi) = polar();
        let s = RelativisticSemispray::canonical(h.clone(), phi.clone());
        let back = semispray_from_connection(Arc::new(CanonicalConnection { h, phi }));
        let p = pt(0.1, &[0.9, 0.3], &[0.4, 2.0]);
        assert!((back.temporal.eval(&p).unwrap() - s.temporal.eval(&p).unwrap()).amax() < 1e-15);
        assert!((back.spatial.eval(&p).unwrap() - s.spatial.eval(&p).unwrap()).amax() < 1e-15);
        assert!((back.spatial.eval_dy(&p).unwrap() - s.spatial.eval_dy(&p).unwrap()).amax() < 1e-15);
    }

    #[test]
    fn non_homogeneous_round_trip_witness() {
        // G constant in y: the connection has N = 0, so the round trip loses G
        let s = RelativisticSemispray::new(
            Arc::new(ExprTemporalSemispray::parse(&["t"]).unwrap()),
            Arc::new(ExprSpatialSemispray::parse(&["x1 + 1"]).unwrap()),
        )
        .unwrap();
        let back = semispray_from_connection(Arc::new(connection_from_semispray(&s)));
        let p = pt(0.5, &[1.0], &[2.0]);
        assert_eq!(back.temporal.eval(&p).unwrap()[0], 0.5);
        assert_eq!(back.spatial.eval(&p).unwrap()[0], 0.0);
        // a term linear in y is halved
        let s = RelativisticSemispray::new(
            Arc::new(ExprTemporalSemispray::parse(&["0"]).unwrap()),
            Arc::new(ExprSpatialSemispray::parse(&["y1"]).unwrap()),
        )
        .unwrap();
        let back = semispray_from_connection(Arc::new(connection_from_semispray(&s)));
        assert_eq!(back.spatial.eval(&p).unwrap()[0], 1.0);
    }

    #[test]
    fn difference_tensors() {
        let (h, phi) = polar();
        let canon = RelativisticSemispray::canonical(h.clone(), phi.clone());
        let p = pt(0.3, &[1.2, 0.1], &[0.5, 0.5]);
        let (t, s) = semispray_difference(&canon, h.clone(), phi.clone()).unwrap();
        assert_eq!(t.eval(&p).unwrap().components, vec![0.0, 0.0]);
        assert_eq!(s.eval(&p).unwrap().components, vec![0.0, 0.0]);

        let shifted = RelativisticSemispray::new(
            canon.temporal.clone(),
            Arc::new(SpatialSum {
                a: canon.spatial.clone(),
                b: Arc::new(ExprSpatialSemispray::parse(&["1", "-2"]).unwrap()),
                coef: -1.0,
            }),
        )
        .unwrap();
        let (t, s) = semispray_difference(&shifted, h, phi).unwrap();
        assert_eq!(t.eval(&p).unwrap().components, vec![0.0, 0.0]);
        let sv = s.eval(&p).unwrap().components;
        assert!((sv[0] - 1.0).abs() < 1e-15 && (sv[1] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn adapted_frames() {
        let m = DVector::from_vec(vec![5.0]);
        let nn = DMatrix::from_element(1, 1, 2.0);
        let f = adapted_frame_from(&m, &nn);
        assert_eq!(
            f,
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -5.0, 0.0, 1.0, -2.0, 0.0, 0.0, 1.0])
        );
        let c = adapted_coframe_from(&m, &nn);
        assert_eq!(c.row(2).iter().copied().collect::<Vec<_>>(), vec![5.0, 2.0, 1.0]);
        assert_eq!(f.determinant(), 1.0);
        assert!((&f * c.transpose() - DMatrix::identity(3, 3)).amax() < 1e-12);
        let z = adapted_frame_from(&DVector::zeros(2), &DMatrix::zeros(2, 2));
        assert_eq!(z, DMatrix::identity(5, 5));
        assert_eq!(adapted_coframe_from(&DVector::zeros(2), &DMatrix::zeros(2, 2)), z);
    }

    #[test]
    fn expression_connection_derivatives() {
        let conn = ExprConnection::parse(&["y1*y2", "0"], &[vec!["y1^2", "t"], vec!["x1*y2", "0"]]).unwrap();
        let p = pt(0.5, &[2.0, 0.0], &[3.0, -1.0]);
        let d = conn.spatial_dy(&p).unwrap();
        assert_eq!(d[0][(0, 0)], 6.0);
        assert_eq!(d[1][(1, 0)], 2.0);
        assert_eq!(d[0][(0, 1)], 0.0);
        let n = conn.spatial(&p).unwrap();
        assert_eq!(n[(0, 1)], 0.5);
        assert_eq!(n[(1, 0)], -2.0);
    }
}
