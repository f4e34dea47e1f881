//! Numerical verification of the transformation laws under jet changes.
//!
//! Every check compares two independent computations of an object in the
//! tilde chart: one obtained by pushing untilde data through a law, the other
//! by evaluating the same construction directly from the pulled-back metrics
//! and Lagrangians.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dtensor::{
    classical_scalar, h_liouville, h_normalization, liouville, tensor_product, transform_dtensor_at, DTensorField,
    DTensorValue,
};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::jet::{jet_jacobian_at, prolong_at, ChangeAt, JetChange, JetPoint};
use crate::lagrange::{
    connection_from_lagrangian, fundamental_metric, lagrangian_semispray, Bracket, LagrangianFn, PulledBackLagrangian,
};
use crate::metrics::{
    spatial_christoffel, temporal_christoffel, PulledBackSpatial, PulledBackTemporal, SpatialMetric, TemporalMetric,
};
use crate::spray::{
    adapted_coframe, adapted_frame, coframe_scaling, connection_law, frame_scaling, semispray_difference,
    spatial_semispray_law, temporal_semispray_law, CanonicalConnection, NonlinearConnection, RelativisticSemispray,
};

pub const DEFAULT_TOLERANCE: f64 = 1e-7;
/// Below this magnitude on both sides errors are measured absolutely.
pub const ABS_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, max_error: f64, tolerance: f64) -> Self {
        CheckRecord {
            name: name.into(),
            max_error,
            tolerance,
            passed: max_error <= tolerance,
        }
    }
}

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞)`, or the absolute difference when both sides
/// are tiny. Mismatched lengths and NaNs count as infinite error.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let amax = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut d = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let e = (x - y).abs();
        if e.is_nan() {
            return f64::INFINITY;
        }
        d = d.max(e);
    }
    let s = amax(a).max(amax(b));
    if s < ABS_FLOOR {
        d
    } else {
        d / s
    }
}

/// The geometric data checked by the harness.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub h: Arc<dyn TemporalMetric>,
    pub phi: Arc<dyn SpatialMetric>,
    /// Lagrangians whose fundamental metric, Euler–Lagrange semisprays and
    /// connections are checked as well.
    pub lagrangians: Vec<Arc<dyn LagrangianFn>>,
}

impl Geometry {
    pub fn n(&self) -> usize {
        self.phi.n()
    }

    /// The same objects written in the tilde chart of `change`.
    pub fn pulled_back(&self, change: &JetChange) -> Geometry {
        Geometry {
            h: Arc::new(PulledBackTemporal::new(self.h.clone(), change)),
            phi: Arc::new(PulledBackSpatial::new(self.phi.clone(), change)),
            lagrangians: self
                .lagrangians
                .iter()
                .map(|l| Arc::new(PulledBackLagrangian::new(l.clone(), change)) as Arc<dyn LagrangianFn>)
                .collect(),
        }
    }

    fn canonical(&self) -> RelativisticSemispray {
        RelativisticSemispray::canonical(self.h.clone(), self.phi.clone())
    }

    fn connection(&self) -> CanonicalConnection {
        CanonicalConnection {
            h: self.h.clone(),
            phi: self.phi.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceOptions {
    pub tolerance: f64,
    pub points_per_change: usize,
    pub seed: u64,
    /// Omit the inhomogeneous term of the spatial connection law. This is a
    /// deliberate error used to see the harness fail.
    pub corrupt_connection: bool,
}

impl Default for CovarianceOptions {
    fn default() -> Self {
        CovarianceOptions {
            tolerance: DEFAULT_TOLERANCE,
            points_per_change: 4,
            seed: 0,
            corrupt_connection: false,
        }
    }
}

#[derive(Default)]
struct Acc(BTreeMap<&'static str, f64>);

impl Acc {
    fn note(&mut self, name: &'static str, err: f64) {
        let e = self.0.entry(name).or_insert(0.0);
        // NaN must not be swallowed by max
        *e = if err.is_nan() { f64::INFINITY } else { e.max(err) };
    }

    fn vec(&mut self, name: &'static str, a: &DVector<f64>, b: &DVector<f64>) {
        self.note(name, rel_err(a.as_slice(), b.as_slice()));
    }

    fn mat(&mut self, name: &'static str, a: &DMatrix<f64>, b: &DMatrix<f64>) {
        self.note(name, rel_err(a.as_slice(), b.as_slice()));
    }
}

/// Run every check over `changes`, probing `points_per_change` random points
/// of the box for each. Records come back sorted by name.
pub fn run_covariance(geom: &Geometry, changes: &[JetChange], opts: &CovarianceOptions) -> Result<Vec<CheckRecord>> {
    let n = geom.n();
    if changes.is_empty() {
        return Err(Error::Invalid("covariance suite needs at least one change".into()));
    }
    if let Some(c) = changes.iter().find(|c| c.n() != n) {
        return Err(Error::Invalid(format!(
            "change of dimension {} for geometry of dimension {n}",
            c.n()
        )));
    }
    let mut gen = Generator::new(opts.seed);
    let mut acc = Acc::default();
    for (k, change) in changes.iter().enumerate() {
        let next = &changes[(k + 1) % changes.len()];
        let ctx = Context::new(geom, change, next);
        for _ in 0..opts.points_per_change {
            let p = gen.probe_point(n);
            let args: Vec<DVector<f64>> = (0..4)
                .map(|_| DVector::from_fn(2 * n + 1, |_, _| gen.uniform(-1.0, 1.0)))
                .collect();
            ctx.probe(&p, &args, opts.corrupt_connection, &mut acc)?;
        }
    }
    Ok(acc
        .0
        .into_iter()
        .map(|(name, err)| CheckRecord::new(name, err, opts.tolerance))
        .collect())
}

/// Objects of one change, built once and probed at many points.
struct Context<'a> {
    geom: &'a Geometry,
    tilde: Geometry,
    change: &'a JetChange,
    next: &'a JetChange,
    composed: JetChange,
    canon: RelativisticSemispray,
    canon_t: RelativisticSemispray,
    conn: CanonicalConnection,
    conn_t: CanonicalConnection,
    el: Vec<RelativisticSemispray>,
    el_t: Vec<RelativisticSemispray>,
    el_conn: Vec<Arc<dyn NonlinearConnection>>,
    el_conn_t: Vec<Arc<dyn NonlinearConnection>>,
}

impl<'a> Context<'a> {
    fn new(geom: &'a Geometry, change: &'a JetChange, next: &'a JetChange) -> Self {
        let tilde = geom.pulled_back(change);
        let el_of = |g: &Geometry| -> Vec<RelativisticSemispray> {
            g.lagrangians
                .iter()
                .map(|l| lagrangian_semispray(l.clone(), g.h.clone(), Bracket::Corrected).0)
                .collect()
        };
        let conn_of = |g: &Geometry| -> Vec<Arc<dyn NonlinearConnection>> {
            g.lagrangians
                .iter()
                .map(|l| Arc::new(connection_from_lagrangian(l.clone(), g.h.clone())) as Arc<dyn NonlinearConnection>)
                .collect()
        };
        Context {
            canon: geom.canonical(),
            canon_t: tilde.canonical(),
            conn: geom.connection(),
            conn_t: tilde.connection(),
            el: el_of(geom),
            el_t: el_of(&tilde),
            el_conn: conn_of(geom),
            el_conn_t: conn_of(&tilde),
            composed: change.then(next),
            geom,
            tilde,
            change,
            next,
        }
    }

    fn probe(&self, p: &JetPoint, args: &[DVector<f64>], corrupt: bool, acc: &mut Acc) -> Result<()> {
        let (g, gt) = (self.geom, &self.tilde);
        let c = self.change.at(p.t, &p.x)?;
        let pt = prolong_at(&c, p);

        // canonical d-tensors
        let tr = |v: &DTensorValue| transform_dtensor_at(v, &c).components;
        acc.note(
            "liouville-dtensor",
            rel_err(&tr(&liouville(p)), &liouville(&pt).components),
        );
        acc.note(
            "h-normalization-dtensor",
            rel_err(
                &tr(&h_normalization(&*g.h, p)?),
                &h_normalization(&*gt.h, &pt)?.components,
            ),
        );
        acc.note(
            "h-liouville-dtensor",
            rel_err(&tr(&h_liouville(&*g.h, p)?), &h_liouville(&*gt.h, &pt)?.components),
        );
        for (l, lt) in g.lagrangians.iter().zip(&gt.lagrangians) {
            let a = tr(&fundamental_metric(&**l, p)?);
            acc.note(
                "fundamental-metric-dtensor",
                rel_err(&a, &fundamental_metric(&**lt, &pt)?.components),
            );
        }
        for (s, st) in self.el.iter().zip(&self.el_t) {
            let (t0, s0) = semispray_difference(s, g.h.clone(), g.phi.clone())?;
            let (t1, s1) = semispray_difference(st, gt.h.clone(), gt.phi.clone())?;
            acc.note(
                "difference-dtensor",
                rel_err(&tr(&t0.eval(p)?), &t1.eval(&pt)?.components),
            );
            acc.note(
                "difference-dtensor",
                rel_err(&tr(&s0.eval(p)?), &s1.eval(&pt)?.components),
            );
        }

        // Christoffel symbols
        let h_law = temporal_christoffel(&*g.h, p.t)? * c.dt_dtt + c.dtt_dt * c.d2t_dtt2;
        acc.note(
            "temporal-christoffel-law",
            rel_err(&[h_law], &[temporal_christoffel(&*gt.h, pt.t)?]),
        );
        acc.note("spatial-christoffel-law", self.christoffel_error(&c, p, &pt)?);

        // semisprays, canonical and Euler–Lagrange
        let pairs = std::iter::once((&self.canon, &self.canon_t)).chain(self.el.iter().zip(&self.el_t));
        for (s, st) in pairs {
            let h = temporal_semispray_law(&c, &p.y, &s.temporal.eval(p)?);
            acc.vec("temporal-semispray-law", &h, &st.temporal.eval(&pt)?);
            let sg = spatial_semispray_law(&c, &p.y, &s.spatial.eval(p)?);
            acc.vec("spatial-semispray-law", &sg, &st.spatial.eval(&pt)?);
        }

        // nonlinear connections
        let conns = std::iter::once((
            &self.conn as &dyn NonlinearConnection,
            &self.conn_t as &dyn NonlinearConnection,
        ))
        .chain(self.el_conn.iter().zip(&self.el_conn_t).map(|(a, b)| (&**a, &**b)));
        for (n0, n1) in conns {
            let (m, nn) = connection_law(&c, &p.y, &n0.temporal(p)?, &n0.spatial(p)?, corrupt);
            acc.vec("temporal-connection-law", &m, &n1.temporal(&pt)?);
            acc.mat("spatial-connection-law", &nn, &n1.spatial(&pt)?);
        }

        // adapted bases of the canonical connection
        let jm = jet_jacobian_at(&c, p);
        let jm_inv = jm.clone().try_inverse().ok_or(Error::SingularChange {
            what: "jet Jacobian",
            value: 0.0,
        })?;
        let frame = adapted_frame(&self.conn, p)?;
        let frame_t = adapted_frame(&self.conn_t, &pt)?;
        acc.mat("adapted-frame-law", &(&frame * &jm), &(frame_scaling(&c) * &frame_t));
        let coframe = adapted_coframe(&self.conn, p)?;
        let coframe_t = adapted_coframe(&self.conn_t, &pt)?;
        acc.mat(
            "adapted-coframe-law",
            &(&coframe * jm_inv.transpose()),
            &(coframe_scaling(&c) * &coframe_t),
        );

        // a d-tensor evaluated as a classical tensor in both charts
        let v = tensor_product(&liouville(p), &h_normalization(&*g.h, p)?);
        let vt = transform_dtensor_at(&v, &c);
        let pushed: Vec<DVector<f64>> = v
            .signature
            .iter()
            .zip(args)
            .map(|(slot, a)| if slot.is_up() { &jm_inv * a } else { jm.transpose() * a })
            .collect();
        let s0 = classical_scalar(&v, &frame, &coframe, args);
        let s1 = classical_scalar(&vt, &frame_t, &coframe_t, &pushed);
        acc.note("dtensor-classical", rel_err(&[s0], &[s1]));

        // composing two changes composes their semispray laws
        let c2 = self.next.at(pt.t, &pt.x)?;
        let c12 = self.composed.at(p.t, &p.x)?;
        let (h0, g0) = (self.canon.temporal.eval(p)?, self.canon.spatial.eval(p)?);
        let h2 = temporal_semispray_law(&c2, &pt.y, &temporal_semispray_law(&c, &p.y, &h0));
        acc.vec("semispray-cocycle", &h2, &temporal_semispray_law(&c12, &p.y, &h0));
        let g2 = spatial_semispray_law(&c2, &pt.y, &spatial_semispray_law(&c, &p.y, &g0));
        acc.vec("semispray-cocycle", &g2, &spatial_semispray_law(&c12, &p.y, &g0));
        Ok(())
    }

    /// `γ̃ᵖ_qr = (∂x̃ᵖ/∂xⁱ) γⁱⱼₖ (∂xʲ/∂x̃q)(∂xᵏ/∂x̃r) + (∂x̃ᵖ/∂xˡ) ∂²xˡ/∂x̃q∂x̃r`
    fn christoffel_error(&self, c: &ChangeAt, p: &JetPoint, pt: &JetPoint) -> Result<f64> {
        let n = p.n();
        let gamma = spatial_christoffel(&*self.geom.phi, p.x.as_slice())?;
        let gamma_t = spatial_christoffel(&*self.tilde.phi, pt.x.as_slice())?;
        let (j, ji) = (&c.jac, &c.jac_inv);
        let mut law = Vec::with_capacity(n * n * n);
        for pp in 0..n {
            for q in 0..n {
                for r in 0..n {
                    let mut v = 0.0;
                    for i in 0..n {
                        for a in 0..n {
                            for b in 0..n {
                                v += j[(pp, i)] * gamma.get(i, a, b) * ji[(a, q)] * ji[(b, r)];
                            }
                        }
                        v += j[(pp, i)] * c.hess_inv[i][(q, r)];
                    }
                    law.push(v);
                }
            }
        }
        Ok(rel_err(&law, gamma_t.as_slice()))
    }
}

/// Overall verdict of a list of records.
pub fn all_passed(records: &[CheckRecord]) -> bool {
    records.iter().all(|r| r.passed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrange::ExprLagrangian;
    use crate::metrics::{ExprSpatialMetric, ExprTemporalMetric};

    fn sphere_geometry() -> Geometry {
        let rows = [vec!["1", "0"], vec!["0", "sin(x1)^2 + 1"]];
        Geometry {
            h: Arc::new(ExprTemporalMetric::parse("1 + t^2").unwrap()),
            phi: Arc::new(ExprSpatialMetric::parse(&rows).unwrap()),
            lagrangians: vec![Arc::new(ExprLagrangian::harmonic("1 + t^2", &rows).unwrap())],
        }
    }

    #[test]
    fn relative_error_conventions() {
        assert_eq!(rel_err(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((rel_err(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
        assert_eq!(rel_err(&[1e-14], &[0.0]), 1e-14);
        assert_eq!(rel_err(&[1.0], &[1.0, 2.0]), f64::INFINITY);
        assert_eq!(rel_err(&[f64::NAN], &[1.0]), f64::INFINITY);
    }

    #[test]
    fn identity_change_is_exact() {
        let g = sphere_geometry();
        let recs = run_covariance(&g, &[JetChange::identity(2)], &CovarianceOptions::default()).unwrap();
        assert_eq!(recs.len(), 15);
        for r in &recs {
            assert!(r.max_error < 1e-14, "{r:?}");
        }
    }

    #[test]
    fn generated_changes_pass_and_corruption_fails() {
        let g = sphere_geometry();
        let mut gen = Generator::new(5);
        let changes: Vec<_> = (0..3).map(|_| gen.jet_change(2).unwrap()).collect();
        let opts = CovarianceOptions {
            points_per_change: 2,
            ..Default::default()
        };
        let recs = run_covariance(&g, &changes, &opts).unwrap();
        assert!(all_passed(&recs), "{recs:#?}");
        let bad = run_covariance(
            &g,
            &changes,
            &CovarianceOptions {
                corrupt_connection: true,
                ..opts
            },
        )
        .unwrap();
        let failed: Vec<_> = bad.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
        assert_eq!(failed, ["spatial-connection-law"]);
    }

    #[test]
    fn records_are_sorted() {
        let g = sphere_geometry();
        let recs = run_covariance(&g, &[JetChange::identity(2)], &CovarianceOptions::default()).unwrap();
        assert!(recs.windows(2).all(|w| w[0].name < w[1].name));
    }
}
