use std::sync::Arc;

use nalgebra::DVector;

use jetflow::dynamics::{autoparallel_rhs, harmonic_rhs, integrate, SodeProblem, Stepper};
use jetflow::metrics::{ExprSpatialMetric, ExprTemporalMetric, SpatialMetric, TemporalMetric};
use jetflow::spray::{CanonicalConnection, RelativisticSemispray};

fn pair(h: &str, phi: &[Vec<&str>]) -> (Arc<dyn TemporalMetric>, Arc<dyn SpatialMetric>) {
    (
        Arc::new(ExprTemporalMetric::parse(h).unwrap()),
        Arc::new(ExprSpatialMetric::parse(phi).unwrap()),
    )
}

fn problem(rhs: jetflow::dynamics::Rhs, x0: &[f64], v0: &[f64], t_end: f64) -> SodeProblem {
    SodeProblem {
        rhs,
        t0: 0.0,
        x0: DVector::from_column_slice(x0),
        v0: DVector::from_column_slice(v0),
        t_end,
        stepper: Stepper::default(),
    }
}

#[test]
fn solutions_are_straight_lines_in_geodesic_time() {
    // h = exp(2t): the h-geodesic parameter is s = eᵗ
    let (h, phi) = pair("exp(2*t)", &[vec!["1", "0"], vec!["0", "1"]]);
    let s = RelativisticSemispray::canonical(h, phi);
    let tr = integrate(&problem(harmonic_rhs(&s), &[0.2, -0.4], &[1.0, 0.5], 1.0)).unwrap();
    let (a, b) = (&tr.samples[0], tr.last());
    let (sa, sb) = (a.t.exp(), b.t.exp());
    for p in &tr.samples {
        let u = (p.t.exp() - sa) / (sb - sa);
        let line = &a.x * (1.0 - u) + &b.x * u;
        assert!((&p.x - line).amax() < 1e-6);
    }
}

#[test]
fn geodesic_energy_is_conserved() {
    let (h, phi) = pair("1", &[vec!["1", "0"], vec!["0", "sin(x1)^2"]]);
    let s = RelativisticSemispray::canonical(h, phi.clone());
    let tr = integrate(&problem(harmonic_rhs(&s), &[1.1, 0.3], &[-0.4, 0.9], 1.0)).unwrap();
    let energy = |x: &DVector<f64>, v: &DVector<f64>| (v.transpose() * phi.phi(x.as_slice()).unwrap() * v)[(0, 0)];
    let e0 = energy(&tr.samples[0].x, &tr.samples[0].v);
    for p in &tr.samples {
        assert!((energy(&p.x, &p.v) - e0).abs() <= 1e-8);
    }
}

#[test]
fn harmonic_and_autoparallel_curves_coincide() {
    let (h, phi) = pair("1 + t^2", &[vec!["1", "0"], vec!["0", "sin(x1)^2"]]);
    let s = RelativisticSemispray::canonical(h.clone(), phi.clone());
    let a = integrate(&problem(harmonic_rhs(&s), &[1.0, 0.0], &[0.2, 0.7], 1.0)).unwrap();
    let b = integrate(&problem(
        autoparallel_rhs(Arc::new(CanonicalConnection { h, phi })),
        &[1.0, 0.0],
        &[0.2, 0.7],
        1.0,
    ))
    .unwrap();
    for (p, q) in a.samples.iter().zip(&b.samples) {
        assert_eq!(p.t, q.t);
        assert!((&p.x - &q.x).amax() <= 1e-12);
    }
}

#[test]
fn adaptive_and_fixed_steppers_agree() {
    let (h, phi) = pair("exp(t) + t^2", &[vec!["1 + x2^2", "0"], vec!["0", "2"]]);
    let s = RelativisticSemispray::canonical(h, phi);
    let mut prob = problem(harmonic_rhs(&s), &[0.1, 0.2], &[0.5, -0.3], 1.5);
    let fixed = integrate(&prob).unwrap();
    prob.stepper = Stepper::Rk45 {
        atol: 1e-12,
        rtol: 1e-12,
    };
    let adaptive = integrate(&prob).unwrap();
    assert!(adaptive.samples.len() < fixed.samples.len());
    assert!((&fixed.last().x - &adaptive.last().x).amax() < 1e-9);
    assert!((&fixed.last().v - &adaptive.last().v).amax() < 1e-9);
}
