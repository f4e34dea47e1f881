use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;

use jetflow::covariance::rel_err;
use jetflow::dtensor::{h_normalization, liouville, tensor_product, transform_dtensor};
use jetflow::exprlang::{eval2, parse, Var};
use jetflow::generator::Generator;
use jetflow::jet::{jet_jacobian, prolong, JetPoint};
use jetflow::lagrange::{fundamental_metric, g_matrix, LagrangianFn};
use jetflow::metrics::{spatial_christoffel, ExprTemporalMetric, TemporalMetric};

fn all_seeds(n: usize) -> Vec<Var> {
    std::iter::once(Var::T)
        .chain((0..n).map(Var::X))
        .chain((0..n).map(Var::Y))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printing_then_parsing_gives_the_same_tree(seed in any::<u64>(), depth in 0usize..6) {
        let ast = Generator::new(seed).expression(3, depth);
        let back = parse(&ast.to_string(), 3).unwrap();
        prop_assert_eq!(back, ast);
    }

    #[test]
    fn derivatives_match_central_differences(seed in any::<u64>()) {
        let mut g = Generator::new(seed);
        let n = 2;
        let ast = g.expression(n, 4);
        let p = g.probe_point(n);
        let env = p.env();
        let f = |e: &[f64]| ast.eval_f64(e[0], &e[1..=n], &e[1 + n..]).unwrap();
        let tay = eval2(&ast, p.t, p.x.as_slice(), p.y.as_slice(), &all_seeds(n)).unwrap();
        let at = |shifts: &[(usize, f64)]| {
            let mut e = env.clone();
            for &(i, d) in shifts {
                e[i] += d;
            }
            f(&e)
        };
        let (hg, hh) = (1e-6, 1e-4);
        for i in 0..2 * n + 1 {
            let fd = (at(&[(i, hg)]) - at(&[(i, -hg)])) / (2.0 * hg);
            prop_assert!((tay.d1(i) - fd).abs() <= 1e-6 * (1.0 + tay.d1(i).abs()));
            for j in 0..2 * n + 1 {
                let fd = (at(&[(i, hh), (j, hh)]) - at(&[(i, hh), (j, -hh)]) - at(&[(i, -hh), (j, hh)])
                    + at(&[(i, -hh), (j, -hh)]))
                    / (4.0 * hh * hh);
                prop_assert!((tay.d2(i, j) - fd).abs() <= 1e-4 * (1.0 + tay.d2(i, j).abs()));
            }
        }
    }

    #[test]
    fn hessians_are_exactly_symmetric(seed in any::<u64>()) {
        let mut g = Generator::new(seed);
        let ast = g.expression(2, 5);
        let p = g.probe_point(2);
        let tay = eval2(&ast, p.t, p.x.as_slice(), p.y.as_slice(), &all_seeds(2)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                prop_assert_eq!(tay.d2(i, j).to_bits(), tay.d2(j, i).to_bits());
            }
        }
        let phi = g.spatial_metric(3).unwrap();
        let gamma = spatial_christoffel(&phi, g.probe_point(3).x.as_slice()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    prop_assert_eq!(gamma.get(i, j, k).to_bits(), gamma.get(i, k, j).to_bits());
                }
            }
        }
    }

    #[test]
    fn prolongation_is_functorial(seed in any::<u64>(), n in 1usize..4) {
        let mut g = Generator::new(seed);
        let (c1, c2) = (g.jet_change(n).unwrap(), g.jet_change(n).unwrap());
        let p = g.probe_point(n);
        let two_steps = prolong(&c2, &prolong(&c1, &p).unwrap()).unwrap();
        let composed = prolong(&c1.then(&c2), &p).unwrap();
        prop_assert!((two_steps.t - composed.t).abs() <= 1e-9);
        prop_assert!((&two_steps.x - &composed.x).amax() <= 1e-9);
        prop_assert!((&two_steps.y - &composed.y).amax() <= 1e-9);
    }

    #[test]
    fn jet_jacobians_follow_the_chain_rule(seed in any::<u64>(), n in 1usize..4) {
        let mut g = Generator::new(seed);
        let (c1, c2) = (g.jet_change(n).unwrap(), g.jet_change(n).unwrap());
        let p = g.probe_point(n);
        let m1 = jet_jacobian(&c1, &p).unwrap();
        let m2 = jet_jacobian(&c2, &prolong(&c1, &p).unwrap()).unwrap();
        let m12 = jet_jacobian(&c1.then(&c2), &p).unwrap();
        prop_assert!(rel_err((m1 * m2).as_slice(), m12.as_slice()) <= 1e-8);
    }

    #[test]
    fn jet_jacobian_is_block_triangular(seed in any::<u64>(), n in 1usize..5) {
        let mut g = Generator::new(seed);
        let c = g.jet_change(n).unwrap();
        let p = g.probe_point(n);
        let m = jet_jacobian(&c, &p).unwrap();
        let at = c.at(p.t, &p.x).unwrap();
        let block: DMatrix<f64> = m.view((1 + n, 1 + n), (n, n)).into_owned();
        prop_assert!((block - at.jac.transpose() * at.dt_dtt).amax() <= 1e-15);
        for i in 0..n {
            prop_assert_eq!(m[(1 + i, 0)], 0.0);
            prop_assert_eq!(m[(1 + n + i, 0)], 0.0);
            for j in 0..n {
                prop_assert_eq!(m[(1 + n + i, 1 + j)], 0.0);
            }
        }
    }

    #[test]
    fn dtensor_law_round_trips(seed in any::<u64>(), n in 1usize..4) {
        let mut g = Generator::new(seed);
        let c = g.jet_change(n).unwrap();
        let h = g.temporal_metric().unwrap();
        let p = g.probe_point(n);
        let v = tensor_product(&liouville(&p), &h_normalization(&h, &p).unwrap());
        let there = transform_dtensor(&v, &c).unwrap();
        let back = transform_dtensor(&there, &c.inverse()).unwrap();
        prop_assert!(rel_err(&back.components, &v.components) <= 1e-9);
    }

    #[test]
    fn fundamental_metric_scaled_by_h_is_g(seed in any::<u64>(), n in 1usize..4) {
        let mut g = Generator::new(seed);
        let l: Arc<dyn LagrangianFn> = Arc::new(g.polynomial_lagrangian(n).unwrap());
        let h = ExprTemporalMetric::parse(&g.temporal_metric_text()).unwrap();
        let p: JetPoint = g.probe_point(n);
        let fm = fundamental_metric(&*l, &p).unwrap().as_matrix() * h.h11(p.t).unwrap();
        let gm = g_matrix(&*l, &h, &p).unwrap();
        prop_assert_eq!(fm, gm.g);
    }
}
