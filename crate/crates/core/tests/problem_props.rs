use ndarray::Array2;
use proptest::prelude::*;

use ssdn::problem::{paper_sec6, scale_for_strong_convexity};
use ssdn::{AgentObjective, Edge, Graph, ProblemSpec, ProximableFunction, SmoothFunction};

fn quadratic() -> impl Strategy<Value = (SmoothFunction, usize)> {
    (1usize..=4).prop_flat_map(|q| {
        (prop::collection::vec(-5.0f64..5.0, q), 0.05f64..4.0)
            .prop_map(move |(m, k)| (SmoothFunction::quadratic(m, k).unwrap(), q))
    })
}

fn with_points(k: usize) -> impl Strategy<Value = (SmoothFunction, Vec<Vec<f64>>)> {
    quadratic().prop_flat_map(move |(f, q)| (Just(f), prop::collection::vec(prop::collection::vec(-10.0f64..10.0, q), k)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn strongly_convex_with_c_equal_2k((f, pts) in with_points(2)) {
        let c = f.strong_convexity();
        let SmoothFunction::Quadratic { k, .. } = &f;
        prop_assert_eq!(c, 2.0 * k);
        let (a, b) = (&pts[0], &pts[1]);
        let ga = f.gradient(a).unwrap();
        let gb = f.gradient(b).unwrap();
        let lhs: f64 = ga.iter().zip(&gb).zip(a.iter().zip(b)).map(|((x, y), (u, v))| (x - y) * (u - v)).sum();
        let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
        prop_assert!(lhs >= c * d2 - 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences((f, pts) in with_points(1)) {
        let x = &pts[0];
        let g = f.gradient(x).unwrap();
        let h = 1e-5;
        for k in 0..x.len() {
            let mut up = x.clone();
            let mut down = x.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (f.value(&up) - f.value(&down)) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0), "{} vs {}", fd, g[k]);
        }
    }

    #[test]
    fn cost_invariant_under_relabeling(
        perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
        xs in prop::collection::vec(-2.0f64..2.0, 8),
    ) {
        let p = paper_sec6();
        let x = Array2::from_shape_fn((4, 2), |(i, k)| xs[2 * i + k]);
        // agent perm[i] of the original becomes agent i
        let agents: Vec<AgentObjective> = perm.iter().map(|&j| p.agents()[j].clone()).collect();
        let mut inverse = [0; 4];
        for (i, &j) in perm.iter().enumerate() {
            inverse[j] = i;
        }
        let edges: Vec<Edge> = p.graph().edges().iter()
            .map(|e| Edge { i: inverse[e.i - 1] + 1, j: inverse[e.j - 1] + 1, weight: e.weight })
            .collect();
        let q = ProblemSpec::new(Graph::from_edges(4, &edges).unwrap(), agents).unwrap();
        let y = Array2::from_shape_fn((4, 2), |(i, k)| x[[perm[i], k]]);
        let (a, b) = (p.evaluate_total_cost(x.view()), q.evaluate_total_cost(y.view()));
        prop_assert!(a == b || (a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
        prop_assert!((p.lambda_max() - q.lambda_max()).abs() < 1e-12);
    }

    #[test]
    fn scaling_multiplies_strong_convexity(k in 0.05f64..0.4, factor in 3.0f64..30.0) {
        let a = AgentObjective::new(
            SmoothFunction::quadratic(vec![1.0], k).unwrap(),
            ProximableFunction::Zero,
            ProximableFunction::l1_anchor(vec![0.0], 1.0).unwrap(),
        ).unwrap();
        prop_assume!(factor * 2.0 * k > 1.0);
        let s = scale_for_strong_convexity(&a, factor).unwrap();
        prop_assert!((s.f0.strong_convexity() - factor * 2.0 * k).abs() < 1e-12);
        prop_assert!((s.f0.value(&[0.7]) - factor * a.f0.value(&[0.7])).abs() < 1e-9);
        prop_assert_eq!(&s.f2, &a.f2);
    }
}

#[test]
fn paper_optimum_cost() {
    let p = paper_sec6();
    assert_eq!(p.evaluate_total_cost(Array2::zeros((4, 2)).view()), 9.0);
    assert_eq!(p.smooth_cost(Array2::zeros((4, 2)).view()), 5.0);
    let report = p.validate_assumptions();
    assert!(report.all_pass(), "{report}");
}
