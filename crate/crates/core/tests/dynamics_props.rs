use ndarray::{array, Array2};
use proptest::prelude::*;

use ssdn::diagnostics::{
    analytic_certificate, certificate_from_run, fixed_point_residual, kkt_residual, lyapunov_value,
};
use ssdn::dynamics::{AlgorithmParams, Dynamics, Method, SystemState, Variant};
use ssdn::problem::{paper_sec6, PAPER_INITIAL_POSITIONS};
use ssdn::{AgentObjective, Graph, ProblemSpec, ProximableFunction, SmoothFunction};

fn params(h: f64, t_end: f64) -> AlgorithmParams {
    AlgorithmParams {
        alpha: 0.2,
        gamma: 0.3,
        h,
        t_end,
        method: Method::Euler,
    }
}

fn initial() -> SystemState {
    SystemState::from_positions(Array2::from_shape_fn((4, 2), |(i, k)| PAPER_INITIAL_POSITIONS[i][k]))
}

fn state(vals: &[f64]) -> SystemState {
    let block = |o: usize| Array2::from_shape_fn((4, 2), |(i, k)| vals[o + 2 * i + k]);
    SystemState {
        x: block(0),
        z: block(8),
        v: block(16),
        t: 0.0,
    }
}

fn diff_norm(a: &SystemState, b: &SystemState) -> f64 {
    let d = |u: &Array2<f64>, w: &Array2<f64>| u.iter().zip(w).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
    (d(&a.x, &b.x) + d(&a.z, &b.z) + d(&a.v, &b.v)).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Prox maps are nonexpansive, so the field is globally Lipschitz with
    /// `C² ≤ (2 + 2αλ + γ)² + (2 + γ)² + (αλ)²` for unit-weight quadratics.
    #[test]
    fn field_is_lipschitz(
        base in prop::collection::vec(-10.0f64..10.0, 24),
        delta in prop::collection::vec(-1e-2f64..1e-2, 24),
    ) {
        let p = paper_sec6();
        let d = Dynamics::new(&p, params(1e-3, 1.0)).unwrap();
        let a = state(&base);
        let moved: Vec<f64> = base.iter().zip(&delta).map(|(x, e)| x + e).collect();
        let b = state(&moved);
        let (fa, fb) = (d.vector_field(&a).unwrap(), d.vector_field(&b).unwrap());
        let df = diff_norm(
            &SystemState { x: fa.dx, z: fa.dz, v: fa.dv, t: 0.0 },
            &SystemState { x: fb.dx, z: fb.dz, v: fb.dv, t: 0.0 },
        );
        let al = 0.2 * p.lambda_max();
        let c = ((2.0 + 2.0 * al + 0.3f64).powi(2) + 2.3f64.powi(2) + al * al).sqrt();
        prop_assert!(df <= c * diff_norm(&a, &b) + 1e-12, "{} > {} * {}", df, c, diff_norm(&a, &b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn dual_sum_is_conserved(vals in prop::collection::vec(-10.0f64..10.0, 24), variant in prop_oneof![Just(Variant::Smooth), Just(Variant::Subgradient)]) {
        let p = paper_sec6();
        let d = Dynamics::with_variant(&p, params(1e-3, 5.0), variant).unwrap();
        let s0 = state(&vals);
        let sums = |s: &SystemState| s.v.columns().into_iter().map(|c| c.sum()).collect::<Vec<_>>();
        let before = sums(&s0);
        let after = sums(&d.integrate(&s0, |_, _, _| Ok(())).unwrap());
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() <= 1e-12, "{} -> {}", a, b);
        }
    }

    #[test]
    fn lyapunov_positive_away_from_certificate(vals in prop::collection::vec(-5.0f64..5.0, 24)) {
        let p = paper_sec6();
        let d = Dynamics::new(&p, params(1e-3, 1.0)).unwrap();
        let c = analytic_certificate(&d, &[0.0, 0.0]).unwrap();
        let cs = c.as_state();
        let mut s = state(&vals);
        s.x += &cs.x;
        s.z += &cs.z;
        s.v += &cs.v;
        prop_assume!(diff_norm(&s, &cs) > 1e-6);
        prop_assert!(lyapunov_value(&d, &s, &c) > 0.0);
    }
}

#[test]
fn lyapunov_sampled_around_certificate() {
    use rand::{Rng, SeedableRng};
    let p = paper_sec6();
    let d = Dynamics::new(&p, params(1e-3, 1.0)).unwrap();
    let c = analytic_certificate(&d, &[0.0, 0.0]).unwrap();
    let cs = c.as_state();
    assert!(lyapunov_value(&d, &cs, &c).abs() <= 1e-12);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let scale = 10f64.powf(rng.random_range(-4.0..1.0));
        let mut s = cs.clone();
        for block in [&mut s.x, &mut s.z, &mut s.v] {
            block.mapv_inplace(|v| v + scale * rng.random_range(-1.0..1.0));
        }
        assert!(lyapunov_value(&d, &s, &c) > 0.0);
    }
}

#[test]
fn euler_refinement_is_first_order() {
    let p = paper_sec6();
    let end = |h: f64| Dynamics::new(&p, params(h, 1.0)).unwrap().integrate(&initial(), |_, _, _| Ok(())).unwrap();
    let hs = [1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4];
    let ends: Vec<SystemState> = hs.iter().map(|&h| end(h)).collect();
    for s in &ends {
        assert!((s.t - 1.0).abs() < 1e-12);
    }
    let diffs: Vec<f64> = ends.windows(2).map(|w| diff_norm(&w[0], &w[1])).collect();
    for w in diffs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.7..=2.3).contains(&ratio), "ratios from {diffs:?}");
    }
}

#[test]
fn runs_are_deterministic() {
    let p = paper_sec6();
    let d = Dynamics::new(&p, params(1e-3, 3.0)).unwrap();
    let a = d.simulate(&initial(), 10, None).unwrap();
    let b = d.simulate(&initial(), 10, None).unwrap();
    assert_eq!(a, b);
    for (r, s) in a.records.iter().zip(&b.records) {
        assert_eq!(r.state.x.as_slice().unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   s.state.x.as_slice().unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn converged_run_is_an_equilibrium() {
    let p = paper_sec6();
    let d = Dynamics::new(&p, params(1e-3, 2000.0)).unwrap();
    let s = d.integrate(&initial(), |_, _, _| Ok(())).unwrap();
    let fp = fixed_point_residual(&d, &s).unwrap();
    let kkt = kkt_residual(&d, &s).unwrap();
    assert!(fp <= 1e-4, "field {fp}");
    assert!(kkt <= 1e-3, "kkt {kkt}");
    // same primal point as the analytic certificate; (z, v) need not agree because
    // every f2 has a kink at the optimum and the multipliers are not unique
    let c = analytic_certificate(&d, &[0.0, 0.0]).unwrap();
    let dx = (&s.x - &c.x_star).iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(dx <= 1e-4, "{dx}");
    let cs = c.as_state();
    let f = d.vector_field(&cs).unwrap();
    assert!(f.norm() <= 1e-12);
}

#[test]
fn kkt_and_fixed_point_vanish_together() {
    let p = paper_sec6();
    let d = Dynamics::new(&p, params(1e-3, 4000.0)).unwrap();
    let c = analytic_certificate(&d, &[0.0, 0.0]).unwrap();
    let s = c.as_state();
    let (kkt, fp) = (kkt_residual(&d, &s).unwrap(), fixed_point_residual(&d, &s).unwrap());
    assert!(kkt <= 1e-10 && fp <= 1e-10);
    let run = certificate_from_run(&d, &initial(), 1e-10).unwrap();
    let s = run.as_state();
    let (kkt, fp) = (kkt_residual(&d, &s).unwrap(), fixed_point_residual(&d, &s).unwrap());
    assert!(kkt <= 1e-10 && fp <= 1e-10, "{kkt} {fp}");
}

#[test]
fn scalar_closed_form_equilibrium() {
    // n = 1, f0 = (x - 2)², f1 = 0, f2 = |x - 1|: x* = 1.5 with g2 = 1
    let agent = AgentObjective::new(
        SmoothFunction::quadratic(vec![2.0], 1.0).unwrap(),
        ProximableFunction::Zero,
        ProximableFunction::l1_anchor(vec![1.0], 1.0).unwrap(),
    )
    .unwrap();
    let p = ProblemSpec::new(Graph::path(1), vec![agent]).unwrap();
    let prm = AlgorithmParams { alpha: 0.5, gamma: 0.5, h: 1e-2, t_end: 1.0, method: Method::Euler };
    let d = Dynamics::new(&p, prm).unwrap();
    let c = analytic_certificate(&d, &[1.5]).unwrap();
    assert_eq!(c.z_star, array![[-2.0]]);
    let f = d.vector_field(&c.as_state()).unwrap();
    assert_eq!((f.dx[[0, 0]], f.dz[[0, 0]], f.dv[[0, 0]]), (0.0, 0.0, 0.0));
}

#[test]
fn rk4_matches_fine_euler() {
    let p = paper_sec6();
    let mut prm = params(1e-2, 1.0);
    prm.method = Method::Rk4;
    let rk = Dynamics::new(&p, prm).unwrap().integrate(&initial(), |_, _, _| Ok(())).unwrap();
    let eu = Dynamics::new(&p, params(1e-5, 1.0)).unwrap().integrate(&initial(), |_, _, _| Ok(())).unwrap();
    assert!(diff_norm(&rk, &eu) < 1e-3, "{}", diff_norm(&rk, &eu));
}
