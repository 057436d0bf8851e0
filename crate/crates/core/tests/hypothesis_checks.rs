use std::sync::Arc;

use graph_fujita::generators::{gen_cycle_group, gen_lattice, gen_tree};
use graph_fujita::hypotheses::{
    ball_potential_sum, check_assumption_a, check_corollary1, check_corollary2, check_corollary2_on_graph, check_corollary3,
    check_finite_graph_condition, check_theorem_hypotheses, fit_exponent, hp_integral, hp_integral_adaptive, sample_f_annulus,
    search_theorem_grid, verify_annulus_inclusion, GraphContext, Holds, HypothesisError, SpaceTimeRegion, TheoremParams, THETA_GRID,
};
use graph_fujita::potential::PotentialSpec;
use graph_fujita::PseudoMetric;
use proptest::prelude::*;

fn one() -> PotentialSpec {
    PotentialSpec::Constant(1.0)
}

#[test]
fn hp_integral_matches_slice_length_oracle_on_z1() {
    let g = gen_lattice(1, 20.0).unwrap();
    let d = PseudoMetric::euclidean(&g).unwrap();
    let o = g.index_of("(0)").unwrap();
    let region = SpaceTimeRegion::e_annulus(o, 2.0, 1.0, 10.0).unwrap();
    // Σ_{|x|≤14} 2·len([max(0, 100 − x²), 200 − x²])
    let exact: f64 = (-14i64..=14)
        .map(|x| {
            let x2 = (x * x) as f64;
            2.0 * ((200.0 - x2) - (100.0 - x2).max(0.0))
        })
        .sum();
    let h = 0.5;
    for q in [0.5, 1.0, 3.0] {
        let got = hp_integral(&g, &d, &one(), q, &region, h).unwrap();
        assert!((got - exact).abs() <= h * g.node_count() as f64, "{got} vs {exact}");
    }
}

#[test]
fn hp_integral_time_dependent_against_closed_form() {
    // v = (1+t)^{-2}, q = 1: ∫ (1+t)^2 dt over each node's slice has a closed form
    let g = gen_lattice(1, 20.0).unwrap();
    let d = PseudoMetric::euclidean(&g).unwrap();
    let o = g.index_of("(0)").unwrap();
    let region = SpaceTimeRegion::e_annulus(o, 2.0, 1.0, 10.0).unwrap();
    let v: PotentialSpec = "tpower:-2".parse().unwrap();
    let cube = |t: f64| (1.0 + t).powi(3) / 3.0;
    let exact: f64 = (-14i64..=14)
        .map(|x| {
            let x2 = (x * x) as f64;
            2.0 * (cube(200.0 - x2) - cube((100.0 - x2).max(0.0)))
        })
        .sum();
    let (got, _) = hp_integral_adaptive(&g, &d, &v, 1.0, &region).unwrap();
    assert!((got - exact).abs() / exact < 1e-4, "{got} vs {exact}");
}

#[test]
fn hp_integral_refinement_is_stable_on_z2() {
    let g = gen_lattice(2, 32.0).unwrap();
    let d = PseudoMetric::euclidean(&g).unwrap();
    let o = g.index_of("(0,0)").unwrap();
    let region = SpaceTimeRegion::e_annulus(o, 2.0, 1.0, 20.0).unwrap();
    let v: PotentialSpec = "sep:tpower:0.5;power:1".parse().unwrap();
    let h = region.time_horizon() / 512.0;
    let a = hp_integral(&g, &d, &v, 1.0, &region, h).unwrap();
    let b = hp_integral(&g, &d, &v, 1.0, &region, h / 2.0).unwrap();
    assert!((a - b).abs() / b < 0.01);
}

fn z2_context() -> (graph_fujita::WeightedGraph, PseudoMetric, usize) {
    let g = gen_lattice(2, 30.0).unwrap();
    let d = PseudoMetric::euclidean(&g).unwrap();
    let o = g.index_of("(0,0)").unwrap();
    (g, d, o)
}

#[test]
fn theorem_hypotheses_inside_range() {
    let (g, d, o) = z2_context();
    let ctx = GraphContext { graph: &g, metric: &d, x0: o };
    let p =
        TheoremParams { sigma: 1.8, m: 1.0, alpha: 1.0, theta1: 2.0, theta2: 1.0, radii: vec![8.0, 10.0, 12.0, 14.0, 16.0], slack: 0.1 };
    let v = check_theorem_hypotheses(ctx, &one(), &p).unwrap();
    assert_eq!(v.holds, Holds::Yes, "{}", v.to_json());
    let hp2 = v.components.iter().find(|c| c.label == "hp2").unwrap();
    assert!((hp2.target - 4.5).abs() < 1e-12);
    // space-time measure of E_R grows like R^{N + θ1/θ2}
    assert!((hp2.slope - 4.0).abs() < 0.1, "slope {}", hp2.slope);
}

#[test]
fn theorem_hypotheses_outside_range_fail_on_whole_grid() {
    let (g, d, o) = z2_context();
    let ctx = GraphContext { graph: &g, metric: &d, x0: o };
    let p =
        TheoremParams { sigma: 3.0, m: 1.0, alpha: 1.0, theta1: 2.0, theta2: 1.0, radii: vec![8.0, 10.0, 12.0, 14.0, 16.0], slack: 0.1 };
    let v = search_theorem_grid(ctx, &one(), &p, &THETA_GRID).unwrap();
    assert_eq!(v.holds, Holds::No, "{}", v.to_json());
    assert!(v.witness.is_none());

    let inside = TheoremParams { sigma: 1.8, ..p };
    let v = search_theorem_grid(ctx, &one(), &inside, &THETA_GRID).unwrap();
    assert_eq!(v.holds, Holds::Yes);
    let w = v.witness.unwrap();
    assert!(w.theta1 >= 2.0 && w.theta2 >= 1.0);
}

#[test]
fn theorem_precondition_and_truncation() {
    let (g, d, o) = z2_context();
    let ctx = GraphContext { graph: &g, metric: &d, x0: o };
    let p = TheoremParams { sigma: 1.0, m: 1.0, alpha: 1.0, theta1: 2.0, theta2: 1.0, radii: vec![8.0, 10.0, 12.0, 14.0], slack: 0.1 };
    assert!(matches!(check_theorem_hypotheses(ctx, &one(), &p), Err(HypothesisError::ParameterOutOfRange(_))));
    let big = TheoremParams { sigma: 1.8, radii: vec![10.0, 15.0, 20.0, 25.0], ..p };
    let v = check_theorem_hypotheses(ctx, &one(), &big).unwrap();
    assert_eq!(v.holds, Holds::Inconclusive);
}

#[test]
fn corollary2_boundary_is_closed() {
    let bound = 2.0 * 2.0 / 1.0;
    assert!(check_corollary2(1.5, bound - 1.5, 2.0, 1.0, 1.0).unwrap().is_yes());
    assert!(check_corollary2(0.0, bound, 2.0, 1.0, 1.0).unwrap().is_yes());
}

#[test]
fn corollary1_reduction_differs_only_at_the_boundary() {
    // (1, δ, 1, δ′) with δ = 0 and δ′ on the bound: the second corollary's
    // inequality holds, the first corollary's condition (ii) does not
    let bound = 2.0 * 2.0 / 1.0;
    assert!(check_corollary2(0.0, bound, 2.0, 1.0, 1.0).unwrap().is_yes());
    assert_eq!(check_corollary1([1.0, 0.0, 1.0, bound], 2.0, 1.0, 1.0).unwrap().holds, Holds::No);
}

#[test]
fn tree_ball_sums_have_logarithmic_closed_form() {
    // g = max(d,1)·2^d and q = 1 give Σ_{B_R} g^{-1} μ = 3 + 4.5·H_R on the binary tree
    let g = Arc::new(gen_tree(2, 15).unwrap());
    let d = PseudoMetric::natural(Arc::clone(&g));
    let ctx = GraphContext { graph: &g, metric: &d, x0: g.index_of("r").unwrap() };
    let v: PotentialSpec = "tree-exp:lambda=1,N=2".parse().unwrap();
    let mut harmonic = 0.0;
    let mut samples = Vec::new();
    for r in 1..=14 {
        harmonic += 1.0 / r as f64;
        let got = ball_potential_sum(ctx, &v, 1.0, r as f64).unwrap();
        assert!((got - (3.0 + 4.5 * harmonic)).abs() < 1e-9, "R = {r}: {got}");
        samples.push((r as f64, got));
    }
    // a + b·ln R has local log-log slope b/(a + b ln R), about 0.28 on [5, 14]
    let fit = fit_exponent(&samples[4..]).unwrap();
    assert!(fit.slope > 0.2 && fit.slope < 0.3, "slope {}", fit.slope);
}

#[test]
fn tree_example_satisfies_corollary2_with_slack() {
    let g = Arc::new(gen_tree(2, 15).unwrap());
    let d = PseudoMetric::natural(Arc::clone(&g));
    let ctx = GraphContext { graph: &g, metric: &d, x0: g.index_of("r").unwrap() };
    let radii: Vec<f64> = (5..=14).map(f64::from).collect();
    for (sigma, m) in [(2.0, 1.0), (3.0, 0.5)] {
        let lambda = f64::max(sigma - 1.0, (sigma - m) / m);
        let v: PotentialSpec = format!("tree-exp:lambda={lambda},N=2").parse().unwrap();
        let verdict = check_corollary2_on_graph(ctx, &v, sigma, m, 0.0, &radii, 0.1).unwrap();
        assert!(verdict.is_yes(), "{}", verdict.to_json());
    }
}

#[test]
fn corollary3_examples() {
    let (g, d, o) = z2_context();
    let ctx = GraphContext { graph: &g, metric: &d, x0: o };
    let radii = [10.0, 15.0, 20.0, 25.0, 30.0];
    assert!(check_corollary3(ctx, 1.8, 1.0, 1.0, &radii, 0.1).unwrap().is_yes());
    assert_eq!(check_corollary3(ctx, 2.1, 1.0, 1.0, &radii, 0.1).unwrap().holds, Holds::No);
    assert!(matches!(
        check_corollary3(ctx, 1.8, 1.0, 1.0, &[10.0, 20.0, 30.0, 45.0], 0.1),
        Err(HypothesisError::TruncationTooSmall { .. })
    ));
    assert!(check_corollary3(ctx, 1.0, 1.0, 1.0, &radii, 0.1).is_err());
}

#[test]
fn finite_graph_condition_examples() {
    let c = Arc::new(gen_cycle_group(10).unwrap());
    let d = PseudoMetric::natural(Arc::clone(&c));
    let ctx = GraphContext { graph: &c, metric: &d, x0: 0 };
    let times = [5.0, 10.0, 20.0, 40.0, 80.0];
    for sigma in [1.2, 2.0, 5.0] {
        let v = check_finite_graph_condition(ctx, &"power:1".parse().unwrap(), sigma, &times, 0.1).unwrap();
        assert!(v.is_yes());
        assert!((v.slope.unwrap() - 1.0).abs() < 1e-9);
    }
    // (1+t)^β with q = 1/(σ−1): slope → 1 + |β|/(σ−1)
    let v = check_finite_graph_condition(ctx, &"tpower:-3".parse().unwrap(), 2.0, &[100.0, 200.0, 400.0, 800.0], 0.1).unwrap();
    assert_eq!(v.holds, Holds::No);
    assert!((v.slope.unwrap() - 4.0).abs() < 0.05);
    assert!(check_finite_graph_condition(ctx, &one(), 1.0, &times, 0.1).is_err());
}

#[test]
fn assumption_a_on_tree_and_cycle() {
    let t = Arc::new(gen_tree(2, 8).unwrap());
    let d = PseudoMetric::natural(Arc::clone(&t));
    let v = check_assumption_a(GraphContext { graph: &t, metric: &d, x0: t.index_of("r").unwrap() }, 1.5, 0.0).unwrap();
    assert!(v.is_yes(), "{}", v.to_json());

    let c = Arc::new(gen_cycle_group(6).unwrap());
    let d = PseudoMetric::natural(Arc::clone(&c));
    // every node beyond R0 lies within 2j of the farthest node
    let v = check_assumption_a(GraphContext { graph: &c, metric: &d, x0: 0 }, 1.5, 1.0).unwrap();
    assert_eq!(v.holds, Holds::Inconclusive);
}

#[test]
fn verdict_json_shape() {
    let v = check_corollary1([1.0, 0.0, 1.0, 0.0], 2.0, 1.0, 1.0).unwrap();
    let json: serde_json::Value = serde_json::from_str(&v.to_json()).unwrap();
    for key in ["condition", "holds", "slope", "target", "slack", "C_fit", "R_range", "notes"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["holds"], "yes");
}

#[test]
fn inclusion_on_random_points() {
    for theta1 in [2.0, 3.0] {
        for theta2 in [1.0, 2.0] {
            let pts = sample_f_annulus(theta1, theta2, 5.0, 10_000, 7);
            assert!(verify_annulus_inclusion(theta1, theta2, 5.0, &pts).unwrap());
        }
    }
}

proptest! {
    #[test]
    fn e_annulus_inside_f_annulus(theta1 in 2.0f64..5.0, theta2 in 1.0f64..4.0, r in 1.0f64..50.0, u in 0.0f64..1.0, s in 0.0f64..1.0) {
        let e = SpaceTimeRegion::e_annulus(0, theta1, theta2, r).unwrap();
        let f = SpaceTimeRegion::f_annulus(0, theta1, theta2, r).unwrap();
        let total = e.lower + s * (e.upper - e.lower);
        let (d, t) = ((u * total).powf(1.0 / theta1), ((1.0 - u) * total).powf(1.0 / theta2));
        prop_assert!(f.contains_dt(d, t));
    }

    #[test]
    fn corollary1_witness_satisfies_proof_inequalities(
        d1 in 0.0f64..3.0, d2 in 0.0f64..3.0, d3 in 0.0f64..3.0, d4 in 0.0f64..5.0,
        sigma in 1.05f64..6.0, m in 0.2f64..1.0, alpha in 0.0f64..1.0,
    ) {
        let v = check_corollary1([d1, d2, d3, d4], sigma, m, alpha).unwrap();
        if let Some(w) = v.witness {
            let r = w.theta1 / w.theta2;
            let a = sigma / (sigma - 1.0);
            let b = (1.0 + alpha) * sigma / (sigma - m);
            prop_assert!(w.theta1 >= 2.0 && w.theta2 >= 1.0);
            prop_assert!(r * d1 + d2 <= r * a + 1e-9);
            prop_assert!(r * d3 + d4 <= b + 1e-9);
        } else {
            prop_assert_eq!(v.holds, Holds::No);
        }
    }

    #[test]
    fn corollary1_reduction_agrees_with_corollary2(
        delta in 0.0f64..3.0, delta_prime in 0.0f64..6.0, sigma in 1.05f64..6.0, m in 0.2f64..1.0, alpha in 0.0f64..1.0,
    ) {
        let c1 = check_corollary1([1.0, delta, 1.0, delta_prime], sigma, m, alpha).unwrap();
        let c2 = check_corollary2(delta, delta_prime, sigma, m, alpha).unwrap();
        prop_assert_eq!(c1.holds, c2.holds);
    }

    #[test]
    fn corollary2_accepts_small_exponents(sigma in 1.01f64..50.0, m in 0.1f64..1.0, eps in 0.0f64..1e-3) {
        prop_assert!(check_corollary2(eps, eps, sigma, m.min(sigma - 0.005), 0.0).unwrap().is_yes());
    }

    #[test]
    fn longer_radius_lists_keep_exact_power_laws(p in 0.0f64..4.0, n in 4usize..12, extra in 1usize..6) {
        let target = 4.0;
        let make = |k: usize| (1..=k).map(|i| (i as f64 + 1.0, 3.0 * (i as f64 + 1.0).powf(p))).collect::<Vec<_>>();
        let short = fit_exponent(&make(n)).unwrap();
        let long = fit_exponent(&make(n + extra)).unwrap();
        if short.slope <= target + 0.1 {
            prop_assert!(long.slope <= target + 0.1);
        }
    }
}
