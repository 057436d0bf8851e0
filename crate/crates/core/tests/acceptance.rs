//! Acceptance suite. Each test checks one criterion and prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.
//!
//! Run with `cargo test -p graph-fujita --test acceptance -- --nocapture`.

use std::sync::Arc;
use std::time::Instant;

use graph_fujita::cutoff::{verify_est1, verify_est2, CutoffFamily};
use graph_fujita::dynamics::{
    integrate, ode_blowup_time, sweep, weak_residual, InitialData, Nonlinearity, RimPolicy, SimConfig, SimParams, Simulator, SweepGrid,
    WeakForm,
};
use graph_fujita::generators::{gen_cycle_group, gen_lattice, gen_product, gen_tree, GeneratorSpec, MeasureRule};
use graph_fujita::hypotheses::{
    ball_potential_sum, check_corollary3, check_finite_graph_condition, fit_exponent, sample_f_annulus, verify_annulus_inclusion,
    GraphContext, Holds,
};
use graph_fujita::metrics::laplacian_of_distance;
use graph_fujita::potential::PotentialSpec;
use graph_fujita::{NodeFunction, PseudoMetric, WeightedGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, ok: bool, detail: &str, start: Instant) {
    let status = if ok { "PASS" } else { "FAIL" };
    println!("criterion {n}: {status} ({:.1}s) {detail}", start.elapsed().as_secs_f64());
}

fn origin(g: &WeightedGraph, dim: usize) -> usize {
    g.index_of(&format!("({})", vec!["0"; dim].join(","))).unwrap()
}

#[test]
fn criterion_01_integration_by_parts() {
    let start = Instant::now();
    let graphs: Vec<(&str, WeightedGraph)> = vec![
        ("Z^2 ball R=20", gen_lattice(2, 20.0).unwrap()),
        ("tree N=2 depth 8", gen_tree(2, 8).unwrap()),
        ("C_10", gen_cycle_group(10).unwrap()),
        ("Z^1 x C_3", gen_product(&gen_lattice(1, 20.0).unwrap(), &gen_cycle_group(3).unwrap(), MeasureRule::Max).unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut const_ok = true;
    for (_, g) in &graphs {
        let n = g.node_count();
        for _ in 0..100 {
            let f = NodeFunction::from_fn(n, |_| rng.gen_range(-1.0..1.0)).unwrap();
            let h = NodeFunction::from_fn(n, |_| rng.gen_range(-1.0..1.0)).unwrap();
            worst = worst.max(g.ibp_residual(&f, &h).unwrap());
        }
        let c = NodeFunction::constant(n, 3.7);
        const_ok &= g.laplacian(&c).unwrap().values().iter().all(|&v| v == 0.0);
    }
    let ok = worst <= 1e-10 && const_ok && start.elapsed().as_secs_f64() < 10.0;
    report(1, ok, &format!("max IBP residual {worst:.2e}, Δ(const) = 0 exactly: {const_ok}"), start);
    assert!(ok);
}

#[test]
fn criterion_02_distance_laplacian_bound() {
    let start = Instant::now();
    let mut violations = 0;
    let mut checked = 0;
    for dim in 1..=3 {
        let g = gen_lattice(dim, 40.0).unwrap();
        let d = PseudoMetric::euclidean(&g).unwrap();
        let prof = laplacian_of_distance(&g, &d, origin(&g, dim)).unwrap();
        let rim = prof.rim_start();
        for e in prof.entries.iter().filter(|e| e.d >= 1.0 && e.d <= rim) {
            checked += 1;
            if e.laplacian_d > 1.0 / (2.0 * e.d) {
                violations += 1;
            }
        }
    }
    let ok = violations == 0 && start.elapsed().as_secs_f64() < 30.0;
    report(2, ok, &format!("{violations} violations of Δd <= 1/(2d) among {checked} interior nodes"), start);
    assert!(ok);
}

#[test]
fn criterion_03_volume_growth() {
    let start = Instant::now();
    let radii = [10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0];
    let mut slopes = Vec::new();
    let mut ok = true;
    for dim in 1..=3 {
        let g = gen_lattice(dim, 40.0).unwrap();
        let d = PseudoMetric::euclidean(&g).unwrap();
        let row = d.distances_from(origin(&g, dim)).unwrap();
        let samples: Vec<(f64, f64)> =
            radii.iter().map(|&r| (r, (0..g.node_count()).filter(|&x| row[x] <= r).map(|x| g.mu(x)).sum())).collect();
        let slope = fit_exponent(&samples).unwrap().slope;
        ok &= (slope - dim as f64).abs() <= 0.1;
        slopes.push(slope);
    }
    let mut levels_ok = true;
    for n in [2usize, 3] {
        let g = gen_tree(n, 10).unwrap();
        let hops = g.bfs_hops(g.index_of("r").unwrap());
        for k in 1..=10u32 {
            let size = hops.iter().filter(|h| **h == Some(k)).count();
            levels_ok &= size == n.pow(k) + n.pow(k - 1);
        }
    }
    ok &= levels_ok;
    report(3, ok, &format!("lattice slopes {slopes:.3?}, tree level sizes N^k + N^(k-1): {levels_ok}"), start);
    assert!(ok);
}

#[test]
fn criterion_04_volume_corollary_range() {
    let start = Instant::now();
    let radii = [10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0];
    let mut ok = true;
    let mut detail = Vec::new();
    for dim in 1..=2usize {
        let g = gen_lattice(dim, 40.0).unwrap();
        let d = PseudoMetric::euclidean(&g).unwrap();
        let ctx = GraphContext { graph: &g, metric: &d, x0: origin(&g, dim) };
        let cases: &[(f64, Holds)] = if dim == 2 {
            &[(1.5, Holds::Yes), (1.8, Holds::Yes), (2.0, Holds::Yes), (2.1, Holds::No), (3.0, Holds::No)]
        } else {
            &[(3.0, Holds::Yes)]
        };
        for &(sigma, want) in cases {
            let v = check_corollary3(ctx, sigma, 1.0, 1.0, &radii, 0.1).unwrap();
            ok &= v.holds == want;
            detail.push(format!("Z^{dim} σ={sigma}: {:?}", v.holds));
        }
    }
    ok &= start.elapsed().as_secs_f64() < 10.0;
    report(4, ok, &detail.join(", "), start);
    assert!(ok);
}

#[test]
fn criterion_05_tree_potential_sums() {
    let start = Instant::now();
    let n = 2usize;
    let g = gen_tree(n, 15).unwrap();
    let d = PseudoMetric::natural(Arc::new(g.clone()));
    let ctx = GraphContext { graph: &g, metric: &d, x0: g.index_of("r").unwrap() };
    let radii: Vec<f64> = (5..=14).map(f64::from).collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for (sigma, m) in [(2.0, 1.0), (3.0, 0.5)] {
        let lambda = f64::max(sigma - 1.0, (sigma - m) / m);
        let v: PotentialSpec = format!("tree-exp:lambda={lambda},N={n}").parse().unwrap();
        for q in [1.0 / (sigma - 1.0), m / (sigma - m)] {
            let samples: Vec<(f64, f64)> = radii.iter().map(|&r| (r, ball_potential_sum(ctx, &v, q, r).unwrap())).collect();
            let slope = fit_exponent(&samples).unwrap().slope;
            ok &= slope <= 0.15;
            detail.push(format!("(σ={sigma}, m={m}, q={q:.3}): slope {slope:.3}"));
        }
    }
    ok &= start.elapsed().as_secs_f64() < 30.0;
    report(5, ok, &detail.join(", "), start);
    assert!(ok);
}

#[test]
fn criterion_06_cutoff_estimates() {
    let start = Instant::now();
    let radii = [8.0, 16.0, 32.0, 64.0];
    let g = gen_lattice(2, 320.0).unwrap();
    let d = PseudoMetric::euclidean(&g).unwrap();
    let fam = CutoffFamily::new(&d, origin(&g, 2), 2.0, 1.0).unwrap();
    let est1 = verify_est1(&g, &fam, &radii, 1.0).unwrap();
    let est2 = verify_est2(&fam, &radii).unwrap();
    let mut inclusion_ok = true;
    for (k, theta1) in [2.0, 3.0].into_iter().enumerate() {
        let pts = sample_f_annulus(theta1, 1.0, 10.0, 10_000, 100 + k as u64);
        inclusion_ok &= verify_annulus_inclusion(theta1, 1.0, 10.0, &pts).unwrap();
    }
    let ok = est1.total_violations() == 0
        && est2.total_violations() == 0
        && est1.stability_ratio <= 2.0
        && est2.stability_ratio <= 2.0
        && inclusion_ok
        && start.elapsed().as_secs_f64() < 300.0;
    let c1: Vec<f64> = est1.entries.iter().map(|e| e.c_emp).collect();
    let c2: Vec<f64> = est2.entries.iter().map(|e| e.c_emp).collect();
    report(
        6,
        ok,
        &format!(
            "est1 C_emp {c1:.4?} ratio {:.3} violations {}; est2 C_emp {c2:.4?} ratio {:.3} violations {}; inclusion {inclusion_ok}",
            est1.stability_ratio,
            est1.total_violations(),
            est2.stability_ratio,
            est2.total_violations()
        ),
        start,
    );
    assert!(ok);
}

#[test]
fn criterion_07_dynamics_oracle() {
    let start = Instant::now();
    let c10 = Arc::new(gen_cycle_group(10).unwrap());
    let mut worst: f64 = 0.0;
    for sigma in [1.5, 2.0, 3.0] {
        for u0 in [0.5, 1.0, 2.0] {
            let exact = ode_blowup_time(u0, sigma).unwrap();
            let p =
                SimParams::new(sigma, Nonlinearity::Linear, Some(PotentialSpec::Constant(1.0)), InitialData::Constant(u0), 10.0 * exact);
            let out = integrate(&SimConfig::new(Arc::clone(&c10), 0, p)).unwrap();
            let err = match out.class.event_time() {
                Some(t) if out.class.name() == "blow_up" => (t - exact).abs() / exact,
                _ => f64::INFINITY,
            };
            worst = worst.max(err);
        }
    }

    let zero = SimParams::new(2.0, Nonlinearity::Linear, Some(PotentialSpec::Constant(1.0)), InitialData::Constant(0.0), 10.0);
    let out = integrate(&SimConfig::new(Arc::clone(&c10), 0, zero)).unwrap();
    let zero_ok = out.final_state.iter().all(|&u| u == 0.0);

    let z2 = Arc::new(gen_lattice(2, 10.0).unwrap());
    let mut heat = SimParams::new(2.0, Nonlinearity::Linear, None, InitialData::Bump { amplitude: 1.0, radius: 3.0 }, 10.0);
    heat.rim = RimPolicy::Reflecting;
    let out = integrate(&SimConfig::new(Arc::clone(&z2), origin(&z2, 2), heat)).unwrap();
    let m0 = out.series.first().unwrap().mass;
    let drift = out.series.iter().map(|s| (s.mass - m0).abs() / m0).fold(0.0, f64::max);

    let ok = worst <= 0.02 && zero_ok && drift <= 1e-8 && start.elapsed().as_secs_f64() < 60.0;
    report(7, ok, &format!("worst blow-up time error {:.3}%, zero stays zero: {zero_ok}, mass drift {drift:.2e}", 100.0 * worst), start);
    assert!(ok);
}

#[test]
fn criterion_08_finite_graph() {
    let start = Instant::now();
    let c10 = Arc::new(gen_cycle_group(10).unwrap());
    let mut classes = Vec::new();
    for seed in [1, 2, 3] {
        let mut p =
            SimParams::new(2.0, Nonlinearity::Linear, Some(PotentialSpec::Constant(1.0)), InitialData::Random { lo: 0.05, hi: 0.5 }, 1e3);
        p.seed = seed;
        p.rim = RimPolicy::Reflecting;
        classes.push(integrate(&SimConfig::new(Arc::clone(&c10), 0, p)).unwrap().class.name());
    }
    let d = PseudoMetric::natural(Arc::clone(&c10));
    let ctx = GraphContext { graph: &c10, metric: &d, x0: 0 };
    let times = [10.0, 20.0, 40.0, 80.0, 160.0];
    let steady = check_finite_graph_condition(ctx, &PotentialSpec::Constant(1.0), 2.0, &times, 0.1).unwrap();
    let decaying: PotentialSpec = "tpower:-2".parse().unwrap();
    let fading = check_finite_graph_condition(ctx, &decaying, 1.5, &times, 0.1).unwrap();
    let ok = classes.iter().all(|c| *c == "blow_up")
        && steady.holds == Holds::Yes
        && fading.holds == Holds::No
        && start.elapsed().as_secs_f64() < 60.0;
    report(
        8,
        ok,
        &format!(
            "classes {classes:?}; v≡1 slope {:.3} -> {:?}; v=(1+t)^-2 slope {:.3} vs {:.3} -> {:?}",
            steady.slope.unwrap(),
            steady.holds,
            fading.slope.unwrap(),
            fading.target.unwrap(),
            fading.holds
        ),
        start,
    );
    assert!(ok);
}

/// Bump amplitude used by the frontier sweep; see the README for how it was chosen.
const SWEEP_AMPLITUDE: f64 = 0.2;
const SWEEP_T_MAX: f64 = 400.0;

#[test]
fn criterion_09_frontier_sweep() {
    let start = Instant::now();
    let mut base = SimParams::new(2.0, Nonlinearity::Linear, Some(PotentialSpec::Constant(1.0)), InitialData::Constant(0.0), SWEEP_T_MAX);
    base.rim = RimPolicy::DirichletZero;
    let grid = SweepGrid {
        graph: GeneratorSpec::Lattice { dim: 1, radius: 200.0 },
        sigmas: vec![1.5, 2.0, 2.5, 4.0],
        ms: vec![1.0],
        u0_scales: vec![SWEEP_AMPLITUDE],
        bump_radius: 5.0,
        base,
    };
    let records = sweep(&grid, 4).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for r in &records {
        let want = if r.sigma <= 3.0 { "blow_up" } else { "decay" };
        ok &= r.class == want && !r.rim_flag;
        detail.push(format!("σ={}: {} t={:?} rim={}", r.sigma, r.class, r.t_event, r.rim_flag));
    }
    ok &= start.elapsed().as_secs_f64() < 600.0;
    report(9, ok, &format!("[heuristic] {}", detail.join(", ")), start);
    assert!(ok);
}

#[test]
fn criterion_10_weak_residual_convergence() {
    let start = Instant::now();
    let c10 = Arc::new(gen_cycle_group(10).unwrap());
    let v = PotentialSpec::Constant(1.0);
    let p = SimParams::new(2.0, Nonlinearity::Linear, Some(v), InitialData::Constant(0.1), 20.0);
    let sim = Simulator::new(&SimConfig::new(Arc::clone(&c10), 0, p)).unwrap();
    let d = PseudoMetric::natural(Arc::clone(&c10));
    let fam = CutoffFamily::new(&d, 0, 2.0, 1.0).unwrap();
    let r = 2.0;
    let form = WeakForm { graph: &c10, family: &fam, r, s: 3.0, sigma: 2.0, nonlinearity: &Nonlinearity::Linear, potential: Some(&v) };
    let t_end = fam.support_time(r);
    let residuals: Vec<f64> =
        [0.02, 0.01, 0.005].iter().map(|&dt| weak_residual(&sim.run_fixed_dt(dt, t_end).unwrap(), &form).unwrap()).collect();
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[0].abs() / w[1].abs()).collect();
    let ok = ratios.iter().all(|q| (1.5..=2.5).contains(q)) && start.elapsed().as_secs_f64() < 60.0;
    report(
        10,
        ok,
        &format!("residuals {:?}, refinement ratios {ratios:.3?}", residuals.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>()),
        start,
    );
    assert!(ok);
}
