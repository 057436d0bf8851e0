//! Empirical checkers for the hypotheses of the nonexistence theorems.
//!
//! The theorems quantify over all `R ≥ R0` with an existential constant. At
//! desk scale each "≤ C R^p" condition is decided by a least-squares fit of
//! `log value` against `log R` over a finite radius list, and the fitted
//! slope is compared to the target exponent with an additive slack. Every
//! verdict is empirical evidence, not a proof.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::WeightedGraph;
use crate::metrics::{fit_distance_bound, laplacian_of_distance, MetricError, PseudoMetric};
use crate::potential::PotentialSpec;

pub const DEFAULT_SLACK: f64 = 0.1;

/// `(θ1, θ2)` grid searched by [`search_theorem_grid`].
pub const THETA_GRID: [(f64, f64); 16] = [
    (2.0, 1.0),
    (2.0, 1.5),
    (2.0, 2.0),
    (2.0, 3.0),
    (2.5, 1.0),
    (2.5, 1.5),
    (2.5, 2.0),
    (2.5, 3.0),
    (3.0, 1.0),
    (3.0, 1.5),
    (3.0, 2.0),
    (3.0, 3.0),
    (4.0, 1.0),
    (4.0, 1.5),
    (4.0, 2.0),
    (4.0, 3.0),
];

/// Subintervals per region time window before adaptive halving.
pub const INITIAL_TIME_STEPS: f64 = 512.0;
const QUADRATURE_RTOL: f64 = 0.01;
const MAX_HALVINGS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HypothesisError {
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("region reaches radius {needed} but the graph is only reliable up to {available}")]
    TruncationTooSmall { needed: f64, available: f64 },
    #[error("sample {0} has a non-positive value")]
    NonPositiveValue(usize),
    #[error("need at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample radii must be strictly increasing")]
    NonIncreasing,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T, E = HypothesisError> = std::result::Result<T, E>;

fn out_of_range(msg: impl Into<String>) -> HypothesisError {
    HypothesisError::ParameterOutOfRange(msg.into())
}

/// Space-time shell `{(x,t) : lower ≤ d(x0,x)^{θ1} + t^{θ2} ≤ upper}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeRegion {
    pub x0: usize,
    pub theta1: f64,
    pub theta2: f64,
    pub lower: f64,
    pub upper: f64,
}

impl SpaceTimeRegion {
    fn checked(x0: usize, theta1: f64, theta2: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(theta1 >= 2.0) || !(theta2 >= 1.0) {
            return Err(out_of_range(format!("need θ1 >= 2 and θ2 >= 1, got ({theta1}, {theta2})")));
        }
        Ok(Self { x0, theta1, theta2, lower, upper })
    }

    /// `E_R`: `R^{θ1} ≤ s ≤ 2 R^{θ1}`.
    pub fn e_annulus(x0: usize, theta1: f64, theta2: f64, r: f64) -> Result<Self> {
        let base = r.powf(theta1);
        Self::checked(x0, theta1, theta2, base, 2.0 * base)
    }

    /// `F_R`: `(R/2)^{θ1} ≤ s ≤ (4R)^{θ1}`.
    pub fn f_annulus(x0: usize, theta1: f64, theta2: f64, r: f64) -> Result<Self> {
        Self::checked(x0, theta1, theta2, (r / 2.0).powf(theta1), (4.0 * r).powf(theta1))
    }

    /// `D_R`: `s ≤ R^{θ1}`.
    pub fn d_ball(x0: usize, theta1: f64, theta2: f64, r: f64) -> Result<Self> {
        Self::checked(x0, theta1, theta2, 0.0, r.powf(theta1))
    }

    /// `d^{θ1} + t^{θ2}`.
    pub fn shell_coordinate(&self, d: f64, t: f64) -> f64 {
        d.powf(self.theta1) + t.powf(self.theta2)
    }

    pub fn contains_dt(&self, d: f64, t: f64) -> bool {
        let s = self.shell_coordinate(d, t);
        self.lower <= s && s <= self.upper
    }

    pub fn contains(&self, metric: &PseudoMetric, x: usize, t: f64) -> Result<bool> {
        Ok(self.contains_dt(metric.distance(self.x0, x)?, t))
    }

    /// Largest `d(x0, x)` the region reaches.
    pub fn outer_radius(&self) -> f64 {
        self.upper.powf(1.0 / self.theta1)
    }

    /// Largest `t` the region reaches.
    pub fn time_horizon(&self) -> f64 {
        self.upper.powf(1.0 / self.theta2)
    }

    /// The interval of times `t ≥ 0` with `(x, t)` in the region for a node at
    /// distance `d`, if nonempty.
    pub fn time_slice(&self, d: f64) -> Option<(f64, f64)> {
        let dp = d.powf(self.theta1);
        if dp > self.upper {
            return None;
        }
        let a = (self.lower - dp).max(0.0).powf(1.0 / self.theta2);
        let b = (self.upper - dp).powf(1.0 / self.theta2);
        Some((a, b))
    }
}

/// Least-squares power law through `(log R, log value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual in log space.
    pub max_residual: f64,
}

impl PowerFit {
    /// `exp(intercept)`, the fitted constant in `value ≈ C R^slope`.
    pub fn constant(&self) -> f64 {
        self.intercept.exp()
    }
}

pub fn fit_exponent(samples: &[(f64, f64)]) -> Result<PowerFit> {
    if samples.len() < 4 {
        return Err(HypothesisError::TooFewSamples(samples.len()));
    }
    for (i, &(r, v)) in samples.iter().enumerate() {
        if !(v > 0.0) || !(r > 0.0) {
            return Err(HypothesisError::NonPositiveValue(i));
        }
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(HypothesisError::NonIncreasing);
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(r, v)| (r.ln(), v.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = pts.iter().map(|p| (p.1 - intercept - slope * p.0).abs()).fold(0.0, f64::max);
    Ok(PowerFit { slope, intercept, max_residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Holds {
    Yes,
    No,
    Inconclusive,
}

/// One fitted "≤ C R^target" comparison inside a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitComponent {
    pub label: String,
    pub slope: f64,
    pub target: f64,
    #[serde(rename = "C_fit")]
    pub c_fit: f64,
    pub max_residual: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub theta1: f64,
    pub theta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub condition: String,
    pub holds: Holds,
    /// Slope and target of the tightest component.
    pub slope: Option<f64>,
    pub target: Option<f64>,
    pub slack: f64,
    #[serde(rename = "C_fit")]
    pub c_fit: Option<f64>,
    #[serde(rename = "R_range")]
    pub r_range: Option<(f64, f64)>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<FitComponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl Verdict {
    fn new(condition: &str, slack: f64) -> Self {
        Self {
            condition: condition.to_string(),
            holds: Holds::Inconclusive,
            slope: None,
            target: None,
            slack,
            c_fit: None,
            r_range: None,
            notes: Vec::new(),
            components: Vec::new(),
            witness: None,
        }
    }

    fn inconclusive(condition: &str, slack: f64, note: String) -> Self {
        let mut v = Self::new(condition, slack);
        v.notes.push(note);
        v
    }

    /// Sets `holds` from the components and exposes the one with the smallest margin.
    fn settle(&mut self) {
        if let Some(tight) = self.components.iter().min_by(|a, b| (a.target - a.slope).total_cmp(&(b.target - b.slope))) {
            self.slope = Some(tight.slope);
            self.target = Some(tight.target);
            self.c_fit = Some(tight.c_fit);
        }
        self.holds = if self.components.iter().all(|c| c.holds) { Holds::Yes } else { Holds::No };
    }

    pub fn is_yes(&self) -> bool {
        self.holds == Holds::Yes
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }
}

fn component(label: &str, fit: &PowerFit, target: f64, slack: f64) -> FitComponent {
    FitComponent {
        label: label.to_string(),
        slope: fit.slope,
        target,
        c_fit: fit.constant(),
        max_residual: fit.max_residual,
        holds: fit.slope <= target + slack,
    }
}

fn check_sigma_m(sigma: f64, m: f64) -> Result<()> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(out_of_range(format!("m = {m} must be positive")));
    }
    if !(sigma > 1.0_f64.max(m)) || !sigma.is_finite() {
        return Err(out_of_range(format!("need σ > max(1, m), got σ = {sigma}, m = {m}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(out_of_range(format!("α = {alpha} outside [0, 1]")))
    }
}

fn check_radii(r_list: &[f64]) -> Result<()> {
    if r_list.len() < 4 {
        return Err(HypothesisError::TooFewSamples(r_list.len()));
    }
    if r_list.windows(2).any(|w| !(w[1] > w[0])) || !(r_list[0] > 0.0) {
        return Err(HypothesisError::NonIncreasing);
    }
    Ok(())
}

/// Distances from `x0` and the radius beyond which nodes sit within two
/// jumps of the truncation rim.
fn reliable_radius(metric: &PseudoMetric, x0: usize) -> Result<(std::sync::Arc<Vec<f64>>, f64)> {
    let row = metric.distances_from(x0)?;
    let d_max = row.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
    Ok((row, d_max - 2.0 * metric.jump()))
}

/// `∫ Σ_x v(x,t)^{-q} 1_region(x,t) μ(x) dt`.
///
/// For each node the region's time slice is computed exactly and `v^{-q}` is
/// integrated over it with the composite midpoint rule, using
/// `ceil(len / h_t)` subintervals. Time-independent potentials are integrated
/// exactly.
pub fn hp_integral(g: &WeightedGraph, metric: &PseudoMetric, v: &PotentialSpec, q: f64, region: &SpaceTimeRegion, h_t: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(out_of_range(format!("q = {q} must be positive")));
    }
    if !(h_t > 0.0) {
        return Err(out_of_range(format!("h_t = {h_t} must be positive")));
    }
    let (row, reliable) = reliable_radius(metric, region.x0)?;
    if region.outer_radius() > reliable {
        return Err(HypothesisError::TruncationTooSmall { needed: region.outer_radius(), available: reliable });
    }
    let time_free = v.is_time_independent();
    let terms: Vec<f64> = (0..g.node_count())
        .into_par_iter()
        .map(|x| {
            let d = row[x];
            let Some((a, b)) = region.time_slice(d) else { return 0.0 };
            if b <= a {
                return 0.0;
            }
            let integral = if time_free {
                v.inverse_power(d, 0.0, q) * (b - a)
            } else {
                let steps = ((b - a) / h_t).ceil().max(1.0) as usize;
                let h = (b - a) / steps as f64;
                (0..steps).map(|k| v.inverse_power(d, a + (k as f64 + 0.5) * h, q)).sum::<f64>() * h
            };
            integral * g.mu(x)
        })
        .collect();
    Ok(terms.iter().sum())
}

/// [`hp_integral`] starting from `h_t = horizon / 512`, halving until the
/// relative change drops below 1%. Returns the value and the final step.
pub fn hp_integral_adaptive(
    g: &WeightedGraph,
    metric: &PseudoMetric,
    v: &PotentialSpec,
    q: f64,
    region: &SpaceTimeRegion,
) -> Result<(f64, f64)> {
    let mut h = region.time_horizon() / INITIAL_TIME_STEPS;
    let mut prev = hp_integral(g, metric, v, q, region, h)?;
    if v.is_time_independent() {
        return Ok((prev, h));
    }
    for _ in 0..MAX_HALVINGS {
        h /= 2.0;
        let next = hp_integral(g, metric, v, q, region, h)?;
        let change = (next - prev).abs() / next.abs().max(f64::MIN_POSITIVE);
        prev = next;
        if change < QUADRATURE_RTOL {
            break;
        }
    }
    Ok((prev, h))
}

/// Inputs shared by the graph-based checkers.
#[derive(Debug, Clone, Copy)]
pub struct GraphContext<'a> {
    pub graph: &'a WeightedGraph,
    pub metric: &'a PseudoMetric,
    pub x0: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremParams {
    pub sigma: f64,
    pub m: f64,
    pub alpha: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub radii: Vec<f64>,
    pub slack: f64,
}

/// Checks both integral hypotheses over the annuli `E_R` for one `(θ1, θ2)`:
/// the `v^{-1/(σ-1)}` integral against `R^{θ1σ/(θ2(σ-1))}` and the
/// `v^{-m/(σ-m)}` integral against `R^{(1+α)σ/(σ-m)}`.
pub fn check_theorem_hypotheses(ctx: GraphContext<'_>, v: &PotentialSpec, p: &TheoremParams) -> Result<Verdict> {
    check_sigma_m(p.sigma, p.m)?;
    check_alpha(p.alpha)?;
    check_radii(&p.radii)?;
    if !(p.theta1 >= 2.0) || !(p.theta2 >= 1.0) {
        return Err(out_of_range(format!("need θ1 >= 2 and θ2 >= 1, got ({}, {})", p.theta1, p.theta2)));
    }
    let cond = "theorem";
    let q1 = 1.0 / (p.sigma - 1.0);
    let q2 = p.m / (p.sigma - p.m);
    let target1 = p.theta1 * p.sigma / (p.theta2 * (p.sigma - 1.0));
    let target2 = (1.0 + p.alpha) * p.sigma / (p.sigma - p.m);

    let rows: Vec<Result<(f64, f64, f64)>> = p
        .radii
        .par_iter()
        .map(|&r| {
            let region = SpaceTimeRegion::e_annulus(ctx.x0, p.theta1, p.theta2, r)?;
            let (i1, _) = hp_integral_adaptive(ctx.graph, ctx.metric, v, q1, &region)?;
            let (i2, _) = hp_integral_adaptive(ctx.graph, ctx.metric, v, q2, &region)?;
            Ok((r, i1, i2))
        })
        .collect();
    let mut samples = Vec::with_capacity(rows.len());
    for row in rows {
        match row {
            Ok(s) => samples.push(s),
            Err(HypothesisError::TruncationTooSmall { needed, available }) => {
                let mut v = Verdict::inconclusive(
                    cond,
                    p.slack,
                    format!("annulus reaches d = {needed:.3} but the truncation is reliable only to {available:.3}"),
                );
                v.r_range = Some((p.radii[0], *p.radii.last().unwrap()));
                return Ok(v);
            }
            Err(e) => return Err(e),
        }
    }
    let fit1 = fit_exponent(&samples.iter().map(|s| (s.0, s.1)).collect::<Vec<_>>())?;
    let fit2 = fit_exponent(&samples.iter().map(|s| (s.0, s.2)).collect::<Vec<_>>())?;
    let mut verdict = Verdict::new(cond, p.slack);
    verdict.r_range = Some((p.radii[0], *p.radii.last().unwrap()));
    verdict.components.push(component("hp1", &fit1, target1, p.slack));
    verdict.components.push(component("hp2", &fit2, target2, p.slack));
    verdict.settle();
    verdict.witness = Some(Witness { theta1: p.theta1, theta2: p.theta2 });
    verdict.notes.push(format!("theta1={} theta2={}", p.theta1, p.theta2));
    Ok(verdict)
}

/// Runs [`check_theorem_hypotheses`] over a `(θ1, θ2)` grid. The verdict is
/// yes with the first passing grid point as witness, otherwise inconclusive
/// if any point was inconclusive, otherwise no.
pub fn search_theorem_grid(ctx: GraphContext<'_>, v: &PotentialSpec, base: &TheoremParams, grid: &[(f64, f64)]) -> Result<Verdict> {
    let results: Vec<Result<Verdict>> = grid
        .par_iter()
        .map(|&(theta1, theta2)| {
            let p = TheoremParams { theta1, theta2, ..base.clone() };
            check_theorem_hypotheses(ctx, v, &p)
        })
        .collect();
    let mut verdicts = Vec::with_capacity(results.len());
    for r in results {
        verdicts.push(r?);
    }
    let summary: Vec<String> = verdicts.iter().zip(grid).map(|(v, (a, b))| format!("({a},{b}): {:?}", v.holds).to_lowercase()).collect();
    let mut out = if let Some(pos) = verdicts.iter().position(Verdict::is_yes) {
        verdicts.swap_remove(pos)
    } else if let Some(pos) = verdicts.iter().position(|v| v.holds == Holds::Inconclusive) {
        verdicts.swap_remove(pos)
    } else {
        let mut v = verdicts.swap_remove(0);
        v.witness = None;
        v
    };
    out.condition = "theorem-grid".to_string();
    if out.holds != Holds::Yes {
        out.witness = None;
    }
    out.notes.push(format!("grid: {}", summary.join(", ")));
    Ok(out)
}

/// Exponent conditions (i)-(iii) of the separable-potential corollary, with a
/// witness `(θ1, θ2)` for the two inequalities
/// `r δ1 + δ2 ≤ r σ/(σ-1)` and `r δ3 + δ4 ≤ (1+α)σ/(σ-m)`, `r = θ1/θ2`.
pub fn check_corollary1(deltas: [f64; 4], sigma: f64, m: f64, alpha: f64) -> Result<Verdict> {
    check_sigma_m(sigma, m)?;
    check_alpha(alpha)?;
    if deltas.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
        return Err(out_of_range(format!("deltas must be finite and >= 0, got {deltas:?}")));
    }
    let [d1, d2, d3, d4] = deltas;
    let a = sigma / (sigma - 1.0);
    let b = (1.0 + alpha) * sigma / (sigma - m);
    let mut v = Verdict::new("cor1", 0.0);
    v.target = Some(a);

    let cond_i = d1 <= a && d4 <= b;
    let cond_ii = (d1 != a || d2 == 0.0) && (d4 != b || d3 == 0.0);
    let cond_iii = if d2 != 0.0 && d3 != 0.0 { d2 * d3 <= (a - d1) * (b - d4) } else { true };
    if (d2 == 0.0) != (d3 == 0.0) {
        v.notes.push("exactly one of δ2, δ3 is zero: condition (iii) is vacuous and only (i)-(ii) apply".into());
    }
    if !cond_i {
        v.notes.push(format!("(i) fails: need δ1 <= {a} and δ4 <= {b}"));
    }
    if !cond_ii {
        v.notes.push("(ii) fails".into());
    }
    if !cond_iii {
        v.notes.push(format!("(iii) fails: δ2δ3 = {} > {}", d2 * d3, (a - d1) * (b - d4)));
    }
    let literal = cond_i && cond_ii && cond_iii;

    // admissible ratios r = θ1/θ2 > 0 form an interval [lo, hi]
    let lo = if d1 < a {
        d2 / (a - d1)
    } else if d2 == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let hi = if d3 > 0.0 {
        (b - d4) / d3
    } else if d4 <= b {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    let witness_ratio = if lo <= hi && hi > 0.0 && lo.is_finite() {
        let r = 2.0_f64.clamp(lo, hi);
        if r > 0.0 {
            Some(r)
        } else {
            Some(hi.min(1.0))
        }
    } else {
        None
    };
    v.holds = if literal && witness_ratio.is_some() { Holds::Yes } else { Holds::No };
    if literal && witness_ratio.is_none() {
        v.notes.push("conditions hold literally but no θ1/θ2 > 0 satisfies both proof inequalities".into());
    }
    if v.holds == Holds::Yes {
        let r = witness_ratio.unwrap();
        v.witness = Some(if r >= 2.0 { Witness { theta1: r, theta2: 1.0 } } else { Witness { theta1: 2.0, theta2: 2.0 / r } });
    }
    Ok(v)
}

/// `0 ≤ δ(σ-1) + δ' ≤ (1+α)σ/(σ-m)`.
pub fn check_corollary2(delta: f64, delta_prime: f64, sigma: f64, m: f64, alpha: f64) -> Result<Verdict> {
    check_sigma_m(sigma, m)?;
    check_alpha(alpha)?;
    if !(delta >= 0.0) || !(delta_prime >= 0.0) {
        return Err(out_of_range(format!("δ, δ' must be >= 0, got ({delta}, {delta_prime})")));
    }
    let lhs = delta * (sigma - 1.0) + delta_prime;
    let bound = (1.0 + alpha) * sigma / (sigma - m);
    let mut v = Verdict::new("cor2", 0.0);
    v.slope = Some(lhs);
    v.target = Some(bound);
    v.holds = if lhs <= bound { Holds::Yes } else { Holds::No };
    Ok(v)
}

/// `Σ_{x ∈ B_R(x0)} v(x)^{-q} μ(x)` for a time-independent potential.
pub fn ball_potential_sum(ctx: GraphContext<'_>, v: &PotentialSpec, q: f64, r: f64) -> Result<f64> {
    let (row, reliable) = reliable_radius(ctx.metric, ctx.x0)?;
    if r > reliable + 2.0 * ctx.metric.jump() {
        return Err(HypothesisError::TruncationTooSmall { needed: r, available: reliable + 2.0 * ctx.metric.jump() });
    }
    Ok((0..ctx.graph.node_count()).filter(|&x| row[x] <= r).map(|x| v.inverse_power(row[x], 0.0, q) * ctx.graph.mu(x)).sum())
}

/// Fits the growth exponents `δ`, `δ'` of the two ball sums of the
/// time-independent corollary and checks its exponent condition with slack.
pub fn check_corollary2_on_graph(
    ctx: GraphContext<'_>,
    v: &PotentialSpec,
    sigma: f64,
    m: f64,
    alpha: f64,
    radii: &[f64],
    slack: f64,
) -> Result<Verdict> {
    check_sigma_m(sigma, m)?;
    check_alpha(alpha)?;
    check_radii(radii)?;
    if !v.is_time_independent() {
        return Err(out_of_range("the ball-sum corollary needs a time-independent potential"));
    }
    let q1 = 1.0 / (sigma - 1.0);
    let q2 = m / (sigma - m);
    let mut s1 = Vec::new();
    let mut s2 = Vec::new();
    for &r in radii {
        s1.push((r, ball_potential_sum(ctx, v, q1, r)?));
        s2.push((r, ball_potential_sum(ctx, v, q2, r)?));
    }
    let f1 = fit_exponent(&s1)?;
    let f2 = fit_exponent(&s2)?;
    let delta = f1.slope.max(0.0);
    let delta_prime = f2.slope.max(0.0);
    let bound = (1.0 + alpha) * sigma / (sigma - m);
    let mut out = check_corollary2(delta, delta_prime, sigma, m, alpha)?;
    out.condition = "cor2-graph".to_string();
    out.slack = slack;
    out.holds = if delta * (sigma - 1.0) + delta_prime <= bound + slack { Holds::Yes } else { Holds::No };
    out.c_fit = Some(f1.constant().max(f2.constant()));
    out.r_range = Some((radii[0], *radii.last().unwrap()));
    out.components.push(FitComponent {
        label: "delta".into(),
        slope: f1.slope,
        target: bound / (sigma - 1.0),
        c_fit: f1.constant(),
        max_residual: f1.max_residual,
        holds: true,
    });
    out.components.push(FitComponent {
        label: "delta_prime".into(),
        slope: f2.slope,
        target: bound,
        c_fit: f2.constant(),
        max_residual: f2.max_residual,
        holds: true,
    });
    Ok(out)
}

/// Volume growth `Vol(B_R(x0)) ≤ C R^{(1+α)/(σ-m)}` by log-log fit.
pub fn check_corollary3(ctx: GraphContext<'_>, sigma: f64, m: f64, alpha: f64, radii: &[f64], slack: f64) -> Result<Verdict> {
    check_sigma_m(sigma, m)?;
    check_alpha(alpha)?;
    check_radii(radii)?;
    let row = ctx.metric.distances_from(ctx.x0)?;
    let d_max = row.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
    let r_last = *radii.last().unwrap();
    if r_last > d_max {
        return Err(HypothesisError::TruncationTooSmall { needed: r_last, available: d_max });
    }
    let samples: Vec<(f64, f64)> =
        radii.iter().map(|&r| (r, (0..ctx.graph.node_count()).filter(|&x| row[x] <= r).map(|x| ctx.graph.mu(x)).sum())).collect();
    let fit = fit_exponent(&samples)?;
    let target = (1.0 + alpha) / (sigma - m);
    let mut v = Verdict::new("cor3", slack);
    v.r_range = Some((radii[0], r_last));
    v.components.push(component("volume", &fit, target, slack));
    v.settle();
    Ok(v)
}

/// Index `k ∈ 0..=l` of an annulus `E_{2^{k/θ1 - 1} R}` containing `(d, t)`.
pub fn annulus_cover_index(theta1: f64, theta2: f64, r: f64, d: f64, t: f64) -> Option<usize> {
    let l = inclusion_depth(theta1);
    let s = d.powf(theta1) + t.powf(theta2);
    let rt = r.powf(theta1);
    let tol = 1e-12 * s.max(rt);
    (0..=l).find(|&k| {
        // E_ρ with ρ^{θ1} = 2^{k - θ1} R^{θ1}
        let lower = 2f64.powf(k as f64 - theta1) * rt;
        lower - tol <= s && s <= 2.0 * lower + tol
    })
}

/// `l = ⌈3θ1⌉ − 1`, the smallest integer with `l ≥ 3θ1 − 1`.
pub fn inclusion_depth(theta1: f64) -> usize {
    (3.0 * theta1).ceil() as usize - 1
}

/// True iff every sample point lying in `F_R` is covered by one of the
/// annuli `E_{2^{k/θ1 - 1} R}`, `0 ≤ k ≤ l`. Points outside `F_R` are ignored.
pub fn verify_annulus_inclusion(theta1: f64, theta2: f64, r: f64, samples: &[(f64, f64)]) -> Result<bool> {
    let f = SpaceTimeRegion::f_annulus(0, theta1, theta2, r)?;
    Ok(samples.iter().filter(|&&(d, t)| f.contains_dt(d, t)).all(|&(d, t)| annulus_cover_index(theta1, theta2, r, d, t).is_some()))
}

/// Random points of `F_R`: `s` uniform in the shell range, split between the
/// spatial and temporal terms by a uniform fraction.
pub fn sample_f_annulus(theta1: f64, theta2: f64, r: f64, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = ((r / 2.0).powf(theta1), (4.0 * r).powf(theta1));
    (0..n)
        .map(|_| {
            let s = rng.gen_range(lo..=hi);
            let u: f64 = rng.gen();
            ((u * s).powf(1.0 / theta1), ((1.0 - u) * s).powf(1.0 / theta2))
        })
        .collect()
}

/// `∫_T^{2T} Σ_x v(x,t)^{-1/(σ-1)} μ(x) dt` by composite midpoint with
/// `steps` subintervals.
pub fn finite_graph_integral(g: &WeightedGraph, v: &PotentialSpec, distances: &[f64], sigma: f64, t: f64, steps: usize) -> f64 {
    let q = 1.0 / (sigma - 1.0);
    let h = t / steps as f64;
    let spatial = |time: f64| -> f64 { (0..g.node_count()).map(|x| v.inverse_power(distances[x], time, q) * g.mu(x)).sum() };
    if v.is_time_independent() {
        return spatial(0.0) * t;
    }
    (0..steps).map(|k| spatial(t + (k as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Finite-graph condition `∫_T^{2T} Σ v^{-1/(σ-1)} μ dt ≤ C T^{σ/(σ-1)}`.
pub fn check_finite_graph_condition(ctx: GraphContext<'_>, v: &PotentialSpec, sigma: f64, times: &[f64], slack: f64) -> Result<Verdict> {
    if !(sigma > 1.0) || !sigma.is_finite() {
        return Err(out_of_range(format!("σ = {sigma} must exceed 1")));
    }
    check_radii(times)?;
    let row = ctx.metric.distances_from(ctx.x0)?;
    let samples: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let mut steps = INITIAL_TIME_STEPS as usize;
            let mut prev = finite_graph_integral(ctx.graph, v, &row, sigma, t, steps);
            for _ in 0..MAX_HALVINGS {
                if v.is_time_independent() {
                    break;
                }
                steps *= 2;
                let next = finite_graph_integral(ctx.graph, v, &row, sigma, t, steps);
                let change = (next - prev).abs() / next.abs();
                prev = next;
                if change < QUADRATURE_RTOL {
                    break;
                }
            }
            (t, prev)
        })
        .collect();
    let fit = fit_exponent(&samples)?;
    let mut out = Verdict::new("finite", slack);
    out.r_range = Some((times[0], *times.last().unwrap()));
    out.components.push(component("time-window", &fit, sigma / (sigma - 1.0), slack));
    out.settle();
    Ok(out)
}

/// Assumption (A) on a finite graph: connectivity, the row-sum constant,
/// finite jump size and the fitted distance-Laplacian bound for `α`.
pub fn check_assumption_a(ctx: GraphContext<'_>, r0: f64, alpha: f64) -> Result<Verdict> {
    check_alpha(alpha)?;
    let mut v = Verdict::new("assumption-a", 0.0);
    if !ctx.graph.is_connected() {
        v.holds = Holds::No;
        v.notes.push("(i) fails: graph is disconnected".into());
        return Ok(v);
    }
    let c_rows = ctx.graph.row_sum_ratio();
    v.notes.push(format!("(ii) row-sum constant C = {c_rows}"));
    v.notes.push(format!("(iii) jump size j = {}", ctx.metric.jump()));
    v.notes.push("(iv) balls are finite on a finite graph".into());
    let profile = laplacian_of_distance(ctx.graph, ctx.metric, ctx.x0)?;
    let fit = fit_distance_bound(&profile, r0, alpha)?;
    v.c_fit = Some(fit.c_fit);
    v.r_range = Some((r0, fit.rim_start));
    v.notes.push(format!("(v) sup Δd·d^α = {} over {} exterior nodes", fit.c_fit, fit.exterior_nodes));
    v.holds = if fit.ok && c_rows.is_finite() && ctx.metric.jump().is_finite() {
        Holds::Yes
    } else {
        v.notes.push("(v) fit only reaches rim nodes".into());
        Holds::Inconclusive
    };
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_lattice;
    use std::sync::Arc;

    #[test]
    fn region_membership_examples() {
        let e = SpaceTimeRegion::e_annulus(0, 2.0, 1.0, 10.0).unwrap();
        assert!(e.contains_dt(6.0, 70.0));
        assert!(e.contains_dt(10.0, 0.0));
        assert!(!e.contains_dt(0.0, 200.0 + 1e-9));
        assert!(e.contains_dt(0.0, 200.0));
        assert!(SpaceTimeRegion::e_annulus(0, 1.5, 1.0, 10.0).is_err());
        let f = SpaceTimeRegion::f_annulus(0, 2.0, 1.0, 10.0).unwrap();
        assert_eq!((f.lower, f.upper), (25.0, 1600.0));
    }

    #[test]
    fn fit_exponent_exact_laws() {
        let sq: Vec<(f64, f64)> = [2.0, 3.0, 5.0, 8.0, 13.0].iter().map(|&r| (r, r * r)).collect();
        let f = fit_exponent(&sq).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-9);
        assert!(f.intercept.abs() < 1e-9);
        let flat: Vec<(f64, f64)> = [1.0, 2.0, 3.0, 4.0].iter().map(|&r| (r, 7.0)).collect();
        assert!(fit_exponent(&flat).unwrap().slope.abs() < 1e-12);
        assert_eq!(fit_exponent(&sq[..3]), Err(HypothesisError::TooFewSamples(3)));
        let mut bad = sq.clone();
        bad[2].1 = 0.0;
        assert_eq!(fit_exponent(&bad), Err(HypothesisError::NonPositiveValue(2)));
        let mut unsorted = sq.clone();
        unsorted.swap(0, 1);
        assert_eq!(fit_exponent(&unsorted), Err(HypothesisError::NonIncreasing));
    }

    #[test]
    fn hp_integral_needs_room() {
        let g = gen_lattice(1, 10.0).unwrap();
        let d = PseudoMetric::euclidean(&g).unwrap();
        let o = g.index_of("(0)").unwrap();
        let e = SpaceTimeRegion::e_annulus(o, 2.0, 1.0, 10.0).unwrap();
        let err = hp_integral(&g, &d, &PotentialSpec::Constant(1.0), 1.0, &e, 0.1).unwrap_err();
        assert!(matches!(err, HypothesisError::TruncationTooSmall { .. }));
    }

    #[test]
    fn corollary1_examples() {
        let v = check_corollary1([1.0, 0.0, 1.0, 0.0], 2.0, 1.0, 1.0).unwrap();
        assert!(v.is_yes());
        assert_eq!(v.witness, Some(Witness { theta1: 2.0, theta2: 1.0 }));
        let v = check_corollary1([2.0, 0.5, 0.0, 0.0], 2.0, 1.0, 1.0).unwrap();
        assert_eq!(v.holds, Holds::No);
        // (a - δ1)(b - δ4) = 1 · 4
        let v = check_corollary1([1.0, 2.5, 2.0, 0.0], 2.0, 1.0, 1.0).unwrap();
        assert_eq!(v.holds, Holds::No);
        let v = check_corollary1([1.0, 2.0, 2.0, 0.0], 2.0, 1.0, 1.0).unwrap();
        assert!(v.is_yes());
        let w = v.witness.unwrap();
        let r = w.theta1 / w.theta2;
        assert!(r * 1.0 + 2.0 <= r * 2.0 + 1e-12 && r * 2.0 <= 4.0 + 1e-12);
        assert!(check_corollary1([1.0, 0.0, 1.0, 0.0], 1.0, 1.0, 1.0).is_err());
        assert!(check_corollary1([-1.0, 0.0, 1.0, 0.0], 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn corollary1_mixed_zero_is_noted() {
        let v = check_corollary1([1.0, 3.0, 0.0, 1.0], 2.0, 1.0, 1.0).unwrap();
        assert!(v.is_yes());
        assert!(v.notes.iter().any(|n| n.contains("exactly one")));
    }

    #[test]
    fn corollary2_examples() {
        let bound = 2.0 * 2.0 / 1.0;
        assert!(check_corollary2(1.0, bound - 1.0, 2.0, 1.0, 1.0).unwrap().is_yes());
        assert_eq!(check_corollary2(1.0, bound, 2.0, 1.0, 1.0).unwrap().holds, Holds::No);
        for sigma in [1.1, 2.0, 5.0, 40.0] {
            assert!(check_corollary2(1e-6, 1e-6, sigma, 1.0, 0.0).unwrap().is_yes());
        }
        assert!(check_corollary2(-0.1, 0.0, 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn inclusion_boundaries() {
        for &(t1, t2) in &[(2.0, 1.0), (3.0, 2.0), (2.5, 1.5)] {
            let r: f64 = 7.0;
            let inner = (r / 2.0).powf(t1).powf(1.0 / t1);
            assert_eq!(annulus_cover_index(t1, t2, r, inner, 0.0), Some(0));
            let outer_t = (4.0 * r).powf(t1).powf(1.0 / t2);
            assert_eq!(annulus_cover_index(t1, t2, r, 0.0, outer_t), Some(inclusion_depth(t1)));
        }
        assert_eq!(inclusion_depth(2.0), 5);
        assert_eq!(inclusion_depth(2.5), 7);
    }

    #[test]
    fn assumption_a_on_lattice() {
        let g = Arc::new(gen_lattice(2, 15.0).unwrap());
        let d = PseudoMetric::euclidean(&g).unwrap();
        let ctx = GraphContext { graph: &g, metric: &d, x0: g.index_of("(0,0)").unwrap() };
        let v = check_assumption_a(ctx, 1.5, 1.0).unwrap();
        assert!(v.is_yes(), "{v:?}");
        assert!(v.c_fit.unwrap() <= 0.5);
    }
}
