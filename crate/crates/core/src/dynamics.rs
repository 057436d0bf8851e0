//! Explicit integration of `u_t = Δ(F(u)) + v u^σ` on finite graphs.
//!
//! A solution of the equation also solves the inequality studied by the
//! nonexistence theorems, so an observed blow-up is consistent with (never a
//! proof of) nonexistence of global solutions.
//!
//! Truncations of infinite graphs have a rim where nodes lost neighbours.
//! With [`RimPolicy::DirichletZero`] each node `x` sees ghost neighbours at
//! `F = 0` with total weight `κ(x) = max_y Σω(y,·) − Σω(x,·)`, so every node
//! keeps the row sum of the untruncated interior. [`RimPolicy::Reflecting`]
//! uses the plain Laplacian, which conserves `Σ u μ`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cutoff::CutoffFamily;
use crate::generators::{base_point, GenError, GeneratorSpec};
use crate::graph::WeightedGraph;
use crate::potential::PotentialSpec;

/// Default regularisation of `F′` near `u = 0` in the step-size controller.
/// It sits below [`EXTINCTION_THRESHOLD`] so that fast-diffusion runs can
/// resolve values down to the extinction test.
pub const EPS_REG: f64 = 1e-13;
/// Values at or below this count as outside the support of `u`.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;
pub const EXTINCTION_THRESHOLD: f64 = 1e-12;
/// Blow-up needs the projected remaining ODE time below this fraction of `1 + t`.
pub const BLOWUP_REMAINING_RTOL: f64 = 1e-3;
const MAX_SINGLE_STEP_GROWTH: f64 = 0.2;
/// Negative values smaller than this fraction of `max u` are clipped silently;
/// larger undershoots reject the step.
const CLIP_RTOL: f64 = 1e-10;
const STEADY_RTOL: f64 = 1e-8;
/// Graphs smaller than this are stepped on the calling thread.
const PARALLEL_MIN_NODES: usize = 4096;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("trajectory ends at t = {covered} but the cutoff support extends to {needed}")]
    InsufficientCoverage { covered: f64, needed: f64 },
    #[error("bad {what} `{input}`: {msg}")]
    Parse { what: &'static str, input: String, msg: String },
    #[error("initial data has {got} values for {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Generator(#[from] GenError),
    #[error(transparent)]
    Cutoff(#[from] crate::cutoff::CutoffError),
    #[error("empty input")]
    EmptyInput,
}

pub type Result<T, E = DynamicsError> = std::result::Result<T, E>;

fn out_of_range(msg: impl Into<String>) -> DynamicsError {
    DynamicsError::ParameterOutOfRange(msg.into())
}

fn parse_err(what: &'static str, input: &str, msg: impl Into<String>) -> DynamicsError {
    DynamicsError::Parse { what, input: input.to_string(), msg: msg.into() }
}

fn num(what: &'static str, input: &str, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| parse_err(what, input, format!("`{s}` is not a number")))
}

/// The diffusion nonlinearity `F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    Linear,
    Power {
        m: f64,
    },
    /// `min(p^m, cap)`
    CappedPower {
        m: f64,
        cap: f64,
    },
    /// Piecewise-linear through `(p, F(p))` points starting at `(0, 0)`,
    /// extended by `F(p_last) (p / p_last)^m` beyond the last point.
    Table {
        m: f64,
        points: Vec<(f64, f64)>,
    },
}

impl Nonlinearity {
    pub fn m(&self) -> f64 {
        match self {
            Nonlinearity::Linear => 1.0,
            Nonlinearity::Power { m } | Nonlinearity::CappedPower { m, .. } | Nonlinearity::Table { m, .. } => *m,
        }
    }

    /// Fast-diffusion kinds have `m < 1`.
    pub fn is_fast_diffusion(&self) -> bool {
        self.m() < 1.0
    }

    pub fn value(&self, p: f64) -> f64 {
        match self {
            Nonlinearity::Linear => p,
            Nonlinearity::Power { m } => {
                if *m == 1.0 {
                    p
                } else {
                    p.powf(*m)
                }
            }
            Nonlinearity::CappedPower { m, cap } => p.powf(*m).min(*cap),
            Nonlinearity::Table { m, points } => {
                let (mut x0, mut y0) = (0.0, 0.0);
                for &(x1, y1) in points {
                    if p <= x1 {
                        return y0 + (y1 - y0) * (p - x0) / (x1 - x0);
                    }
                    (x0, y0) = (x1, y1);
                }
                y0 * (p / x0).powf(*m)
            }
        }
    }

    /// Upper bound on the secant and tangent slopes of `F` at `p > 0`, used
    /// by the step-size controller.
    pub fn slope_bound(&self, p: f64) -> f64 {
        match self {
            Nonlinearity::Linear => 1.0,
            Nonlinearity::Power { m } | Nonlinearity::CappedPower { m, .. } => {
                let s = p.powf(m - 1.0);
                s * m.max(1.0)
            }
            Nonlinearity::Table { m, points } => {
                let mut best = self.value(p) / p;
                let (mut x0, mut y0) = (0.0, 0.0);
                for &(x1, y1) in points {
                    best = best.max((y1 - y0) / (x1 - x0));
                    (x0, y0) = (x1, y1);
                }
                if p > x0 {
                    best = best.max(m * self.value(p) / p);
                }
                best
            }
        }
    }

    /// Checks `F(0) = 0`, monotonicity and `0 ≤ F(p) ≤ C_F p^m` on a
    /// log-spaced grid over `[1e-8, 1e8]`. Returns the smallest valid `C_F`.
    pub fn validate(&self) -> Result<f64> {
        let m = self.m();
        if !(m > 0.0) || !m.is_finite() {
            return Err(out_of_range(format!("m = {m} must be positive")));
        }
        match self {
            Nonlinearity::CappedPower { cap, .. } if !(*cap > 0.0) => {
                return Err(out_of_range(format!("cap {cap} must be positive")));
            }
            Nonlinearity::Table { points, .. } => {
                if points.is_empty() {
                    return Err(out_of_range("table needs at least one point"));
                }
                if points.windows(2).any(|w| !(w[1].0 > w[0].0)) || !(points[0].0 > 0.0) {
                    return Err(out_of_range("table abscissae must be positive and increasing"));
                }
            }
            _ => {}
        }
        if self.value(0.0) != 0.0 {
            return Err(out_of_range("F(0) must be 0"));
        }
        let mut prev = 0.0;
        let mut c_f: f64 = 0.0;
        for k in 0..=1600 {
            let p = 10f64.powf(-8.0 + k as f64 * 0.01);
            let f = self.value(p);
            if !(f >= prev) || !f.is_finite() {
                return Err(out_of_range(format!("F is not nondecreasing and finite near p = {p:e}")));
            }
            prev = f;
            c_f = c_f.max(f / p.powf(m));
        }
        if !c_f.is_finite() {
            return Err(out_of_range("F(p) / p^m is unbounded"));
        }
        Ok(c_f)
    }
}

impl FromStr for Nonlinearity {
    type Err = DynamicsError;

    /// `linear`, `power:m`, `capped:m,K`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "linear" {
            return Ok(Nonlinearity::Linear);
        }
        if let Some(rest) = s.strip_prefix("power:") {
            return Ok(Nonlinearity::Power { m: num("nonlinearity", s, rest)? });
        }
        if let Some(rest) = s.strip_prefix("capped:") {
            let (m, k) = rest.split_once(',').ok_or_else(|| parse_err("nonlinearity", s, "expected capped:m,K"))?;
            return Ok(Nonlinearity::CappedPower { m: num("nonlinearity", s, m)?, cap: num("nonlinearity", s, k)? });
        }
        Err(parse_err("nonlinearity", s, "expected linear, power:m or capped:m,K"))
    }
}

/// Initial data `u0 ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitialData {
    Constant(f64),
    /// `amplitude · 1_{B_radius(x0)}` in hop distance.
    Bump {
        amplitude: f64,
        radius: f64,
    },
    /// Independent uniform values in `[lo, hi]`, seeded by the run seed.
    Random {
        lo: f64,
        hi: f64,
    },
}

impl InitialData {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            InitialData::Constant(c) => c >= 0.0 && c.is_finite(),
            InitialData::Bump { amplitude, radius } => amplitude >= 0.0 && amplitude.is_finite() && radius >= 0.0,
            InitialData::Random { lo, hi } => lo >= 0.0 && hi >= lo && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(out_of_range(format!("initial data `{self}` must be nonnegative and finite")))
        }
    }

    /// Values on the graph, `hops` being hop distances from the base point.
    pub fn realize(&self, hops: &[f64], seed: u64) -> Vec<f64> {
        match *self {
            InitialData::Constant(c) => vec![c; hops.len()],
            InitialData::Bump { amplitude, radius } => hops.iter().map(|&h| if h <= radius { amplitude } else { 0.0 }).collect(),
            InitialData::Random { lo, hi } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                hops.iter().map(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo }).collect()
            }
        }
    }
}

impl FromStr for InitialData {
    type Err = DynamicsError;

    /// `const:c`, `bump:A,r`, `random:lo,hi`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let pair = |rest: &str| -> Result<(f64, f64)> {
            let (a, b) = rest.split_once(',').ok_or_else(|| parse_err("initial data", s, "expected two comma-separated numbers"))?;
            Ok((num("initial data", s, a)?, num("initial data", s, b)?))
        };
        let data = if let Some(rest) = s.strip_prefix("const:") {
            InitialData::Constant(num("initial data", s, rest)?)
        } else if let Some(rest) = s.strip_prefix("bump:") {
            let (amplitude, radius) = pair(rest)?;
            InitialData::Bump { amplitude, radius }
        } else if let Some(rest) = s.strip_prefix("random:") {
            let (lo, hi) = pair(rest)?;
            InitialData::Random { lo, hi }
        } else {
            return Err(parse_err("initial data", s, "expected const:c, bump:A,r or random:lo,hi"));
        };
        data.validate()?;
        Ok(data)
    }
}

impl fmt::Display for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialData::Constant(c) => write!(f, "const:{c}"),
            InitialData::Bump { amplitude, radius } => write!(f, "bump:{amplitude},{radius}"),
            InitialData::Random { lo, hi } => write!(f, "random:{lo},{hi}"),
        }
    }
}

impl TryFrom<String> for InitialData {
    type Error = DynamicsError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InitialData> for String {
    fn from(d: InitialData) -> String {
        d.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RimPolicy {
    #[default]
    DirichletZero,
    Reflecting,
}

impl FromStr for RimPolicy {
    type Err = DynamicsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet_zero" | "dirichlet" => Ok(RimPolicy::DirichletZero),
            "reflecting" => Ok(RimPolicy::Reflecting),
            _ => Err(parse_err("rim policy", s, "expected dirichlet_zero or reflecting")),
        }
    }
}

fn default_u_max() -> f64 {
    1e12
}
fn default_dt_min() -> f64 {
    1e-14
}
fn default_safety() -> f64 {
    0.02
}
fn default_cfl() -> f64 {
    0.5
}
fn default_eps_reg() -> f64 {
    EPS_REG
}
fn default_max_steps() -> usize {
    20_000_000
}
fn default_samples() -> usize {
    1000
}

/// Run parameters, accepted as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub sigma: f64,
    pub nonlinearity: Nonlinearity,
    /// `None` means `v ≡ 0`.
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    pub u0: InitialData,
    pub t_max: f64,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    /// Bound on the relative reaction growth `dt σ v u^{σ-1}` per step.
    #[serde(default = "default_safety")]
    pub safety: f64,
    /// Fraction of the diffusion stability limit used per step.
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    /// The controller evaluates slopes of `F` at `max(u, eps_reg)`. Values
    /// much below `eps_reg` are not resolved for fast diffusion.
    #[serde(default = "default_eps_reg")]
    pub eps_reg: f64,
    #[serde(default)]
    pub rim: RimPolicy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Number of evenly spaced time-series samples over `[0, t_max]`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Number of evenly spaced full-state snapshots kept (0 for none).
    #[serde(default)]
    pub snapshots: usize,
}

impl SimParams {
    pub fn new(sigma: f64, nonlinearity: Nonlinearity, potential: Option<PotentialSpec>, u0: InitialData, t_max: f64) -> Self {
        Self {
            sigma,
            nonlinearity,
            potential,
            u0,
            t_max,
            u_max: default_u_max(),
            dt_min: default_dt_min(),
            safety: default_safety(),
            cfl_safety: default_cfl(),
            eps_reg: EPS_REG,
            rim: RimPolicy::default(),
            seed: 0,
            max_steps: default_max_steps(),
            samples: default_samples(),
            snapshots: 0,
        }
    }

    pub fn validate(&self) -> Result<f64> {
        if !(self.sigma > 1.0) || !self.sigma.is_finite() {
            return Err(out_of_range(format!("σ = {} must exceed 1", self.sigma)));
        }
        let c_f = self.nonlinearity.validate()?;
        self.u0.validate()?;
        for (name, v) in [
            ("t_max", self.t_max),
            ("u_max", self.u_max),
            ("dt_min", self.dt_min),
            ("safety", self.safety),
            ("cfl_safety", self.cfl_safety),
            ("eps_reg", self.eps_reg),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(out_of_range(format!("{name} = {v} must be positive")));
            }
        }
        if self.cfl_safety > 1.0 {
            return Err(out_of_range("cfl_safety must be at most 1"));
        }
        Ok(c_f)
    }
}

/// A graph, its base point and the run parameters.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub graph: Arc<WeightedGraph>,
    pub x0: usize,
    pub params: SimParams,
}

impl SimConfig {
    pub fn new(graph: Arc<WeightedGraph>, x0: usize, params: SimParams) -> Self {
        Self { graph, x0, params }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum OutcomeClass {
    BlowUp { t: f64 },
    Extinction { t: f64 },
    Decay,
    Steady,
    Undecided { reason: String },
}

impl OutcomeClass {
    pub fn name(&self) -> &'static str {
        match self {
            OutcomeClass::BlowUp { .. } => "blow_up",
            OutcomeClass::Extinction { .. } => "extinction",
            OutcomeClass::Decay => "decay",
            OutcomeClass::Steady => "steady",
            OutcomeClass::Undecided { .. } => "undecided",
        }
    }

    /// Blow-up or extinction time.
    pub fn event_time(&self) -> Option<f64> {
        match self {
            OutcomeClass::BlowUp { t } | OutcomeClass::Extinction { t } => Some(*t),
            _ => None,
        }
    }

    /// Integer code used in frontier plots.
    pub fn code(&self) -> i32 {
        match self {
            OutcomeClass::BlowUp { .. } => 2,
            OutcomeClass::Extinction { .. } => -1,
            OutcomeClass::Decay => 0,
            OutcomeClass::Steady => 1,
            OutcomeClass::Undecided { .. } => 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub max: f64,
    pub min: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub class: OutcomeClass,
    pub t_end: f64,
    pub series: Vec<SeriesPoint>,
    pub steps: usize,
    pub rejected_steps: usize,
    pub clip_events: usize,
    /// `clip_events / (steps · nodes)`.
    pub clip_fraction: f64,
    /// Set when `u > 1e-10` came within two hops of the rim.
    pub rim_flag: bool,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub snapshots: Vec<(f64, Vec<f64>)>,
    #[serde(skip)]
    pub final_state: Vec<f64>,
}

impl SimOutcome {
    pub fn initial_max(&self) -> f64 {
        self.series.first().map_or(0.0, |p| p.max)
    }

    pub fn final_max(&self) -> f64 {
        self.series.last().map_or(0.0, |p| p.max)
    }
}

/// Blow-up time `u0^{1-σ} / (σ - 1)` of `u′ = u^σ`, `u(0) = u0`.
pub fn ode_blowup_time(u0: f64, sigma: f64) -> Result<f64> {
    if !(u0 > 0.0) || !(sigma > 1.0) {
        return Err(out_of_range(format!("need u0 > 0 and σ > 1, got ({u0}, {sigma})")));
    }
    Ok(u0.powf(1.0 - sigma) / (sigma - 1.0))
}

/// States `u(·, t_n)` at increasing times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn push(&mut self, t: f64, u: Vec<f64>) {
        self.times.push(t);
        self.states.push(u);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Stepper for one configuration. Owns the bound potential, the rim
/// absorption coefficients and the near-rim node list.
pub struct Simulator {
    graph: Arc<WeightedGraph>,
    params: SimParams,
    hops: Vec<f64>,
    kappa: Vec<f64>,
    near_rim: Vec<usize>,
    /// Extra constant loss rate, used only for sign probes of the weak form.
    sink: f64,
}

impl Simulator {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.params.validate()?;
        let g = &cfg.graph;
        if cfg.x0 >= g.node_count() {
            return Err(out_of_range(format!("base node {} out of range", cfg.x0)));
        }
        let hops: Vec<f64> = g.bfs_hops(cfg.x0).into_iter().map(|h| h.map_or(f64::INFINITY, f64::from)).collect();
        let max_row = g.max_row_sum();
        let deficit: Vec<f64> = (0..g.node_count()).map(|x| max_row - g.row_sum(x)).collect();
        let rim: Vec<usize> = (0..g.node_count()).filter(|&x| deficit[x] > 1e-12 * max_row).collect();
        let near_rim = if rim.is_empty() {
            Vec::new()
        } else {
            g.multi_source_hops(rim.iter().copied())
                .into_iter()
                .enumerate()
                .filter(|(_, h)| matches!(h, Some(h) if *h <= 2))
                .map(|(x, _)| x)
                .collect()
        };
        let kappa = match cfg.params.rim {
            RimPolicy::DirichletZero => deficit.iter().map(|&k| if k > 1e-12 * max_row { k } else { 0.0 }).collect(),
            RimPolicy::Reflecting => vec![0.0; g.node_count()],
        };
        Ok(Self { graph: Arc::clone(&cfg.graph), params: cfg.params.clone(), hops, kappa, near_rim, sink: 0.0 })
    }

    /// Adds the loss term `-c` to the right-hand side. The modified dynamics
    /// no longer solve the inequality; used to probe the weak-form sign.
    pub fn with_sink(mut self, c: f64) -> Self {
        self.sink = c;
        self
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn hops(&self) -> &[f64] {
        &self.hops
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.params.u0.realize(&self.hops, self.params.seed)
    }

    fn potential_at(&self, x: usize, t: f64) -> f64 {
        self.params.potential.as_ref().map_or(0.0, |v| v.value(self.hops[x], t))
    }

    /// `Δ_D F(u) + v u^σ − sink` at every node.
    pub fn rates(&self, u: &[f64], t: f64, out: &mut [f64]) {
        let g = &*self.graph;
        let f: Vec<f64> = u.iter().map(|&p| self.params.nonlinearity.value(p)).collect();
        let sigma = self.params.sigma;
        let rate = |x: usize| -> f64 {
            let flux: f64 = g.neighbors(x).map(|(y, w)| w * (f[y] - f[x])).sum::<f64>() - self.kappa[x] * f[x];
            let reaction = if u[x] > 0.0 { self.potential_at(x, t) * u[x].powf(sigma) } else { 0.0 };
            flux / g.mu(x) + reaction - self.sink
        };
        if out.len() >= PARALLEL_MIN_NODES {
            out.par_iter_mut().enumerate().for_each(|(x, o)| *o = rate(x));
        } else {
            out.iter_mut().enumerate().for_each(|(x, o)| *o = rate(x));
        }
    }

    /// Step size from the diffusion stability limit and the reaction growth bound.
    pub fn stable_dt(&self, u: &[f64], t: f64) -> f64 {
        let g = &*self.graph;
        let p = &self.params;
        let bound = |x: usize| -> f64 {
            let lap = (g.row_sum(x) + self.kappa[x]) / g.mu(x);
            let diff = p.cfl_safety / (lap * p.nonlinearity.slope_bound(u[x].max(p.eps_reg)));
            let rate = p.sigma * self.potential_at(x, t) * u[x].powf(p.sigma - 1.0);
            let react = if rate > 0.0 { p.safety / rate } else { f64::INFINITY };
            diff.min(react)
        };
        if u.len() >= PARALLEL_MIN_NODES {
            (0..u.len()).into_par_iter().map(bound).reduce(|| f64::INFINITY, f64::min)
        } else {
            (0..u.len()).map(bound).fold(f64::INFINITY, f64::min)
        }
    }

    /// Explicit Euler update clipped at 0. Returns the new state and the
    /// number of clipped components.
    pub fn step(&self, u: &[f64], t: f64, dt: f64) -> Result<(Vec<f64>, usize)> {
        if !(dt > 0.0) {
            return Err(out_of_range(format!("dt = {dt} must be positive")));
        }
        if u.len() != self.graph.node_count() {
            return Err(DynamicsError::LengthMismatch { expected: self.graph.node_count(), got: u.len() });
        }
        let mut rate = vec![0.0; u.len()];
        self.rates(u, t, &mut rate);
        let (next, clipped, _) = self.euler(u, &rate, t, dt)?;
        Ok((next, clipped))
    }

    /// `u + dt·rate` with negative components set to 0. Also returns the
    /// clip count and the most negative unclipped value.
    fn euler(&self, u: &[f64], rate: &[f64], t: f64, dt: f64) -> Result<(Vec<f64>, usize, f64)> {
        let mut clipped = 0;
        let mut lowest = 0.0f64;
        let mut next = Vec::with_capacity(u.len());
        for (a, r) in u.iter().zip(rate) {
            let v = a + dt * r;
            if !v.is_finite() {
                return Err(DynamicsError::NonFiniteState { t });
            }
            if v < 0.0 {
                clipped += 1;
                lowest = lowest.min(v);
                next.push(0.0);
            } else {
                next.push(v);
            }
        }
        Ok((next, clipped, lowest))
    }

    fn mass(&self, u: &[f64]) -> f64 {
        u.iter().zip(self.graph.measures()).map(|(a, m)| a * m).sum()
    }

    fn sample(&self, t: f64, u: &[f64]) -> SeriesPoint {
        let max = u.iter().copied().fold(0.0, f64::max);
        let min = u.iter().copied().fold(f64::INFINITY, f64::min);
        SeriesPoint { t, max, min, mass: self.mass(u) }
    }

    fn touches_rim(&self, u: &[f64]) -> bool {
        self.near_rim.iter().any(|&x| u[x] > SUPPORT_THRESHOLD)
    }

    /// Projected time `u^{1-σ} / ((σ-1) v)` for the node ODE at the maximum.
    fn remaining_blowup_time(&self, u: &[f64], t: f64) -> f64 {
        let (x, &m) = u.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let v = self.potential_at(x, t);
        if v > 0.0 {
            m.powf(1.0 - self.params.sigma) / ((self.params.sigma - 1.0) * v)
        } else {
            f64::INFINITY
        }
    }

    /// Adaptive integration up to `t_max` or an event.
    pub fn integrate(&self) -> Result<SimOutcome> {
        let p = &self.params;
        let n = self.graph.node_count();
        let mut u = self.initial_state();
        let mut t = 0.0;
        let sample_dt = p.t_max / p.samples.max(1) as f64;
        let snap_dt = if p.snapshots > 0 { p.t_max / p.snapshots as f64 } else { f64::INFINITY };
        let mut series = vec![self.sample(0.0, &u)];
        let mut snapshots = if p.snapshots > 0 { vec![(0.0, u.clone())] } else { Vec::new() };
        let mut next_sample = sample_dt;
        let mut next_snap = snap_dt;
        let initial_max = series[0].max;
        let mut steps = 0;
        let mut rejected = 0;
        let mut clips = 0;
        let mut rim_flag = self.touches_rim(&u);
        let mut notes = Vec::new();
        let mut last_rate_norm = f64::INFINITY;
        let mut rate = vec![0.0; n];

        let class = loop {
            let max_u = u.iter().copied().fold(0.0, f64::max);
            if max_u >= p.u_max {
                let remaining = self.remaining_blowup_time(&u, t);
                if remaining <= BLOWUP_REMAINING_RTOL * (1.0 + t) {
                    break OutcomeClass::BlowUp { t: t + remaining };
                }
            }
            if max_u <= EXTINCTION_THRESHOLD && initial_max > EXTINCTION_THRESHOLD && p.nonlinearity.is_fast_diffusion() {
                break OutcomeClass::Extinction { t };
            }
            if t >= p.t_max {
                break self.classify_at_end(&series, initial_max, last_rate_norm, max_u);
            }
            if steps >= p.max_steps {
                break OutcomeClass::Undecided { reason: format!("step limit {} reached at t = {t}", p.max_steps) };
            }

            let mut dt = self.stable_dt(&u, t).min(p.t_max - t).max(p.dt_min);
            self.rates(&u, t, &mut rate);
            last_rate_norm = rate.iter().fold(0.0f64, |a, r| a.max(r.abs()));
            let accepted = loop {
                let (next, clipped, lowest) = self.euler(&u, &rate, t, dt)?;
                let next_max = next.iter().copied().fold(0.0, f64::max);
                let too_fast = max_u > 0.0 && next_max > (1.0 + MAX_SINGLE_STEP_GROWTH) * max_u;
                let undershoot = lowest < -CLIP_RTOL * max_u;
                if !(too_fast || undershoot) || dt <= p.dt_min {
                    if too_fast || undershoot {
                        notes.push(format!("step at t = {t} accepted at dt_min"));
                    }
                    break Some((next, clipped));
                }
                rejected += 1;
                dt = (dt / 2.0).max(p.dt_min);
                if rejected > 64 * (steps + 1) {
                    break None;
                }
            };
            let Some((next, clipped)) = accepted else {
                break OutcomeClass::Undecided { reason: format!("stalled at dt_min near t = {t}") };
            };
            clips += clipped;
            steps += 1;
            u = next;
            t += dt;
            if !rim_flag && self.touches_rim(&u) {
                rim_flag = true;
                notes.push(format!("support reached the rim at t = {t:.6}"));
            }
            if t >= next_sample || t >= p.t_max {
                series.push(self.sample(t, &u));
                while next_sample <= t {
                    next_sample += sample_dt;
                }
            }
            if t >= next_snap {
                snapshots.push((t, u.clone()));
                while next_snap <= t {
                    next_snap += snap_dt;
                }
            }
        };
        if series.last().map(|s| s.t) != Some(t) {
            series.push(self.sample(t, &u));
        }
        let updates = (steps * n).max(1);
        let clip_fraction = clips as f64 / updates as f64;
        if clip_fraction > 1e-3 {
            notes.push(format!("clip fraction {clip_fraction:.2e} exceeds 0.1%"));
        }
        Ok(SimOutcome {
            class,
            t_end: t,
            series,
            steps,
            rejected_steps: rejected,
            clip_events: clips,
            clip_fraction,
            rim_flag,
            notes,
            snapshots,
            final_state: u,
        })
    }

    fn classify_at_end(&self, series: &[SeriesPoint], initial_max: f64, rate_norm: f64, max_u: f64) -> OutcomeClass {
        if max_u == 0.0 || rate_norm <= STEADY_RTOL * max_u.max(f64::MIN_POSITIVE) {
            return OutcomeClass::Steady;
        }
        let tail = &series[series.len() - series.len().div_ceil(4)..];
        let nonincreasing = tail.windows(2).all(|w| w[1].max <= w[0].max * (1.0 + 1e-12));
        if max_u < initial_max && nonincreasing {
            OutcomeClass::Decay
        } else {
            OutcomeClass::Undecided { reason: format!("max u = {max_u:e} at t_max without a clear trend") }
        }
    }

    /// Fixed-step Euler run from the configured initial data, recording
    /// every state.
    pub fn run_fixed_dt(&self, dt: f64, t_end: f64) -> Result<Trajectory> {
        if !(dt > 0.0) || !(t_end >= 0.0) {
            return Err(out_of_range("need dt > 0 and t_end >= 0"));
        }
        let steps = (t_end / dt).round() as usize;
        let mut u = self.initial_state();
        let mut traj = Trajectory::default();
        traj.push(0.0, u.clone());
        for k in 0..steps {
            let t = k as f64 * dt;
            u = self.step(&u, t, dt)?.0;
            traj.push((k + 1) as f64 * dt, u.clone());
        }
        Ok(traj)
    }
}

/// Adaptive run for a configuration.
pub fn integrate(cfg: &SimConfig) -> Result<SimOutcome> {
    Simulator::new(cfg)?.integrate()
}

/// Writes snapshots as `t,node_id,u` rows.
pub fn write_snapshots_csv<W: Write>(g: &WeightedGraph, snapshots: &[(f64, Vec<f64>)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,node_id,u")?;
    for (t, u) in snapshots {
        for (x, val) in u.iter().enumerate() {
            writeln!(w, "{t},{},{val}", g.id(x))?;
        }
    }
    Ok(())
}

/// Inputs of the very weak residual besides the trajectory.
#[derive(Debug, Clone)]
pub struct WeakForm<'a> {
    pub graph: &'a WeightedGraph,
    pub family: &'a CutoffFamily,
    pub r: f64,
    pub s: f64,
    pub sigma: f64,
    pub nonlinearity: &'a Nonlinearity,
    /// `None` means `v ≡ 0`.
    pub potential: Option<&'a PotentialSpec>,
}

/// Trapezoidal quadrature in time of
/// `Σ_x [Δ(F(u)) φ_R^s + v u^σ φ_R^s + u ∂_t(φ_R^s)] μ`, plus
/// `Σ_x u(x,0) φ_R^s(x,0) μ(x)`. Solutions of the inequality give values
/// `≤ 0`; exact solutions of the equation give 0 up to discretisation error.
pub fn weak_residual(traj: &Trajectory, form: &WeakForm<'_>) -> Result<f64> {
    let g = form.graph;
    let fam = form.family;
    let m = form.nonlinearity.m();
    let s_min = (form.sigma / (form.sigma - 1.0)).max(if form.sigma > m { form.sigma / (form.sigma - m) } else { f64::INFINITY });
    if !(form.s > s_min) {
        return Err(out_of_range(format!("s = {} must exceed {s_min}", form.s)));
    }
    if traj.is_empty() {
        return Err(DynamicsError::EmptyInput);
    }
    let needed = fam.support_time(form.r);
    let covered = *traj.times.last().unwrap();
    if covered < needed {
        return Err(DynamicsError::InsufficientCoverage { covered, needed });
    }
    if traj.states.iter().any(|u| u.len() != g.node_count()) {
        return Err(DynamicsError::LengthMismatch { expected: g.node_count(), got: traj.states[0].len() });
    }
    let hops = fam.distances();
    let reach = fam.support_radius(form.r) + 1.0;
    let nodes: Vec<usize> = (0..g.node_count()).filter(|&x| hops[x] <= reach + 1.0).collect();
    let density = |k: usize| -> Result<f64> {
        let t = traj.times[k];
        let u = &traj.states[k];
        let mut total = 0.0;
        for &x in &nodes {
            let w = fam.phi_r_pow(x, t, form.r, form.s)?;
            let dw = fam.dphi_r_pow_dt(x, t, form.r, form.s)?;
            if w == 0.0 && dw == 0.0 {
                continue;
            }
            let fx = form.nonlinearity.value(u[x]);
            let lap = g.neighbors(x).map(|(y, wt)| wt * (form.nonlinearity.value(u[y]) - fx)).sum::<f64>() / g.mu(x);
            let v = form.potential.map_or(0.0, |v| v.value(hops[x], t));
            total += (lap * w + v * u[x].powf(form.sigma) * w + u[x] * dw) * g.mu(x);
        }
        Ok(total)
    };
    let mut integral = 0.0;
    let mut prev = density(0)?;
    for k in 1..traj.len() {
        if traj.times[k - 1] >= needed {
            break;
        }
        let cur = density(k)?;
        integral += 0.5 * (prev + cur) * (traj.times[k] - traj.times[k - 1]);
        prev = cur;
    }
    let initial: f64 =
        nodes.iter().map(|&x| Ok(traj.states[0][x] * fam.phi_r_pow(x, traj.times[0], form.r, form.s)? * g.mu(x))).sum::<Result<f64>>()?;
    Ok(integral + initial)
}

/// Grid of a frontier sweep over one graph family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub graph: GeneratorSpec,
    pub sigmas: Vec<f64>,
    pub ms: Vec<f64>,
    pub u0_scales: Vec<f64>,
    /// Radius in hops of the initial bump `scale · 1_{B_r(x0)}`.
    pub bump_radius: f64,
    /// Defaults for every cell; `sigma`, `nonlinearity` and `u0` are overridden.
    pub base: SimParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub family: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub sigma: f64,
    pub m: f64,
    pub u0_scale: f64,
    pub class: String,
    pub t_event: Option<f64>,
    pub rim_flag: bool,
    #[serde(skip)]
    pub note: String,
}

fn nonlinearity_for(m: f64) -> Nonlinearity {
    if m == 1.0 {
        Nonlinearity::Linear
    } else {
        Nonlinearity::Power { m }
    }
}

/// One adaptive run per `(σ, m, scale)` cell, executed on a pool of `jobs`
/// workers. Records come back sorted by `(σ, m, scale)`.
pub fn sweep(grid: &SweepGrid, jobs: usize) -> Result<Vec<SweepRecord>> {
    if grid.sigmas.is_empty() || grid.ms.is_empty() || grid.u0_scales.is_empty() {
        return Err(DynamicsError::EmptyInput);
    }
    let graph = Arc::new(grid.graph.build()?);
    let x0 = base_point(&grid.graph, &graph);
    let mut cells = Vec::new();
    for &sigma in &grid.sigmas {
        for &m in &grid.ms {
            for &scale in &grid.u0_scales {
                cells.push((sigma, m, scale));
            }
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| out_of_range(format!("thread pool: {e}")))?;
    let family = grid.graph.family().to_string();
    let n = grid.graph.size_param();
    let records = pool.install(|| {
        cells
            .par_iter()
            .map(|&(sigma, m, scale)| {
                let params = SimParams {
                    sigma,
                    nonlinearity: nonlinearity_for(m),
                    u0: InitialData::Bump { amplitude: scale, radius: grid.bump_radius },
                    ..grid.base.clone()
                };
                let cfg = SimConfig::new(Arc::clone(&graph), x0, params);
                let base = SweepRecord {
                    family: family.clone(),
                    n,
                    sigma,
                    m,
                    u0_scale: scale,
                    class: "undecided".into(),
                    t_event: None,
                    rim_flag: false,
                    note: String::new(),
                };
                match integrate(&cfg) {
                    Ok(out) => SweepRecord {
                        class: out.class.name().into(),
                        t_event: out.class.event_time(),
                        rim_flag: out.rim_flag,
                        note: out.notes.join("; "),
                        ..base
                    },
                    Err(e) => SweepRecord { note: e.to_string(), ..base },
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(records)
}

/// CSV with `# key=value` header lines followed by the record table.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], header: &[(String, String)], mut w: W) -> std::io::Result<()> {
    for (k, v) in header {
        writeln!(w, "# {k}={v}")?;
    }
    writeln!(w, "family,N,sigma,m,u0_scale,class,t_event,rim_flag")?;
    for r in records {
        let t = r.t_event.map_or(String::new(), |t| format!("{t}"));
        writeln!(w, "{},{},{},{},{},{},{},{}", r.family, r.n, r.sigma, r.m, r.u0_scale, r.class, t, r.rim_flag)?;
    }
    Ok(())
}

/// Header lines recording every default of a sweep.
pub fn sweep_header(grid: &SweepGrid) -> Vec<(String, String)> {
    let b = &grid.base;
    vec![
        ("graph".into(), serde_json::to_string(&grid.graph).unwrap_or_default()),
        ("bump_radius".into(), grid.bump_radius.to_string()),
        ("potential".into(), b.potential.map_or("zero".into(), |p| p.to_string())),
        ("t_max".into(), b.t_max.to_string()),
        ("u_max".into(), b.u_max.to_string()),
        ("dt_min".into(), b.dt_min.to_string()),
        ("safety".into(), b.safety.to_string()),
        ("cfl_safety".into(), b.cfl_safety.to_string()),
        ("rim".into(), format!("{:?}", b.rim)),
        ("seed".into(), b.seed.to_string()),
        ("eps_reg".into(), b.eps_reg.to_string()),
        ("support_threshold".into(), SUPPORT_THRESHOLD.to_string()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_cycle_group;
    use crate::graph::GraphBuilder;

    fn cycle_cfg(sigma: f64, u0: f64) -> SimConfig {
        let g = Arc::new(gen_cycle_group(10).unwrap());
        let p = SimParams::new(sigma, Nonlinearity::Linear, Some(PotentialSpec::Constant(1.0)), InitialData::Constant(u0), 100.0);
        SimConfig::new(g, 0, p)
    }

    #[test]
    fn single_node_step() {
        let mut b = GraphBuilder::new();
        b.node("a", 1.0);
        let g = Arc::new(b.build(false).unwrap());
        let p = SimParams::new(2.0, Nonlinearity::Linear, Some(PotentialSpec::Constant(1.0)), InitialData::Constant(1.0), 1.0);
        let sim = Simulator::new(&SimConfig::new(g, 0, p)).unwrap();
        let (u, clipped) = sim.step(&[1.0], 0.0, 0.01).unwrap();
        assert!((u[0] - 1.01).abs() < 1e-15);
        assert_eq!(clipped, 0);
    }

    #[test]
    fn zero_and_constant_states() {
        let sim = Simulator::new(&cycle_cfg(2.0, 1.0)).unwrap();
        let (u, _) = sim.step(&[0.0; 10], 0.0, 0.1).unwrap();
        assert!(u.iter().all(|&a| a == 0.0));
        let (u, _) = sim.step(&[0.5; 10], 0.0, 0.1).unwrap();
        assert!(u.iter().all(|&a| (a - 0.525).abs() < 1e-15));
    }

    #[test]
    fn ode_oracle() {
        assert_eq!(ode_blowup_time(1.0, 2.0).unwrap(), 1.0);
        assert_eq!(ode_blowup_time(2.0, 3.0).unwrap(), 0.125);
        assert!(ode_blowup_time(1e-9, 2.0).unwrap() > 1e8);
        assert!(ode_blowup_time(0.0, 2.0).is_err());
    }

    #[test]
    fn constant_data_blows_up_on_time() {
        let out = integrate(&cycle_cfg(2.0, 1.0)).unwrap();
        let t = out.class.event_time().expect("blow-up");
        assert_eq!(out.class.name(), "blow_up");
        assert!((t - 1.0).abs() < 0.02, "t_b = {t}");
    }

    #[test]
    fn parsers() {
        assert_eq!("bump:0.2,5".parse::<InitialData>().unwrap(), InitialData::Bump { amplitude: 0.2, radius: 5.0 });
        assert!("const:-1".parse::<InitialData>().is_err());
        assert_eq!("power:0.5".parse::<Nonlinearity>().unwrap(), Nonlinearity::Power { m: 0.5 });
        assert!("cubic".parse::<Nonlinearity>().is_err());
        let capped: Nonlinearity = "capped:2,3".parse().unwrap();
        assert_eq!(capped.value(10.0), 3.0);
        assert!(capped.validate().unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn table_nonlinearity_interpolates() {
        let f = Nonlinearity::Table { m: 1.0, points: vec![(1.0, 2.0), (2.0, 3.0)] };
        assert_eq!(f.value(0.5), 1.0);
        assert_eq!(f.value(1.5), 2.5);
        assert_eq!(f.value(4.0), 6.0);
        assert!((f.validate().unwrap() - 2.0).abs() < 1e-9);
        let bad = Nonlinearity::Table { m: 1.0, points: vec![(1.0, 2.0), (2.0, 1.0)] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn params_json_round_trip() {
        let p = cycle_cfg(2.0, 1.0).params;
        let s = serde_json::to_string(&p).unwrap();
        let q: SimParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        let minimal: SimParams =
            serde_json::from_str(r#"{"sigma":2,"nonlinearity":{"kind":"power","m":2},"potential":"const:1","u0":"const:1","t_max":5}"#)
                .unwrap();
        assert_eq!(minimal.u_max, 1e12);
        assert_eq!(minimal.rim, RimPolicy::DirichletZero);
    }
}
