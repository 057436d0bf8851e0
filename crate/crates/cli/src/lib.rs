//! Command-line front end: graph generation, hypothesis checks, cutoff
//! verification, simulation, sweeps and weak-residual studies.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod plot;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use graph_fujita::cutoff::{verify_est1, verify_est2, CutoffFamily};
use graph_fujita::dynamics::{
    sweep, sweep_header, weak_residual, write_snapshots_csv, write_sweep_csv, DynamicsError, InitialData, Nonlinearity, RimPolicy,
    SimConfig, SimParams, Simulator, SweepGrid, WeakForm,
};
use graph_fujita::generators::{gen_cycle_group, gen_lattice, gen_product, gen_tree, MeasureRule};
use graph_fujita::hypotheses::{
    check_assumption_a, check_corollary1, check_corollary2, check_corollary2_on_graph, check_corollary3, check_finite_graph_condition,
    check_theorem_hypotheses, sample_f_annulus, search_theorem_grid, verify_annulus_inclusion, GraphContext, Holds, TheoremParams, Verdict,
    DEFAULT_SLACK, THETA_GRID,
};
use graph_fujita::io::{parse_graph_file, write_graph, write_graph_file};
use graph_fujita::metrics::laplacian_of_distance;
use graph_fujita::potential::PotentialSpec;
use graph_fujita::{NodeFunction, PseudoMetric, WeightedGraph};
use plot::{emit_plot_data, PlotData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const JOBS_ENV: &str = "GRAPH_FUJITA_JOBS";

#[derive(Debug, Parser)]
#[command(name = "graph-fujita", version, about = "Fujita-type blow-up experiments on weighted graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a graph file.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Check a hypothesis and print a JSON verdict.
    #[command(subcommand)]
    Check(CheckCmd),
    /// Numerical verification of auxiliary estimates.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Integrate one run and print its outcome as CSV.
    Simulate(SimulateArgs),
    /// Run a parameter sweep described by a JSON config.
    Sweep(SweepArgs),
    /// Weak-form residual of fixed-step trajectories.
    Residual(ResidualArgs),
}

#[derive(Debug, Subcommand)]
pub enum GenCmd {
    Lattice {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        radius: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    Tree {
        #[arg(long)]
        degree: usize,
        #[arg(long)]
        depth: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    Cycle {
        #[arg(long)]
        order: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Cartesian product of two graph files.
    Product {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        /// `max` or `sum` of the factor measures.
        #[arg(long, default_value = "max")]
        measure_rule: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// `natural` or `euclidean`.
    #[arg(long, default_value = "natural")]
    pub metric: String,
    /// Base point id; defaults to the lattice origin, the tree root or the first node.
    #[arg(long)]
    pub x0: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum CheckCmd {
    AssumptionA {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 1.5)]
        r0: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Write the distance profile for plotting into this directory.
        #[arg(long)]
        plot_dir: Option<PathBuf>,
    },
    Theorem {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value = "const:1")]
        v: String,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Fix θ1; without both θ1 and θ2 the built-in grid is searched.
        #[arg(long)]
        theta1: Option<f64>,
        #[arg(long)]
        theta2: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
        #[arg(long, default_value_t = DEFAULT_SLACK)]
        slack: f64,
    },
    Cor1 {
        /// δ1,δ2,δ3,δ4
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<f64>,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Exponent inequality; with `--graph` the ball sums of `--v` are checked instead.
    Cor2 {
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        delta_prime: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value = "natural")]
        metric: String,
        #[arg(long)]
        x0: Option<String>,
        #[arg(long)]
        v: Option<String>,
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
        #[arg(long, default_value_t = DEFAULT_SLACK)]
        slack: f64,
    },
    Cor3 {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
        #[arg(long, default_value_t = DEFAULT_SLACK)]
        slack: f64,
    },
    Finite {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value = "const:1")]
        v: String,
        #[arg(long)]
        sigma: f64,
        #[arg(long, value_delimiter = ',', default_value = "10,20,40,80,160")]
        times: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_SLACK)]
        slack: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum VerifyCmd {
    /// Empirical constants of the two cutoff estimates.
    Cutoff {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 2.0)]
        theta1: f64,
        #[arg(long, default_value_t = 1.0)]
        theta2: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
    },
    /// Covering of F_R by the annuli E_ρ on random points.
    Inclusion {
        #[arg(long, default_value_t = 2.0)]
        theta1: f64,
        #[arg(long, default_value_t = 1.0)]
        theta2: f64,
        #[arg(long, default_value_t = 10.0)]
        radius: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Integration by parts on random function pairs.
    Ibp {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long)]
    pub sigma: f64,
    /// Exponent of `F(u) = u^m`; ignored when `--nonlinearity` is given.
    #[arg(long, default_value_t = 1.0)]
    pub m: f64,
    /// `linear`, `power:m` or `capped:m,K`.
    #[arg(long)]
    pub nonlinearity: Option<String>,
    /// Potential spec, or `zero` for `v ≡ 0`.
    #[arg(long, default_value = "const:1")]
    pub v: String,
    /// `const:c`, `bump:A,r` or `random:lo,hi`.
    #[arg(long)]
    pub u0: String,
    #[arg(long, default_value = "dirichlet_zero")]
    pub rim: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 100.0)]
    pub t_max: f64,
    /// Write the sampled `t,max,min,mass` series here.
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Keep this many full-state snapshots and write them to `--snapshots-out`.
    #[arg(long, default_value_t = 0)]
    pub snapshots: usize,
    #[arg(long)]
    pub snapshots_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON sweep grid.
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads; the GRAPH_FUJITA_JOBS variable takes precedence.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ResidualArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "natural")]
    pub metric: String,
    #[arg(long, default_value_t = 2.0)]
    pub theta1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub theta2: f64,
    #[arg(long = "R")]
    pub r: f64,
    /// Power of the test function; defaults to one above the admissible minimum.
    #[arg(long)]
    pub s: Option<f64>,
    /// Step sizes, one fixed-step run each.
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.01,0.005")]
    pub dt: Vec<f64>,
    /// Constant sink subtracted from the right-hand side.
    #[arg(long, default_value_t = 0.0)]
    pub sink: f64,
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
}

/// Successful outcomes; `No` maps to exit code 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    No,
}

#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Internal(e) => e,
        }
    }
}

type Outcome = Result<Status, Failure>;

trait InputErr<T> {
    fn input(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> InputErr<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }
}

fn internal(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Internal(e.into())
}

pub fn exit_code(outcome: &Outcome) -> i32 {
    match outcome {
        Ok(Status::Ok) => 0,
        Ok(Status::No) => 1,
        Err(f) => f.code(),
    }
}

/// Runs one command, writing its primary output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Outcome {
    match cli.command {
        Command::Gen(cmd) => run_gen(cmd, out),
        Command::Check(cmd) => run_check(cmd, out),
        Command::Verify(cmd) => run_verify(cmd, out),
        Command::Simulate(args) => run_simulate(args, out),
        Command::Sweep(args) => {
            let env = std::env::var(JOBS_ENV).ok();
            run_sweep(args, env.as_deref(), out)
        }
        Command::Residual(args) => run_residual(args, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    writeln!(out, "{text}").input()
}

fn load_graph(path: &Path) -> Result<Arc<WeightedGraph>, Failure> {
    Ok(Arc::new(parse_graph_file(path, false).input()?))
}

/// The lattice origin, the tree root `r`, the group identity `g0`, else node 0.
fn default_base(g: &WeightedGraph) -> usize {
    if let Some(x) = (0..g.node_count()).find(|&x| g.attr(x).is_some_and(|a| !a.is_empty() && a.iter().all(|&c| c == 0))) {
        return x;
    }
    ["r", "g0"].iter().find_map(|id| g.index_of(id).ok()).unwrap_or(0)
}

fn base_of(g: &WeightedGraph, x0: Option<&str>) -> Result<usize, Failure> {
    match x0 {
        Some(id) => g.index_of(id).input(),
        None => Ok(default_base(g)),
    }
}

struct Loaded {
    graph: Arc<WeightedGraph>,
    metric: PseudoMetric,
    x0: usize,
}

impl Loaded {
    fn new(path: &Path, metric: &str, x0: Option<&str>) -> Result<Self, Failure> {
        let graph = load_graph(path)?;
        let metric = PseudoMetric::by_name(metric, Arc::clone(&graph)).input()?;
        let x0 = base_of(&graph, x0)?;
        Ok(Self { graph, metric, x0 })
    }

    fn from_args(a: &GraphArgs) -> Result<Self, Failure> {
        Self::new(&a.graph, &a.metric, a.x0.as_deref())
    }

    fn ctx(&self) -> GraphContext<'_> {
        GraphContext { graph: &self.graph, metric: &self.metric, x0: self.x0 }
    }

    fn d_max(&self) -> Result<f64, Failure> {
        let row = self.metric.distances_from(self.x0).input()?;
        Ok(row.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max))
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn parse_potential(s: &str) -> Result<Option<PotentialSpec>, Failure> {
    if s == "zero" {
        return Ok(None);
    }
    Ok(Some(s.parse::<PotentialSpec>().input()?))
}

fn required_potential(s: &str) -> Result<PotentialSpec, Failure> {
    parse_potential(s)?.ok_or_else(|| Failure::Input(anyhow!("this check needs a positive potential, not `zero`")))
}

/// Verdict JSON with the inputs recorded under `params`.
fn print_verdict(out: &mut dyn Write, v: &Verdict, params: Value) -> Outcome {
    let mut doc: Value = serde_json::from_str(&v.to_json()).map_err(internal)?;
    doc["params"] = params;
    emit(out, &serde_json::to_string_pretty(&doc).map_err(internal)?)?;
    Ok(if v.holds == Holds::No { Status::No } else { Status::Ok })
}

fn write_target(output: Option<&Path>, out: &mut dyn Write, g: &WeightedGraph) -> Outcome {
    match output {
        Some(p) => write_graph_file(g, p).input()?,
        None => write_graph(g, out).input()?,
    }
    Ok(Status::Ok)
}

fn run_gen(cmd: GenCmd, out: &mut dyn Write) -> Outcome {
    let (g, output) = match cmd {
        GenCmd::Lattice { dim, radius, output } => (gen_lattice(dim, radius).input()?, output),
        GenCmd::Tree { degree, depth, output } => (gen_tree(degree, depth).input()?, output),
        GenCmd::Cycle { order, output } => (gen_cycle_group(order).input()?, output),
        GenCmd::Product { left, right, measure_rule, output } => {
            let rule = match measure_rule.as_str() {
                "max" => MeasureRule::Max,
                "sum" => MeasureRule::Sum,
                other => return Err(Failure::Input(anyhow!("unknown measure rule `{other}`, expected max or sum"))),
            };
            let (l, r) = (load_graph(&left)?, load_graph(&right)?);
            (gen_product(&l, &r, rule).input()?, output)
        }
    };
    write_target(output.as_deref(), out, &g)
}

fn graph_params(a: &GraphArgs, g: &Loaded) -> Value {
    json!({ "graph": a.graph, "metric": a.metric, "x0": g.graph.id(g.x0) })
}

fn run_check(cmd: CheckCmd, out: &mut dyn Write) -> Outcome {
    match cmd {
        CheckCmd::AssumptionA { graph, r0, alpha, plot_dir } => {
            let g = Loaded::from_args(&graph)?;
            let v = check_assumption_a(g.ctx(), r0, alpha).input()?;
            if let Some(dir) = plot_dir {
                let profile = laplacian_of_distance(&g.graph, &g.metric, g.x0).input()?;
                emit_plot_data(&PlotData::Profile(&profile), &dir).input()?;
            }
            let mut p = graph_params(&graph, &g);
            p["r0"] = json!(r0);
            p["alpha"] = json!(alpha);
            print_verdict(out, &v, p)
        }
        CheckCmd::Theorem { graph, v, sigma, m, alpha, theta1, theta2, radii, slack } => {
            let g = Loaded::from_args(&graph)?;
            let pot = required_potential(&v)?;
            let radii = match radii {
                Some(r) => r,
                None => {
                    // keep 2^{1/θ1}R inside the truncation; θ1 = 2 is the worst case of the grid
                    let rim = g.d_max()? - 2.0 * g.metric.jump();
                    let top = rim / 2f64.powf(1.0 / theta1.unwrap_or(2.0));
                    linspace(top / 2.0, top, 5)
                }
            };
            let p = TheoremParams {
                sigma,
                m,
                alpha,
                theta1: theta1.unwrap_or(2.0),
                theta2: theta2.unwrap_or(1.0),
                radii: radii.clone(),
                slack,
            };
            let verdict = match (theta1, theta2) {
                (Some(_), Some(_)) => check_theorem_hypotheses(g.ctx(), &pot, &p).input()?,
                _ => search_theorem_grid(g.ctx(), &pot, &p, &THETA_GRID).input()?,
            };
            let mut params = graph_params(&graph, &g);
            params["v"] = json!(v);
            params["sigma"] = json!(sigma);
            params["m"] = json!(m);
            params["alpha"] = json!(alpha);
            params["radii"] = json!(radii);
            print_verdict(out, &verdict, params)
        }
        CheckCmd::Cor1 { deltas, sigma, m, alpha } => {
            let d: [f64; 4] = deltas.clone().try_into().map_err(|_| Failure::Input(anyhow!("--deltas needs four values")))?;
            let v = check_corollary1(d, sigma, m, alpha).input()?;
            print_verdict(out, &v, json!({ "deltas": deltas, "sigma": sigma, "m": m, "alpha": alpha }))
        }
        CheckCmd::Cor2 { delta, delta_prime, sigma, m, alpha, graph, metric, x0, v, radii, slack } => {
            let mut params = json!({ "sigma": sigma, "m": m, "alpha": alpha });
            let verdict = match graph {
                None => {
                    params["delta"] = json!(delta);
                    params["delta_prime"] = json!(delta_prime);
                    check_corollary2(delta, delta_prime, sigma, m, alpha).input()?
                }
                Some(path) => {
                    let g = Loaded::new(&path, &metric, x0.as_deref())?;
                    let spec = v.ok_or_else(|| Failure::Input(anyhow!("--graph needs --v")))?;
                    let pot = required_potential(&spec)?;
                    let radii = match radii {
                        Some(r) => r,
                        None => {
                            let d = g.d_max()?;
                            linspace((d / 3.0).max(1.0), d - 1.0, 6)
                        }
                    };
                    params["graph"] = json!(path);
                    params["v"] = json!(spec);
                    params["radii"] = json!(radii);
                    check_corollary2_on_graph(g.ctx(), &pot, sigma, m, alpha, &radii, slack).input()?
                }
            };
            print_verdict(out, &verdict, params)
        }
        CheckCmd::Cor3 { graph, sigma, m, alpha, radii, slack } => {
            let g = Loaded::from_args(&graph)?;
            let radii = match radii {
                Some(r) => r,
                None => {
                    let d = g.d_max()?;
                    linspace(d / 4.0, d, 7)
                }
            };
            let v = check_corollary3(g.ctx(), sigma, m, alpha, &radii, slack).input()?;
            let mut p = graph_params(&graph, &g);
            p["sigma"] = json!(sigma);
            p["m"] = json!(m);
            p["alpha"] = json!(alpha);
            p["radii"] = json!(radii);
            print_verdict(out, &v, p)
        }
        CheckCmd::Finite { graph, v, sigma, times, slack } => {
            let g = Loaded::from_args(&graph)?;
            let pot = required_potential(&v)?;
            let verdict = check_finite_graph_condition(g.ctx(), &pot, sigma, &times, slack).input()?;
            let mut p = graph_params(&graph, &g);
            p["v"] = json!(v);
            p["sigma"] = json!(sigma);
            p["times"] = json!(times);
            print_verdict(out, &verdict, p)
        }
    }
}

fn run_verify(cmd: VerifyCmd, out: &mut dyn Write) -> Outcome {
    match cmd {
        VerifyCmd::Cutoff { graph, theta1, theta2, alpha, radii } => {
            let g = Loaded::from_args(&graph)?;
            let radii = match radii {
                Some(r) => r,
                None => {
                    // doubling radii below the truncation limit; small R are pre-asymptotic
                    let top = g.d_max()? / 5.0;
                    let floor = (top / 8.0).max(4.0 * g.metric.jump());
                    let mut r: Vec<f64> = std::iter::successors(Some(top), |r| Some(r / 2.0)).take_while(|&r| r >= floor).collect();
                    if r.is_empty() {
                        return Err(Failure::Input(anyhow!("graph too small for the default radii, pass --radii")));
                    }
                    r.reverse();
                    r
                }
            };
            let fam = CutoffFamily::new(&g.metric, g.x0, theta1, theta2).input()?;
            let est1 = verify_est1(&g.graph, &fam, &radii, alpha).input()?;
            let est2 = verify_est2(&fam, &radii).input()?;
            let ok =
                est1.total_violations() == 0 && est2.total_violations() == 0 && est1.stability_ratio <= 2.0 && est2.stability_ratio <= 2.0;
            let parse = |s: String| serde_json::from_str::<Value>(&s).map_err(internal);
            let doc = json!({
                "ok": ok,
                "est1": parse(est1.to_json())?,
                "est2": parse(est2.to_json())?,
                "params": { "graph": graph.graph, "metric": graph.metric, "theta1": theta1, "theta2": theta2, "alpha": alpha, "radii": radii },
            });
            emit(out, &serde_json::to_string_pretty(&doc).map_err(internal)?)?;
            Ok(if ok { Status::Ok } else { Status::No })
        }
        VerifyCmd::Inclusion { theta1, theta2, radius, samples, seed } => {
            let pts = sample_f_annulus(theta1, theta2, radius, samples, seed);
            let ok = verify_annulus_inclusion(theta1, theta2, radius, &pts).input()?;
            let doc = json!({ "ok": ok, "theta1": theta1, "theta2": theta2, "R": radius, "samples": samples, "seed": seed });
            emit(out, &doc.to_string())?;
            Ok(if ok { Status::Ok } else { Status::No })
        }
        VerifyCmd::Ibp { graph, pairs, seed, tol } => {
            let g = load_graph(&graph)?;
            let n = g.node_count();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst: f64 = 0.0;
            for _ in 0..pairs {
                let f = NodeFunction::from_fn(n, |_| rng.gen_range(-1.0..1.0)).input()?;
                let h = NodeFunction::from_fn(n, |_| rng.gen_range(-1.0..1.0)).input()?;
                worst = worst.max(g.ibp_residual(&f, &h).input()?);
            }
            let ok = worst <= tol;
            let doc = json!({ "ok": ok, "max_residual": worst, "pairs": pairs, "seed": seed, "tol": tol });
            emit(out, &doc.to_string())?;
            Ok(if ok { Status::Ok } else { Status::No })
        }
    }
}

fn model_params(m: &ModelArgs, t_max: f64) -> Result<SimParams, Failure> {
    let nl = match &m.nonlinearity {
        Some(s) => s.parse::<Nonlinearity>().input()?,
        None if m.m == 1.0 => Nonlinearity::Linear,
        None => Nonlinearity::Power { m: m.m },
    };
    let mut p = SimParams::new(m.sigma, nl, parse_potential(&m.v)?, m.u0.parse::<InitialData>().input()?, t_max);
    p.rim = m.rim.parse::<RimPolicy>().input()?;
    p.seed = m.seed;
    Ok(p)
}

fn dynamics_failure(e: DynamicsError) -> Failure {
    match e {
        DynamicsError::NonFiniteState { .. } => Failure::Internal(e.into()),
        other => Failure::Input(other.into()),
    }
}

fn header_lines(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

/// Every field of the run parameters as header lines.
fn sim_header(graph: &Path, g: &WeightedGraph, x0: usize, p: &SimParams) -> Result<Vec<(String, String)>, Failure> {
    let mut pairs = vec![("graph".to_string(), graph.display().to_string()), ("x0".to_string(), g.id(x0).to_string())];
    let Value::Object(map) = serde_json::to_value(p).map_err(internal)? else {
        return Err(internal(anyhow!("parameters did not serialise to an object")));
    };
    for (k, v) in map {
        let text = match v {
            Value::String(s) => s,
            Value::Null => "zero".into(),
            other => other.to_string(),
        };
        pairs.push((k, text));
    }
    Ok(pairs)
}

fn write_file(path: &Path, body: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).input()?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display())).input()
}

fn run_simulate(args: SimulateArgs, out: &mut dyn Write) -> Outcome {
    let graph = load_graph(&args.model.graph)?;
    let x0 = base_of(&graph, args.model.x0.as_deref())?;
    let mut p = model_params(&args.model, args.t_max)?;
    p.snapshots = args.snapshots;
    let header = header_lines(&sim_header(&args.model.graph, &graph, x0, &p)?);
    let sim = Simulator::new(&SimConfig::new(Arc::clone(&graph), x0, p)).map_err(dynamics_failure)?;
    let o = sim.integrate().map_err(dynamics_failure)?;

    let mut text = header.clone();
    text.push_str("class,t_event,t_end,steps,rejected_steps,clip_events,rim_flag\n");
    let t_event = o.class.event_time().map_or(String::new(), |t| t.to_string());
    text.push_str(&format!("{},{},{},{},{},{},{}", o.class.name(), t_event, o.t_end, o.steps, o.rejected_steps, o.clip_events, o.rim_flag));
    emit(out, &text)?;

    if let Some(path) = &args.series {
        let mut body = header.clone();
        body.push_str("t,max,min,mass\n");
        for s in &o.series {
            body.push_str(&format!("{},{},{},{}\n", s.t, s.max, s.min, s.mass));
        }
        write_file(path, body.as_bytes())?;
    }
    if let Some(path) = &args.snapshots_out {
        let mut body = header.into_bytes();
        write_snapshots_csv(&graph, &o.snapshots, &mut body).map_err(internal)?;
        write_file(path, &body)?;
    }
    Ok(Status::Ok)
}

/// Worker count: the environment variable overrides the flag.
pub fn resolve_jobs(flag: Option<usize>, env: Option<&str>) -> Result<usize, Failure> {
    if let Some(s) = env.filter(|s| !s.trim().is_empty()) {
        let n: usize = s.trim().parse().with_context(|| format!("{JOBS_ENV}={s} is not a worker count")).input()?;
        return Ok(n.max(1));
    }
    Ok(flag.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1))
}

pub const SWEEP_CSV: &str = "sweep.csv";
pub const CONFIG_ECHO: &str = "config.json";

fn run_sweep(args: SweepArgs, env_jobs: Option<&str>, out: &mut dyn Write) -> Outcome {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display())).input()?;
    let grid: SweepGrid = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.config.display())).input()?;
    grid.base.validate().map_err(dynamics_failure)?;
    let jobs = resolve_jobs(args.jobs, env_jobs)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display())).input()?;
    let echo = serde_json::to_string_pretty(&grid).map_err(internal)?;
    write_file(&args.out_dir.join(CONFIG_ECHO), echo.as_bytes())?;

    let records = sweep(&grid, jobs).map_err(dynamics_failure)?;
    let mut csv = Vec::new();
    write_sweep_csv(&records, &sweep_header(&grid), &mut csv).map_err(internal)?;
    let csv_path = args.out_dir.join(SWEEP_CSV);
    write_file(&csv_path, &csv)?;
    let map = emit_plot_data(&PlotData::FrontierMap(&records), &args.out_dir).input()?;
    emit(out, &format!("{}\n{}", csv_path.display(), map.display()))?;
    Ok(Status::Ok)
}

fn run_residual(args: ResidualArgs, out: &mut dyn Write) -> Outcome {
    let g = Loaded::new(&args.model.graph, &args.metric, args.model.x0.as_deref())?;
    let fam = CutoffFamily::new(&g.metric, g.x0, args.theta1, args.theta2).input()?;
    let t_end = fam.support_time(args.r);
    let p = model_params(&args.model, t_end)?;
    let sigma = p.sigma;
    let m = p.nonlinearity.m();
    let s_min = (sigma / (sigma - 1.0)).max(if sigma > m { sigma / (sigma - m) } else { 0.0 });
    let s = args.s.unwrap_or(s_min + 1.0);
    let nonlinearity = p.nonlinearity.clone();
    let potential = p.potential;
    let sim = Simulator::new(&SimConfig::new(Arc::clone(&g.graph), g.x0, p)).map_err(dynamics_failure)?.with_sink(args.sink);
    let form = WeakForm { graph: &g.graph, family: &fam, r: args.r, s, sigma, nonlinearity: &nonlinearity, potential: potential.as_ref() };
    let mut pairs = Vec::new();
    for &dt in &args.dt {
        if !(dt > 0.0) {
            return Err(Failure::Input(anyhow!("dt = {dt} must be positive")));
        }
        let traj = sim.run_fixed_dt(dt, t_end).map_err(dynamics_failure)?;
        pairs.push((dt, weak_residual(&traj, &form).map_err(dynamics_failure)?));
    }
    if let Some(dir) = &args.plot_dir {
        emit_plot_data(&PlotData::Convergence(&pairs), dir).input()?;
    }
    let ratios: Vec<f64> = pairs.windows(2).map(|w| w[0].1.abs() / w[1].1.abs()).collect();
    let doc = json!({
        "R": args.r,
        "s": s,
        "t_end": t_end,
        "runs": pairs.iter().map(|(dt, r)| json!({ "dt": dt, "residual": r })).collect::<Vec<_>>(),
        "ratios": ratios,
    });
    emit(out, &serde_json::to_string_pretty(&doc).map_err(internal)?)?;
    Ok(Status::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_jobs_flag() {
        assert_eq!(resolve_jobs(Some(4), Some("2")).unwrap(), 2);
        assert_eq!(resolve_jobs(Some(4), None).unwrap(), 4);
        assert_eq!(resolve_jobs(Some(4), Some("")).unwrap(), 4);
        assert!(resolve_jobs(None, Some("many")).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Ok(Status::Ok)), 0);
        assert_eq!(exit_code(&Ok(Status::No)), 1);
        assert_eq!(exit_code(&Err(Failure::Input(anyhow!("bad flag")))), 2);
        let non_finite = dynamics_failure(DynamicsError::NonFiniteState { t: 1.0 });
        assert_eq!(exit_code(&Err(non_finite)), 3);
    }

    #[test]
    fn linspace_hits_both_ends() {
        assert_eq!(linspace(1.0, 3.0, 3), vec![1.0, 2.0, 3.0]);
    }
}
