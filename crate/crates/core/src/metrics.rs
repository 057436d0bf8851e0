//! Pseudo-metrics on graph nodes, jump sizes, balls and the profile of
//! `x ↦ Δ d(x, x0)` used to fit the distance-Laplacian bound.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::WeightedGraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("unknown node #{0}")]
    UnknownNode(usize),
    #[error("node #{0} is unreachable from #{1}")]
    Unreachable(usize, usize),
    #[error("alpha = {0} is outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("node `{0}` has no coordinate attribute (or dimensions differ)")]
    MissingCoordinates(String),
    #[error("no nodes beyond R0 = {0}")]
    EmptyExterior(f64),
    #[error("distance table row {row} has length {got}, expected {expected}")]
    BadTableRow { row: usize, got: usize, expected: usize },
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("unknown metric `{0}` (expected natural or euclidean)")]
    UnknownKind(String),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Natural,
    EuclideanCoords,
    Product,
    CustomTable,
}

type RowLoader = Arc<dyn Fn(usize) -> Vec<f64> + Send + Sync>;

enum Repr {
    Natural { graph: Arc<WeightedGraph> },
    Euclidean { coords: Vec<Vec<i64>> },
    Product { left: Box<PseudoMetric>, right: Box<PseudoMetric>, alpha: f64 },
    Table { loader: RowLoader },
}

/// A pseudo-metric over the dense node indices of one graph, with its jump
/// size cached at construction.
pub struct PseudoMetric {
    repr: Repr,
    len: usize,
    jump: f64,
    rows: Mutex<HashMap<usize, Arc<Vec<f64>>>>,
}

impl std::fmt::Debug for PseudoMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PseudoMetric").field("kind", &self.kind()).field("len", &self.len).field("jump", &self.jump).finish()
    }
}

impl PseudoMetric {
    fn with_repr(repr: Repr, len: usize) -> Self {
        Self { repr, len, jump: 0.0, rows: Mutex::new(HashMap::new()) }
    }

    /// Hop-count distance `d_*`. Its jump size is 1 whenever the graph has an edge.
    pub fn natural(graph: Arc<WeightedGraph>) -> Self {
        let len = graph.node_count();
        let jump = if graph.edge_count() > 0 { 1.0 } else { 0.0 };
        let mut m = Self::with_repr(Repr::Natural { graph }, len);
        m.jump = jump;
        m
    }

    /// Euclidean distance between integer coordinate attributes.
    pub fn euclidean(graph: &WeightedGraph) -> Result<Self> {
        let n = graph.node_count();
        let mut coords = Vec::with_capacity(n);
        let mut dim = None;
        for x in 0..n {
            let c = graph.attr(x).ok_or_else(|| MetricError::MissingCoordinates(graph.id(x).to_string()))?;
            match dim {
                None => dim = Some(c.len()),
                Some(k) if k != c.len() => return Err(MetricError::MissingCoordinates(graph.id(x).to_string())),
                _ => {}
            }
            coords.push(c.to_vec());
        }
        let mut m = Self::with_repr(Repr::Euclidean { coords }, n);
        m.jump = jump_size(graph, &m);
        Ok(m)
    }

    /// `d((x1,x2),(y1,y2)) = (d1^{1+α} + d2^{1+α})^{1/(1+α)}` over the
    /// product node order `i1 * |V2| + i2`.
    pub fn product(left: PseudoMetric, right: PseudoMetric, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(MetricError::AlphaOutOfRange(alpha));
        }
        let len = left.len * right.len;
        // product edges move in exactly one factor, where d reduces to that factor's d
        let jump = left.jump.max(right.jump);
        let mut m = Self::with_repr(Repr::Product { left: Box::new(left), right: Box::new(right), alpha }, len);
        m.jump = jump;
        Ok(m)
    }

    /// Metric given by a row loader: `loader(x)` returns `d(x, ·)` over all nodes.
    /// Rows are loaded on first use and cached.
    pub fn custom_table(graph: &WeightedGraph, loader: impl Fn(usize) -> Vec<f64> + Send + Sync + 'static) -> Result<Self> {
        let n = graph.node_count();
        let m = Self::with_repr(Repr::Table { loader: Arc::new(loader) }, n);
        let mut jump: f64 = 0.0;
        for (x, y, _) in graph.edges() {
            jump = jump.max(m.distance(x, y)?);
        }
        let mut m = m;
        m.jump = jump;
        Ok(m)
    }

    pub fn from_matrix(graph: &WeightedGraph, table: Vec<Vec<f64>>) -> Result<Self> {
        let n = graph.node_count();
        if table.len() != n {
            return Err(MetricError::BadTableRow { row: table.len(), got: table.len(), expected: n });
        }
        for (i, row) in table.iter().enumerate() {
            if row.len() != n {
                return Err(MetricError::BadTableRow { row: i, got: row.len(), expected: n });
            }
        }
        let table = Arc::new(table);
        Self::custom_table(graph, move |x| table[x].clone())
    }

    /// `natural` or `euclidean` by name.
    pub fn by_name(name: &str, graph: Arc<WeightedGraph>) -> Result<Self> {
        match name {
            "natural" => Ok(Self::natural(graph)),
            "euclidean" => Self::euclidean(&graph),
            other => Err(MetricError::UnknownKind(other.to_string())),
        }
    }

    pub fn kind(&self) -> MetricKind {
        match self.repr {
            Repr::Natural { .. } => MetricKind::Natural,
            Repr::Euclidean { .. } => MetricKind::EuclideanCoords,
            Repr::Product { .. } => MetricKind::Product,
            Repr::Table { .. } => MetricKind::CustomTable,
        }
    }

    /// Number of nodes the metric is defined on.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn jump(&self) -> f64 {
        self.jump
    }

    fn check(&self, x: usize) -> Result<()> {
        if x < self.len {
            Ok(())
        } else {
            Err(MetricError::UnknownNode(x))
        }
    }

    /// `d(x, y)`.
    pub fn distance(&self, x: usize, y: usize) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        let d = match &self.repr {
            Repr::Euclidean { coords } => euclid(&coords[x], &coords[y]),
            Repr::Product { left, right, alpha } => {
                let n2 = right.len;
                let d1 = left.distance(x / n2, y / n2)?;
                let d2 = right.distance(x % n2, y % n2)?;
                combine(d1, d2, *alpha)
            }
            Repr::Natural { .. } | Repr::Table { .. } => self.row(x)?[y],
        };
        if d.is_infinite() {
            return Err(MetricError::Unreachable(y, x));
        }
        Ok(d)
    }

    /// `d(x0, ·)` over every node. Unreachable nodes (natural metric on a
    /// disconnected graph) carry `+∞`.
    pub fn distances_from(&self, x0: usize) -> Result<Arc<Vec<f64>>> {
        self.check(x0)?;
        match &self.repr {
            Repr::Euclidean { coords } => {
                let c0 = &coords[x0];
                Ok(Arc::new(coords.par_iter().map(|c| euclid(c0, c)).collect()))
            }
            Repr::Product { left, right, alpha } => {
                let n2 = right.len;
                let r1 = left.distances_from(x0 / n2)?;
                let r2 = right.distances_from(x0 % n2)?;
                Ok(Arc::new((0..self.len).map(|x| combine(r1[x / n2], r2[x % n2], *alpha)).collect()))
            }
            Repr::Natural { .. } | Repr::Table { .. } => self.row(x0),
        }
    }

    fn row(&self, x: usize) -> Result<Arc<Vec<f64>>> {
        if let Some(r) = self.rows.lock().unwrap().get(&x) {
            return Ok(r.clone());
        }
        let row = match &self.repr {
            Repr::Natural { graph } => graph.bfs_hops(x).into_iter().map(|h| h.map_or(f64::INFINITY, f64::from)).collect::<Vec<_>>(),
            Repr::Table { loader } => {
                let r = loader(x);
                if r.len() != self.len {
                    return Err(MetricError::BadTableRow { row: x, got: r.len(), expected: self.len });
                }
                r
            }
            _ => unreachable!("rows are only cached for natural and table metrics"),
        };
        let row = Arc::new(row);
        self.rows.lock().unwrap().insert(x, row.clone());
        Ok(row)
    }

    /// Counts violations of the pseudo-metric axioms on random triples:
    /// symmetry and `d(x,x) = 0` exactly, the triangle inequality with
    /// `1e-12` relative slack.
    pub fn sample_axiom_violations(&self, triples: usize, seed: u64) -> Result<usize> {
        if self.len == 0 {
            return Ok(0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bad = 0;
        for _ in 0..triples {
            let (x, y, z) = (rng.gen_range(0..self.len), rng.gen_range(0..self.len), rng.gen_range(0..self.len));
            let dxy = self.distance(x, y)?;
            let dyx = self.distance(y, x)?;
            let dxz = self.distance(x, z)?;
            let dzy = self.distance(z, y)?;
            let scale = 1.0 + dxy.max(dxz + dzy);
            if dxy != dyx || self.distance(x, x)? != 0.0 || dxy < 0.0 || dxy > dxz + dzy + 1e-12 * scale {
                bad += 1;
            }
        }
        Ok(bad)
    }
}

fn euclid(a: &[i64], b: &[i64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| {
            let d = (p - q) as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn combine(d1: f64, d2: f64, alpha: f64) -> f64 {
    if d2 == 0.0 {
        return d1;
    }
    if d1 == 0.0 {
        return d2;
    }
    let p = 1.0 + alpha;
    (d1.powf(p) + d2.powf(p)).powf(1.0 / p)
}

/// Natural (hop-count) distance between two nodes.
pub fn natural_distance(g: &WeightedGraph, x: usize, y: usize) -> Result<u32> {
    if x >= g.node_count() {
        return Err(MetricError::UnknownNode(x));
    }
    if y >= g.node_count() {
        return Err(MetricError::UnknownNode(y));
    }
    g.bfs_hops(x)[y].ok_or(MetricError::Unreachable(y, x))
}

/// `sup { d(x,y) : ω_xy > 0 }` scanned over the stored edges of `g`.
pub fn jump_size(g: &WeightedGraph, d: &PseudoMetric) -> f64 {
    if let Repr::Natural { .. } = d.repr {
        return if g.edge_count() > 0 { 1.0 } else { 0.0 };
    }
    g.edges().filter_map(|(x, y, _)| d.distance(x, y).ok()).fold(0.0, f64::max)
}

/// Convenience wrapper for [`PseudoMetric::product`].
pub fn product_metric(d1: PseudoMetric, d2: PseudoMetric, alpha: f64) -> Result<PseudoMetric> {
    PseudoMetric::product(d1, d2, alpha)
}

/// `{x : d(x0, x) ≤ R}` in increasing index order.
pub fn ball(d: &PseudoMetric, x0: usize, radius: f64) -> Result<Vec<usize>> {
    if !(radius >= 0.0) {
        return Err(MetricError::ParameterOutOfRange(format!("ball radius {radius} < 0")));
    }
    let row = d.distances_from(x0)?;
    Ok(row.iter().enumerate().filter(|(_, &r)| r <= radius).map(|(x, _)| x).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub node: usize,
    pub d: f64,
    pub laplacian_d: f64,
}

/// Per-node `(d(x, x0), Δ d(·, x0)(x))`, sorted by distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceProfile {
    pub base: usize,
    pub kind: MetricKind,
    pub jump: f64,
    pub entries: Vec<ProfileEntry>,
}

impl DistanceProfile {
    /// Largest distance present; the truncation radius seen from the base point.
    pub fn max_distance(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.d)
    }

    /// Distances beyond this value lie within `2j` of the truncation rim.
    pub fn rim_start(&self) -> f64 {
        self.max_distance() - 2.0 * self.jump
    }

    pub fn write_csv<W: Write>(&self, g: &WeightedGraph, mut w: W) -> std::io::Result<()> {
        writeln!(w, "d,laplacian_d,node_id")?;
        for e in &self.entries {
            writeln!(w, "{},{},{}", e.d, e.laplacian_d, g.id(e.node))?;
        }
        Ok(())
    }
}

/// Δ of `x ↦ d(x0, x)` at every node.
pub fn laplacian_of_distance(g: &WeightedGraph, d: &PseudoMetric, x0: usize) -> Result<DistanceProfile> {
    let row = d.distances_from(x0)?;
    if let Some(x) = row.iter().position(|v| v.is_infinite()) {
        return Err(MetricError::Unreachable(x, x0));
    }
    let mut entries: Vec<ProfileEntry> =
        (0..g.node_count()).into_par_iter().map(|x| ProfileEntry { node: x, d: row[x], laplacian_d: g.laplacian_at(&row, x) }).collect();
    entries.sort_by(|a, b| a.d.total_cmp(&b.d).then(a.node.cmp(&b.node)));
    Ok(DistanceProfile { base: x0, kind: d.kind(), jump: d.jump(), entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBoundFit {
    /// `max Δd · d^α` over exterior nodes with positive `Δd`.
    pub c_fit: f64,
    pub ok: bool,
    /// Distance at which the maximum is attained, if any node has `Δd > 0`.
    pub argmax_d: Option<f64>,
    pub exterior_nodes: usize,
    pub rim_start: f64,
}

/// Fits the smallest `C` with `Δ d(x, x0) ≤ C / d^α` for `d > R0`, skipping
/// nodes within two jumps of the truncation rim. When every exterior node
/// lies on the rim the fit is still computed from them but `ok` is false.
pub fn fit_distance_bound(profile: &DistanceProfile, r0: f64, alpha: f64) -> Result<DistanceBoundFit> {
    if !(r0 > 1.0) {
        return Err(MetricError::ParameterOutOfRange(format!("R0 = {r0} must exceed 1")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(MetricError::AlphaOutOfRange(alpha));
    }
    let exterior: Vec<&ProfileEntry> = profile.entries.iter().filter(|e| e.d > r0).collect();
    if exterior.is_empty() {
        return Err(MetricError::EmptyExterior(r0));
    }
    let rim_start = profile.rim_start();
    let interior: Vec<&ProfileEntry> = exterior.iter().copied().filter(|e| e.d <= rim_start).collect();
    let (pool, rim_only) = if interior.is_empty() { (exterior.clone(), true) } else { (interior, false) };

    let mut c_fit = 0.0;
    let mut argmax_d = None;
    for e in pool {
        if e.laplacian_d <= 0.0 {
            continue;
        }
        let c = e.laplacian_d * e.d.powf(alpha);
        if c > c_fit {
            c_fit = c;
            argmax_d = Some(e.d);
        }
    }
    Ok(DistanceBoundFit { c_fit, ok: c_fit.is_finite() && !rim_only, argmax_d, exterior_nodes: exterior.len(), rim_start })
}
