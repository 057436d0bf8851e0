//! Weighted graphs `(V, ω, μ)` and the discrete calculus on them.
//!
//! Adjacency is stored in compressed sparse row layout keyed by dense node
//! index. All reductions run in dense-index order so that results are
//! reproducible bit for bit on a single thread.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

/// Default absolute tolerance for the integration-by-parts identity.
pub const DEFAULT_TOL_IBP: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("node `{id}` has non-positive measure {mu}")]
    NonPositiveMeasure { id: String, mu: f64 },
    #[error("edge `{a}`-`{b}` has non-positive weight {weight}")]
    NonPositiveWeight { a: String, b: String, weight: f64 },
    #[error("self loop at node `{0}`")]
    SelfLoop(String),
    #[error("edge `{a}`-`{b}` listed with different weights {w1} and {w2}")]
    AsymmetricDuplicate { a: String, b: String, w1: f64, w2: f64 },
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("graph has no nodes")]
    Empty,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("function length {got} does not match node count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite function value at index {0}")]
    NonFinite(usize),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// A real function on the nodes of a graph, aligned with its dense index.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFunction(Vec<f64>);

impl NodeFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GraphError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new((0..n).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for NodeFunction {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Immutable weighted graph with symmetric edge weights and a positive node
/// measure.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    mu: Vec<f64>,
    attrs: Vec<Option<Vec<i64>>>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    row_sums: Vec<f64>,
    connected: bool,
}

/// Incremental constructor for [`WeightedGraph`]. Validation happens in
/// [`GraphBuilder::build`].
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    nodes: Vec<(String, f64, Option<Vec<i64>>)>,
    edges: Vec<(String, String, f64)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        Self { nodes: Vec::with_capacity(nodes), edges: Vec::with_capacity(edges) }
    }

    pub fn node(&mut self, id: impl Into<String>, mu: f64) -> &mut Self {
        self.nodes.push((id.into(), mu, None));
        self
    }

    pub fn node_with_attr(&mut self, id: impl Into<String>, mu: f64, attr: Vec<i64>) -> &mut Self {
        self.nodes.push((id.into(), mu, Some(attr)));
        self
    }

    pub fn edge(&mut self, a: impl Into<String>, b: impl Into<String>, weight: f64) -> &mut Self {
        self.edges.push((a.into(), b.into(), weight));
        self
    }

    pub fn build(self, allow_disconnected: bool) -> Result<WeightedGraph> {
        let GraphBuilder { nodes, edges } = self;
        if nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut index = HashMap::with_capacity(nodes.len());
        let mut ids = Vec::with_capacity(nodes.len());
        let mut mu = Vec::with_capacity(nodes.len());
        let mut attrs = Vec::with_capacity(nodes.len());
        for (i, (id, m, attr)) in nodes.into_iter().enumerate() {
            if !(m > 0.0 && m.is_finite()) {
                return Err(GraphError::NonPositiveMeasure { id, mu: m });
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode(id));
            }
            ids.push(id);
            mu.push(m);
            attrs.push(attr);
        }

        let mut pairs: HashMap<(usize, usize), f64> = HashMap::with_capacity(edges.len());
        let mut order = Vec::with_capacity(edges.len());
        for (a, b, w) in edges {
            let ia = *index.get(&a).ok_or_else(|| GraphError::UnknownNode(a.clone()))?;
            let ib = *index.get(&b).ok_or_else(|| GraphError::UnknownNode(b.clone()))?;
            if ia == ib {
                return Err(GraphError::SelfLoop(a));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(GraphError::NonPositiveWeight { a, b, weight: w });
            }
            let key = (ia.min(ib), ia.max(ib));
            match pairs.get(&key) {
                Some(&prev) if prev != w => {
                    return Err(GraphError::AsymmetricDuplicate { a, b, w1: prev, w2: w });
                }
                Some(_) => {}
                None => {
                    pairs.insert(key, w);
                    order.push(key);
                }
            }
        }

        let n = ids.len();
        let mut degree = vec![0usize; n];
        for &(a, b) in &order {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + degree[i];
        }
        let mut fill = row_ptr.clone();
        let mut cols = vec![0usize; row_ptr[n]];
        let mut weights = vec![0.0; row_ptr[n]];
        for &(a, b) in &order {
            let w = pairs[&(a, b)];
            cols[fill[a]] = b;
            weights[fill[a]] = w;
            fill[a] += 1;
            cols[fill[b]] = a;
            weights[fill[b]] = w;
            fill[b] += 1;
        }
        // sort each row by column so iteration order depends only on the node set
        for i in 0..n {
            let (s, e) = (row_ptr[i], row_ptr[i + 1]);
            let mut row: Vec<(usize, f64)> = cols[s..e].iter().copied().zip(weights[s..e].iter().copied()).collect();
            row.sort_unstable_by_key(|&(c, _)| c);
            for (k, (c, w)) in row.into_iter().enumerate() {
                cols[s + k] = c;
                weights[s + k] = w;
            }
        }
        let row_sums = (0..n).map(|i| weights[row_ptr[i]..row_ptr[i + 1]].iter().sum()).collect();

        let mut g = WeightedGraph { ids, index, mu, attrs, row_ptr, cols, weights, row_sums, connected: false };
        let components = g.component_count();
        g.connected = components == 1;
        if !g.connected && !allow_disconnected {
            return Err(GraphError::Disconnected { components });
        }
        Ok(g)
    }
}

/// Builds a graph from `(id, μ)` pairs and `(id, id, ω)` triples.
pub fn build_graph<S: AsRef<str>>(nodes: &[(S, f64)], edges: &[(S, S, f64)], allow_disconnected: bool) -> Result<WeightedGraph> {
    let mut b = GraphBuilder::with_capacity(nodes.len(), edges.len());
    for (id, mu) in nodes {
        b.node(id.as_ref(), *mu);
    }
    for (x, y, w) in edges {
        b.edge(x.as_ref(), y.as_ref(), *w);
    }
    b.build(allow_disconnected)
}

impl WeightedGraph {
    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    /// Number of unordered edges.
    pub fn edge_count(&self) -> usize {
        self.cols.len() / 2
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn id(&self, x: usize) -> &str {
        &self.ids[x]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub fn mu(&self, x: usize) -> f64 {
        self.mu[x]
    }

    pub fn measures(&self) -> &[f64] {
        &self.mu
    }

    pub fn attr(&self, x: usize) -> Option<&[i64]> {
        self.attrs[x].as_deref()
    }

    /// Neighbours of `x` with their edge weights, in increasing index order.
    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_ptr[x], self.row_ptr[x + 1]);
        self.cols[s..e].iter().copied().zip(self.weights[s..e].iter().copied())
    }

    pub fn degree(&self, x: usize) -> usize {
        self.row_ptr[x + 1] - self.row_ptr[x]
    }

    /// `Σ_y ω_xy`.
    pub fn row_sum(&self, x: usize) -> f64 {
        self.row_sums[x]
    }

    /// Iterates unordered edges `(x, y, ω)` with `x < y`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.node_count()).flat_map(move |x| self.neighbors(x).filter(move |&(y, _)| y > x).map(move |(y, w)| (x, y, w)))
    }

    pub fn contains(&self, x: usize) -> bool {
        x < self.node_count()
    }

    fn check_index(&self, x: usize) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(format!("#{x}")))
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.node_count() {
            Ok(())
        } else {
            Err(GraphError::LengthMismatch { expected: self.node_count(), got: len })
        }
    }

    /// Hop distances from `source`; `None` for unreachable nodes.
    pub fn bfs_hops(&self, source: usize) -> Vec<Option<u32>> {
        self.multi_source_hops(std::iter::once(source))
    }

    /// Hop distance to the nearest of several sources.
    pub fn multi_source_hops(&self, sources: impl IntoIterator<Item = usize>) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        for s in sources {
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(x) = queue.pop_front() {
            let dx = dist[x].unwrap();
            for (y, _) in self.neighbors(x) {
                if dist[y].is_none() {
                    dist[y] = Some(dx + 1);
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    fn component_count(&self) -> usize {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(x) = stack.pop() {
                for (y, _) in self.neighbors(x) {
                    if !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        count
    }

    /// `∇_xy f = f(y) − f(x)`.
    pub fn difference(&self, f: &NodeFunction, x: usize, y: usize) -> Result<f64> {
        self.check_len(f.len())?;
        self.check_index(x)?;
        self.check_index(y)?;
        Ok(f[y] - f[x])
    }

    /// `(Δf)(x) = μ(x)^{-1} Σ_y ω_xy (f(y) − f(x))`.
    pub fn laplacian(&self, f: &NodeFunction) -> Result<NodeFunction> {
        self.check_len(f.len())?;
        let mut out = vec![0.0; f.len()];
        self.apply_laplacian(f.values(), &mut out);
        Ok(NodeFunction(out))
    }

    /// Unchecked Laplacian on raw slices; both must have `node_count` entries.
    pub fn apply_laplacian(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.node_count());
        debug_assert_eq!(out.len(), self.node_count());
        for (x, o) in out.iter_mut().enumerate() {
            *o = self.laplacian_at(f, x);
        }
    }

    pub fn laplacian_at(&self, f: &[f64], x: usize) -> f64 {
        let fx = f[x];
        let mut acc = 0.0;
        for (y, w) in self.neighbors(x) {
            acc += w * (f[y] - fx);
        }
        acc / self.mu[x]
    }

    /// Residual of the integration-by-parts identity
    /// `Σ (Δf) h μ = −½ Σ_{x,y} ω_xy ∇_xy f ∇_xy h`.
    pub fn ibp_residual(&self, f: &NodeFunction, h: &NodeFunction) -> Result<f64> {
        self.check_len(f.len())?;
        self.check_len(h.len())?;
        let (f, h) = (f.values(), h.values());
        let mut lhs = 0.0;
        let mut dirichlet = 0.0;
        for x in 0..self.node_count() {
            lhs += self.laplacian_at(f, x) * h[x] * self.mu[x];
            for (y, w) in self.neighbors(x) {
                dirichlet += w * (f[y] - f[x]) * (h[y] - h[x]);
            }
        }
        Ok((lhs + 0.5 * dirichlet).abs())
    }

    /// `Σ_{x ∈ subset} μ(x)`.
    pub fn volume(&self, subset: &[usize]) -> Result<f64> {
        let mut v = 0.0;
        for &x in subset {
            self.check_index(x)?;
            v += self.mu[x];
        }
        Ok(v)
    }

    pub fn volume_of_ids<S: AsRef<str>>(&self, ids: &[S]) -> Result<f64> {
        let idx = ids.iter().map(|s| self.index_of(s.as_ref())).collect::<Result<Vec<_>>>()?;
        self.volume(&idx)
    }

    pub fn total_volume(&self) -> f64 {
        self.mu.iter().sum()
    }

    /// `sup_x Σ_y ω_xy / μ(x)`: the smallest admissible constant in the
    /// row-sum bound `Σ_y ω_xy ≤ C μ(x)`.
    pub fn row_sum_ratio(&self) -> f64 {
        (0..self.node_count()).map(|x| self.row_sums[x] / self.mu[x]).fold(0.0, f64::max)
    }

    pub fn max_row_sum(&self) -> f64 {
        self.row_sums.iter().copied().fold(0.0, f64::max)
    }
}
