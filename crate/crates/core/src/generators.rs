//! Example graph families: truncated integer lattices, homogeneous trees,
//! cyclic Cayley graphs and cartesian products.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphBuilder, GraphError, WeightedGraph};
use crate::io::{parse_graph_file, IoError};

/// Node-count cap for [`gen_product`].
pub const DEFAULT_PRODUCT_CAP: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("lattice dimension must be >= 1, got {0}")]
    BadDimension(usize),
    #[error("truncation radius must be >= 1, got {0}")]
    BadRadius(f64),
    #[error("tree degree must be >= 2, got {0}")]
    BadDegree(usize),
    #[error("tree depth must be >= 1, got {0}")]
    BadDepth(usize),
    #[error("cyclic group order must be >= 3, got {0}")]
    BadOrder(usize),
    #[error("product would have {nodes} nodes, above the cap of {cap}")]
    ProductTooLarge { nodes: usize, cap: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureRule {
    #[default]
    Max,
    Sum,
}

/// Serializable description of a generated graph, `{"family": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Lattice {
        dim: usize,
        radius: f64,
    },
    Tree {
        degree: usize,
        depth: usize,
    },
    CycleGroup {
        order: usize,
    },
    Product {
        left: Box<GeneratorSpec>,
        right: Box<GeneratorSpec>,
        #[serde(default)]
        measure_rule: MeasureRule,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    File {
        path: PathBuf,
    },
}

fn default_alpha() -> f64 {
    1.0
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<WeightedGraph, GenError> {
        match self {
            GeneratorSpec::Lattice { dim, radius } => gen_lattice(*dim, *radius),
            GeneratorSpec::Tree { degree, depth } => gen_tree(*degree, *depth),
            GeneratorSpec::CycleGroup { order } => gen_cycle_group(*order),
            GeneratorSpec::Product { left, right, measure_rule, .. } => gen_product(&left.build()?, &right.build()?, *measure_rule),
            GeneratorSpec::File { path } => Ok(parse_graph_file(path, false)?),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            GeneratorSpec::Lattice { .. } => "lattice",
            GeneratorSpec::Tree { .. } => "tree",
            GeneratorSpec::CycleGroup { .. } => "cycle_group",
            GeneratorSpec::Product { .. } => "product",
            GeneratorSpec::File { .. } => "file",
        }
    }

    /// The family's dimension-like parameter (lattice dimension, tree degree,
    /// group order; left factor for products).
    pub fn size_param(&self) -> usize {
        match self {
            GeneratorSpec::Lattice { dim, .. } => *dim,
            GeneratorSpec::Tree { degree, .. } => *degree,
            GeneratorSpec::CycleGroup { order } => *order,
            GeneratorSpec::Product { left, .. } => left.size_param(),
            GeneratorSpec::File { .. } => 0,
        }
    }
}

/// Canonical id of a lattice point, e.g. `(1,-2)`.
pub fn lattice_id(coords: &[i64]) -> String {
    let parts: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
    format!("({})", parts.join(","))
}

/// `{x ∈ ℤ^N : |x| ≤ R}` with unit weights between nearest neighbours and
/// `μ ≡ 2N`, rim nodes included.
pub fn gen_lattice(dim: usize, radius: f64) -> Result<WeightedGraph, GenError> {
    if dim == 0 {
        return Err(GenError::BadDimension(dim));
    }
    if !(radius >= 1.0) || !radius.is_finite() {
        return Err(GenError::BadRadius(radius));
    }
    let r = radius.floor() as i64;
    let r2 = radius * radius;
    let side = (2 * r + 1) as usize;
    let mut points = Vec::new();
    // lexicographic order, last coordinate fastest
    for code in 0..side.pow(dim as u32) {
        let mut rest = code;
        let mut p = vec![0i64; dim];
        for k in (0..dim).rev() {
            p[k] = (rest % side) as i64 - r;
            rest /= side;
        }
        let norm2: i64 = p.iter().map(|c| c * c).sum();
        if norm2 as f64 <= r2 {
            points.push(p);
        }
    }

    let index: HashMap<&[i64], usize> = points.iter().enumerate().map(|(i, p)| (p.as_slice(), i)).collect();
    let ids: Vec<String> = points.iter().map(|p| lattice_id(p)).collect();
    let mu = 2.0 * dim as f64;
    let mut b = GraphBuilder::with_capacity(points.len(), points.len() * dim);
    for (id, p) in ids.iter().zip(&points) {
        b.node_with_attr(id.clone(), mu, p.clone());
    }
    let mut nb = vec![0i64; dim];
    for (i, p) in points.iter().enumerate() {
        for k in 0..dim {
            nb.copy_from_slice(p);
            nb[k] += 1;
            if let Some(&j) = index.get(nb.as_slice()) {
                b.edge(ids[i].clone(), ids[j].clone(), 1.0);
            }
        }
    }
    Ok(b.build(false)?)
}

/// Homogeneous tree of degree `N` truncated at `depth`: the root `r` has
/// `N+1` children, every other non-leaf has `N`. Edge weight `1/(N+1)`,
/// `μ ≡ N+1`. Ids are root paths (`r.0.2`); the level is stored as attribute.
pub fn gen_tree(degree: usize, depth: usize) -> Result<WeightedGraph, GenError> {
    if degree < 2 {
        return Err(GenError::BadDegree(degree));
    }
    if depth < 1 {
        return Err(GenError::BadDepth(depth));
    }
    let n1 = (degree + 1) as f64;
    let w = 1.0 / n1;
    let mut b = GraphBuilder::new();
    b.node_with_attr("r", n1, vec![0]);
    let mut frontier = vec!["r".to_string()];
    for level in 1..=depth {
        let mut next = Vec::with_capacity(frontier.len() * degree);
        for parent in &frontier {
            let kids = if level == 1 { degree + 1 } else { degree };
            for c in 0..kids {
                let id = format!("{parent}.{c}");
                b.node_with_attr(id.clone(), n1, vec![level as i64]);
                b.edge(parent.clone(), id.clone(), w);
                next.push(id);
            }
        }
        frontier = next;
    }
    Ok(b.build(false)?)
}

/// Cayley graph of `ℤ_n` with generators `±1`: a cycle with unit weights and
/// `μ ≡ 2`. Ids are `g0 … g{n-1}`.
pub fn gen_cycle_group(order: usize) -> Result<WeightedGraph, GenError> {
    if order < 3 {
        return Err(GenError::BadOrder(order));
    }
    let mut b = GraphBuilder::with_capacity(order, order);
    for k in 0..order {
        b.node_with_attr(format!("g{k}"), 2.0, vec![k as i64]);
    }
    for k in 0..order {
        b.edge(format!("g{k}"), format!("g{}", (k + 1) % order), 1.0);
    }
    Ok(b.build(false)?)
}

pub fn gen_product(g1: &WeightedGraph, g2: &WeightedGraph, rule: MeasureRule) -> Result<WeightedGraph, GenError> {
    gen_product_capped(g1, g2, rule, DEFAULT_PRODUCT_CAP)
}

/// Cartesian product with node order `i1 * |V2| + i2`; an edge moves in
/// exactly one factor and carries that factor's weight. Ids are `id1|id2`.
pub fn gen_product_capped(g1: &WeightedGraph, g2: &WeightedGraph, rule: MeasureRule, cap: usize) -> Result<WeightedGraph, GenError> {
    let (n1, n2) = (g1.node_count(), g2.node_count());
    let nodes = n1.saturating_mul(n2);
    if nodes > cap {
        return Err(GenError::ProductTooLarge { nodes, cap });
    }
    let ids: Vec<String> = (0..nodes).map(|x| format!("{}|{}", g1.id(x / n2), g2.id(x % n2))).collect();
    let mut b = GraphBuilder::with_capacity(nodes, n1 * g2.edge_count() + n2 * g1.edge_count());
    for (x, id) in ids.iter().enumerate() {
        let (a, c) = (x / n2, x % n2);
        let mu = match rule {
            MeasureRule::Max => g1.mu(a).max(g2.mu(c)),
            MeasureRule::Sum => g1.mu(a) + g2.mu(c),
        };
        match (g1.attr(a), g2.attr(c)) {
            (Some(p), Some(q)) => {
                let mut attr = p.to_vec();
                attr.extend_from_slice(q);
                b.node_with_attr(id.clone(), mu, attr);
            }
            _ => {
                b.node(id.clone(), mu);
            }
        }
    }
    for (a, a2, w) in g1.edges() {
        for c in 0..n2 {
            b.edge(ids[a * n2 + c].clone(), ids[a2 * n2 + c].clone(), w);
        }
    }
    for a in 0..n1 {
        for (c, c2, w) in g2.edges() {
            b.edge(ids[a * n2 + c].clone(), ids[a * n2 + c2].clone(), w);
        }
    }
    let allow = !(g1.is_connected() && g2.is_connected());
    Ok(b.build(allow)?)
}

/// Conventional base point for a generated family: the lattice origin, the
/// tree root, `g0`, or the product of the factors' base points.
pub fn base_point(spec: &GeneratorSpec, g: &WeightedGraph) -> usize {
    fn base_id(spec: &GeneratorSpec) -> Option<String> {
        match spec {
            GeneratorSpec::Lattice { dim, .. } => Some(lattice_id(&vec![0; *dim])),
            GeneratorSpec::Tree { .. } => Some("r".into()),
            GeneratorSpec::CycleGroup { .. } => Some("g0".into()),
            GeneratorSpec::Product { left, right, .. } => Some(format!("{}|{}", base_id(left)?, base_id(right)?)),
            GeneratorSpec::File { .. } => None,
        }
    }
    base_id(spec).and_then(|id| g.index_of(&id).ok()).unwrap_or(0)
}
