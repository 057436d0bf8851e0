//! Line-based graph text format.
//!
//! ```text
//! # comment
//! node <id> <mu>
//! edge <id1> <id2> <weight>
//! ```
//!
//! Writers emit all nodes, then one line per unordered edge, both in
//! dense-index order. Coordinate attributes are not stored; they are
//! recovered from canonical lattice ids such as `(1,-2)` and from product
//! ids `a|b` whose factors both carry coordinates.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::graph::{GraphBuilder, GraphError, WeightedGraph};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
}

pub fn parse_graph_str(text: &str, allow_disconnected: bool) -> Result<WeightedGraph, IoError> {
    let mut b = GraphBuilder::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |msg: String| IoError::Syntax { line: lineno + 1, msg };
        let tok: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| syntax(format!("`{s}` is not a number")));
        match tok[0] {
            "node" if tok.len() == 3 => {
                let mu = num(tok[2])?;
                match infer_attr(tok[1]) {
                    Some(a) => b.node_with_attr(tok[1], mu, a),
                    None => b.node(tok[1], mu),
                };
            }
            "edge" if tok.len() == 4 => {
                let w = num(tok[3])?;
                b.edge(tok[1], tok[2], w);
            }
            "node" | "edge" => {
                return Err(syntax(format!("wrong number of fields for `{}`: {}", tok[0], tok.len() - 1)));
            }
            other => return Err(syntax(format!("unknown record `{other}`"))),
        }
    }
    Ok(b.build(allow_disconnected)?)
}

pub fn parse_graph_file(path: impl AsRef<Path>, allow_disconnected: bool) -> Result<WeightedGraph, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IoError::File { path: path.display().to_string(), source })?;
    parse_graph_str(&text, allow_disconnected)
}

pub fn write_graph<W: Write>(g: &WeightedGraph, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# nodes={} edges={}", g.node_count(), g.edge_count())?;
    for x in 0..g.node_count() {
        writeln!(w, "node {} {}", g.id(x), g.mu(x))?;
    }
    for (x, y, wt) in g.edges() {
        writeln!(w, "edge {} {} {}", g.id(x), g.id(y), wt)?;
    }
    Ok(())
}

pub fn write_graph_file(g: &WeightedGraph, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let wrap = |source| IoError::File { path: path.display().to_string(), source };
    let file = fs::File::create(path).map_err(wrap)?;
    let mut out = std::io::BufWriter::new(file);
    write_graph(g, &mut out).map_err(wrap)?;
    out.flush().map_err(wrap)
}

fn infer_attr(id: &str) -> Option<Vec<i64>> {
    if let Some((a, b)) = id.split_once('|') {
        let mut left = infer_attr(a)?;
        left.extend(infer_attr(b)?);
        return Some(left);
    }
    let inner = id.strip_prefix('(')?.strip_suffix(')')?;
    inner.split(',').map(|c| c.parse().ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_lattice;

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let e = parse_graph_str("node a 1\n# c\nedge a\n", false).unwrap_err();
        assert!(matches!(e, IoError::Syntax { line: 3, .. }), "{e:?}");
        let e = parse_graph_str("vertex a 1\n", false).unwrap_err();
        assert!(matches!(e, IoError::Syntax { line: 1, .. }));
        let e = parse_graph_str("node a x\n", false).unwrap_err();
        assert!(matches!(e, IoError::Syntax { line: 1, .. }));
    }

    #[test]
    fn empty_file_rejected() {
        let e = parse_graph_str("# nothing\n\n", false).unwrap_err();
        assert!(matches!(e, IoError::Graph(GraphError::Empty)));
    }

    #[test]
    fn build_errors_propagate() {
        let e = parse_graph_str("node a 1\nnode b 1\nedge a b 1\nedge b a 2\n", false).unwrap_err();
        assert!(matches!(e, IoError::Graph(GraphError::AsymmetricDuplicate { .. })));
        let e = parse_graph_str("node a 1\nnode b 1\n", false).unwrap_err();
        assert!(matches!(e, IoError::Graph(GraphError::Disconnected { .. })));
    }

    #[test]
    fn lattice_coordinates_survive_round_trip() {
        let g = gen_lattice(2, 3.0).unwrap();
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        let h = parse_graph_str(std::str::from_utf8(&buf).unwrap(), false).unwrap();
        assert_eq!(h.node_count(), g.node_count());
        for x in 0..g.node_count() {
            assert_eq!(h.id(x), g.id(x));
            assert_eq!(h.attr(x), g.attr(x));
        }
        assert_eq!(infer_attr("(1,-2)|(3)"), Some(vec![1, -2, 3]));
        assert_eq!(infer_attr("(0)|g1"), None);
    }
}
