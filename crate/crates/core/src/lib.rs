//! Weighted-graph calculus and numerical experiments for Fujita-type
//! nonexistence results for `u_t ≥ Δ(F(u)) + v u^σ` on weighted graphs.
//!
//! The crate is split along the theory:
//!
//! * [`graph`]: weighted graphs `(V, ω, μ)`, the difference operator, the
//!   weighted Laplacian, volumes and the integration-by-parts identity.
//! * [`metrics`]: pseudo-metrics, jump sizes, balls and the distance
//!   Laplacian bound.
//! * [`generators`] and [`io`]: example families and the graph text format.
//! * [`hypotheses`]: empirical checkers for the integral hypotheses and the
//!   exponent conditions of the nonexistence theorems.
//! * [`cutoff`]: the C² plateau profile and the space-time cutoff family.
//! * [`dynamics`]: explicit integration of `u_t = Δ(F(u)) + v u^σ` with
//!   outcome classification and the very weak residual.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cutoff;
pub mod dynamics;
pub mod generators;
pub mod graph;
pub mod hypotheses;
pub mod io;
pub mod metrics;
pub mod potential;

pub use graph::{build_graph, GraphBuilder, GraphError, NodeFunction, WeightedGraph};
pub use metrics::PseudoMetric;
