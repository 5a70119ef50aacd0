//! Smooth double proximal primal-dual dynamics for distributed consensus
//! optimization of single-smooth plus double-nonsmooth objectives.
//!
//! Agent `i` holds `f⁰_i + f¹_i + f²_i` with `f⁰_i` smooth and strongly convex
//! and `f¹_i`, `f²_i` proximable. The network minimizes `Σ_i` of these costs
//! subject to consensus over a weighted undirected graph.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod problem;
pub mod prox;

pub use diagnostics::{EquilibriumCertificate, ResidualReport};
pub use dynamics::{AlgorithmParams, Dynamics, Method, SystemState, Trajectory, Variant};
pub use error::{Error, Result};
pub use graph::{Edge, Graph, LaplacianData};
pub use problem::{AgentObjective, ProblemSpec, SmoothFunction};
pub use prox::ProximableFunction;
