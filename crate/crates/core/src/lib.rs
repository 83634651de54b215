//! Independent sets in the middle two layers of the Boolean lattice.
//!
//! The crate builds the bipartite graph B(2d-1, d), defines the polymer model
//! whose configurations are the "defects" on one side, evaluates the cluster
//! expansion of its partition function term by term, and checks every
//! approximation against exact enumeration at small d.

pub mod cluster;
pub mod error;
pub mod exec;
pub mod lattice;
pub mod oracle;
pub mod polymer;
pub mod sampler;
pub mod scalar;

pub use error::{Error, Result};
pub use exec::Exec;
pub use lattice::{LayerGraph, Side, Vertex, VertexSet};
pub use scalar::{ExactScalar, Fugacity};
