//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("irrep index out of range: nu={nu}, m={m}, l={l}")]
    BadIrrepIndex { nu: usize, m: usize, l: usize },
    #[error("grid function or grid is incompatible with the group action: {0}")]
    IncompatibleGrid(String),
    #[error("even partition count {0} would place nodes on a coordinate plane")]
    EvenPartitionRejected(usize),
    #[error("grid is not invariant under operation `{label}`: node {node} maps off the grid")]
    GridNotInvariant { label: String, node: usize },
    #[error("node {node} lies on the symmetry element of `{label}` (distance {dist:.3e})")]
    SymmetryElementNode {
        node: usize,
        label: String,
        dist: f64,
    },
    #[error("irrep dimension {0} is not supported for reduced assembly (only 1 and 2)")]
    UnsupportedIrrepDim(usize),
    #[error(
        "eigensolver did not converge within {restarts} restarts ({converged}/{requested} pairs)"
    )]
    MaxIterations {
        restarts: usize,
        converged: usize,
        requested: usize,
    },
    #[error("mass matrix factorization failed; matrix is not positive definite")]
    IndefiniteMass,
    #[error("no group element with an independent first column exists for irrep {0}")]
    NoIndependentColumn(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("problem size {n} exceeds the dense-path guard {limit}")]
    SizeGuard { n: usize, limit: usize },
    #[error("degenerate statistics: {0}")]
    DegenerateStats(String),
    #[error("invalid group definition: {0}")]
    GroupDefinition(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
