use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for {len} elements")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("duplicate edge {from} -> {target}")]
    DuplicateEdge { from: usize, target: usize },

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("creator index {index} invalid for {n_creators} creators")]
    InvalidCreator { index: usize, n_creators: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible parameter bounds: {0}")]
    InfeasibleBounds(String),

    #[error("cluster count {k} invalid for {n} points")]
    InvalidClusterCount { k: usize, n: usize },

    #[error("silhouette needs at least two non-empty clusters")]
    TooFewClusters,

    #[error("consumption log is empty")]
    EmptyLog,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("no edges found in {0}")]
    EmptyEdgeList(PathBuf),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("fixed-point system is not contractive (spectral radius {spectral_radius})")]
    Unstable { spectral_radius: f64 },

    #[error("user {0} has no social neighbours")]
    NoNeighbours(usize),

    #[error("opinion of {kind} {index} left [-1, 1] at t={t}: {value}")]
    ConvexityViolation {
        kind: &'static str,
        index: usize,
        t: usize,
        value: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
