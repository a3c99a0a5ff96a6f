use thiserror::Error;

/// Errors raised by the graph, algebra, refinement and task routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) does not exist")]
    UnknownEdge(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("graph with {n} nodes exceeds the size cap of {cap}")]
    SizeCap { n: usize, cap: usize },
    #[error("operation requires an undirected graph")]
    DirectedInput,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),
    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("partitions come from different refinement algorithms ({0} vs {1})")]
    ProvenanceMismatch(&'static str, &'static str),
    #[error("support set is empty")]
    EmptySupport,
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
