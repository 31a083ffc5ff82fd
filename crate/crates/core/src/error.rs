use thiserror::Error;

/// Errors raised anywhere in the differentiation engine or the simulator.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error in {op}: real part {value} outside the function's domain")]
    Domain { op: &'static str, value: f64 },

    #[error("domain error recorded on tape at node {node}: {op} with real part {value}")]
    TapeDomain {
        node: usize,
        op: &'static str,
        value: f64,
    },

    #[error("tape node budget of {budget} exceeded")]
    TapeBudget { budget: usize },

    #[error("no tape is active on this thread")]
    NoTape,

    #[error("a tape is already being recorded on this thread")]
    TapeBusy,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("matrix is ill-conditioned (estimated condition {cond:e} > {limit:e})")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("iteration failed to converge: {0}")]
    NoConvergence(String),

    #[error("contact feasibility violated: {0}")]
    Feasibility(String),

    #[error("forward step did not converge after {iterations} iterations (residual history {history:?})")]
    ForwardNonConvergence { iterations: usize, history: Vec<f64> },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("invalid muscle setup: {0}")]
    Muscle(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("Hessian column {column} failed: {source}")]
    HessianColumn { column: usize, source: Box<Error> },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
