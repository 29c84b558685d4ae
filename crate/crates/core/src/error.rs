use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge list is empty")]
    EmptyGraph,
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("vertex ids must form 0..{expected}; vertex {missing} has no edge")]
    IsolatedVertex { expected: usize, missing: usize },
    #[error("vertex {vertex} out of range for graph with {len} vertices")]
    InvalidVertex { vertex: usize, len: usize },
    #[error("enumeration needs {needed} states, cap is {cap}")]
    CapExceeded { needed: u128, cap: u128 },
    #[error("boundary does not assign vertex {0}, which lies within distance 2 of the region")]
    IncompleteBoundary(usize),
    #[error(
        "belief propagation did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("distribution domains differ: {0}")]
    DomainMismatch(String),
    #[error("perturbation of magnitude {magnitude} leaves the probability simplex")]
    PerturbationInfeasible { magnitude: f64 },
    #[error(
        "marginals inconsistent on edge {{{u}, {v}}}: total variation {tv:e} exceeds {tolerance:e}"
    )]
    InconsistentMarginals {
        u: usize,
        v: usize,
        tv: f64,
        tolerance: f64,
    },
    #[error("local rule is not invariant under pattern canonicalization: {0}")]
    NotInvariant(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
