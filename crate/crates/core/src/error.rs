use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("connectivity budget exhausted after {attempts} attempts (n={n}, radius={radius})")]
    ConnectivityBudgetExhausted { n: usize, radius: f64, attempts: u32 },
    #[error("degenerate robust parameters: K={k}, c={c}, delta={delta}")]
    DegenerateRobustParameters { k: usize, c: f64, delta: f64 },
    #[error("node {0} has no neighbours")]
    IsolatedNode(usize),
    #[error("matrix is not row-stochastic: {0}")]
    NotStochastic(String),
    #[error("power iteration did not converge after {0} iterations")]
    NotConverged(usize),
    #[error("graph generation failed: {0}")]
    GraphGeneration(Box<Error>),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("malformed input: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
