use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("order {k} exceeds the configured maximum {max}")]
    OrderTooLarge { k: usize, max: usize },

    #[error("expansion order must be at least 1")]
    ZeroOrder,

    #[error("derivative of order {needed} requested but the oracle only supports up to {beta_max}")]
    OracleOrderExceeded { needed: usize, beta_max: usize },

    #[error("solution left the box [{lo}, {hi}] at x = {x}")]
    BoxExit { x: f64, lo: f64, hi: f64 },

    #[error("adaptive step fell below {min_step:e} at x = {x}")]
    StepUnderflow { x: f64, min_step: f64 },

    #[error("hypothesis violated: |D^({px},{py}) f| = {value} > 1 + tol at x = {x}")]
    HypothesisViolated { px: usize, py: usize, x: f64, value: f64 },

    #[error("delta = {delta} is outside the admissible range {range}")]
    DeltaOutOfRange { delta: f64, range: String },

    #[error("gamma = {gamma} unsupported: {reason}")]
    GammaUnsupported { gamma: usize, reason: String },

    #[error("no radius in (0, sigma] satisfies the entropy-integral inequality")]
    NoSolutionInRange,

    #[error("input outside the domain: {0}")]
    DomainError(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge within {iterations} iterations (kkt residual {kkt_residual:e})")]
    MaxIterations { iterations: usize, kkt_residual: f64 },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("ODE integration failed: {0}")]
    IntegrationFailure(String),

    #[error("x = {x} lies beyond the existence interval end {end}")]
    DomainExceeded { x: f64, end: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
