use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("value lives on a different space")]
    SpaceMismatch,
    #[error("partition is not compatible with the space: {0}")]
    IncompatiblePartition(String),
    #[error("empty family")]
    EmptyFamily,
    #[error("epsilon must be positive, atom {atom} has {value}")]
    NonPositiveEpsilon { atom: usize, value: f64 },
    #[error("norm exponent must satisfy p > 1, got {0}")]
    InvalidExponent(f64),
    #[error("not measurable: {0}")]
    NotMeasurable(String),
    #[error("martingale identity fails at time index {time} (deviation {deviation:e})")]
    NotMartingale { time: usize, deviation: f64 },
    #[error("degenerate driver increments at step {step}, node {node}")]
    DegenerateDrivers { step: usize, node: usize },
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
    #[error("budget violated on block {block}: {detail}")]
    BudgetViolated { block: usize, detail: String },
    #[error("no convergence after {iterations} iterations (worst residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("iteration diverged after {iterations} iterations")]
    Diverged { iterations: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("self-map check failed on block {block}: |||G(V) - center||| = {value:e} > radius {radius:e}")]
    BallSelfMap { block: usize, value: f64, radius: f64 },
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
