use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown action index {0}")]
    UnknownAction(usize),
    #[error("unknown builtin `{0}`")]
    UnknownName(String),
    #[error("invalid system specification: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cholesky factorization failed at jitter {jitter:e}")]
    Factorization { jitter: f64 },
    #[error("non-finite training loss at epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("label region boundary at {value} in dimension {dim} does not align with the grid")]
    Misaligned { dim: usize, value: f64 },
    #[error("interval transition row ({state}, {action}) infeasible: sum lo = {sum_lo}, sum hi = {sum_hi}")]
    InfeasibleIntervals { state: usize, action: usize, sum_lo: f64, sum_hi: f64 },
    #[error("proposition `{0}` is not in the automaton alphabet")]
    AlphabetMismatch(String),
    #[error("strategy has no entry for product state {0}")]
    MissingStrategy(usize),
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
}
