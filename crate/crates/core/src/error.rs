use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("class {class} has {available} examples but {required} are required")]
    InsufficientData {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error(
        "chunk size {chunk_size} cannot form fully balanced chunks; largest feasible chunk size \
         not above it is {largest_feasible:?}"
    )]
    BalanceInfeasible {
        chunk_size: usize,
        largest_feasible: Option<usize>,
    },

    #[error("chunk {0} is empty")]
    EmptyChunk(usize),

    #[error("parameter layouts differ")]
    LayoutMismatch,

    #[error("singular system: {0}; retry with a positive jitter")]
    SingularSystem(String),

    #[error("posterior precision is singular; more data (or a proper prior) is needed")]
    SingularPosterior,

    #[error(
        "bound inapplicable: epsilon {epsilon} >= lambda_d {lambda_d}; smallest applicable chunk \
         size is {min_applicable_s}"
    )]
    BoundInapplicable {
        epsilon: f64,
        lambda_d: f64,
        min_applicable_s: u64,
    },

    #[error("averager has not received any checkpoint")]
    NoUpdates,

    #[error("rejection sampling acceptance rate {rate:.2e} is below 1e-3; truncation radius too small")]
    RejectionRate { rate: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
