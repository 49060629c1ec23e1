use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every module of the toolkit.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid alphabet size {0}: need at least 2 phase levels")]
    InvalidAlphabet(usize),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("delay {tau} out of range for length {n} (|tau| must be <= {})", n - 1)]
    DelayOutOfRange { tau: i64, n: usize },

    #[error("grid bounds invalid: {0}")]
    GridBounds(String),

    #[error("empty sidelobe region: no searchable cell with positive weight")]
    EmptyRoi,

    #[error("mainlobe degenerate: |h^H x| = {inner:e} below {floor:e}")]
    DegenerateMainlobe { inner: f64, floor: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid loss target: {0}")]
    InvalidTarget(String),

    #[error("non-finite gradient: optimizer step aborted ({0})")]
    AbortStep(String),

    #[error("filter column {column} has zero energy: projection undefined")]
    ProjectionDegenerate { column: usize },

    #[error("enumeration budget exceeded: instance needs {required} evaluations, budget is {budget}")]
    BudgetExceeded { required: f64, budget: u64 },

    #[error("config validation failed at `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("run aborted at outer iteration {iter}: {message}")]
    RunAborted { iter: usize, message: String },
}
