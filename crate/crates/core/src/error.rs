use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-monotone time axis at sample {index}")]
    NonMonotoneTime { index: usize },

    #[error("query ({x}, {y}) at t = {t} lies outside the field domain")]
    OutOfDomain { x: f64, y: f64, t: f64 },

    #[error("trajectory left the domain at t = {time}")]
    DomainExit { time: f64 },

    #[error("step size underflow at t = {time}")]
    StepUnderflow { time: f64 },

    #[error("step limit of {0} exceeded")]
    TooManySteps(usize),

    #[error("matrix is singular or not finite")]
    SingularMatrix,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("spectral state blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("forcing band [{lo}, {hi}] contains no admissible modes for N = {n}")]
    EmptyBand { lo: f64, hi: f64, n: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
