use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("degenerate set: {0}")]
    DegenerateSet(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("adaptive quadrature did not converge on [{a}, {b}]")]
    QuadratureNonConvergence { a: f64, b: f64 },

    #[error("double-well assumption violated at t = {t}: {reason}")]
    AssumptionViolation { t: f64, reason: String },

    #[error("operation undefined for the zero measure")]
    ZeroMeasure,

    #[error("conjugate gradients hit the iteration cap ({iterations}) with relative residual {residual:e}")]
    CgDivergence { iterations: usize, residual: f64 },

    #[error("no progress: step size fell to {tau:e}")]
    NoProgress { tau: f64 },

    #[error("gradient flow not stationary after {iterations} iterations (last relative change {change:e})")]
    NonStationary { iterations: usize, change: f64 },

    #[error("transport solver failed: {0}")]
    Transport(String),

    #[error("at ladder point eps = {eps}: {source}")]
    AtLadderPoint {
        eps: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("truncated image file")]
    TruncatedFile,

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
