use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})")]
    NotPositiveDefinite {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("matrix is not Hermitian (asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("Toeplitz coefficient must satisfy |rho| < 1, got |rho| = {modulus}")]
    InvalidCoefficient { modulus: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("texture {index} is not a positive finite number: {value}")]
    NonPositiveTexture { index: usize, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("zero sample at index {0}")]
    ZeroSample(usize),

    #[error("at least {required} frames are required, got {got}")]
    TooFewFrames { required: usize, got: usize },

    #[error("window {window} does not fit in a {height}x{width} image (window must be odd and no larger than the image)")]
    WindowTooLarge {
        window: usize,
        height: usize,
        width: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("payload size mismatch: expected {expected} bytes, found {actual} bytes")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// True for failures of the numerical procedures themselves, as opposed
    /// to bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NotConverged { .. }
                | Error::NonFinite(_)
                | Error::ZeroSample(_)
                | Error::InsufficientSamples(_)
        )
    }
}
