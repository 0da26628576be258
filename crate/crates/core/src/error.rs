use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("{what} = {value} is outside {range}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: String,
    },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("images have mixed shapes: {expected:?} vs {found:?} ({path})")]
    MixedShapes {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
        path: String,
    },
    #[error("unsupported image: {0}")]
    UnsupportedFormat(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("singular frequency bin: |c2 + f| < 1e-6 at f = {f}, c2 = {c2}")]
    SingularBin { f: f64, c2: f64 },
    #[error("fit did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("not enough data to fit: {0}")]
    InsufficientData(String),
    #[error("no root of {0} inside the bracket")]
    NoRoot(&'static str),
    #[error("frequency tensor is not Hermitian (defect {0:e})")]
    NonHermitian(f64),
    #[error("loss became non-finite at step {0}")]
    NonFiniteLoss(u64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn out_of_range(what: &'static str, value: f64, range: impl Into<String>) -> Self {
        Error::OutOfRange {
            what,
            value,
            range: range.into(),
        }
    }
}
