use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("index {index} out of bounds for dimension {bound}")]
    IndexOutOfBounds { index: usize, bound: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("intercept bisection for column {column} did not bracket the target rate in [-50, 50]")]
    CalibrationFailed { column: usize },

    #[error("missing rate unreachable: column {column} would need K = {k:.4} >= 1")]
    RateUnreachable { column: usize, k: f64 },

    #[error("bound violated at order {order}: lhs {lhs:e} > rhs {rhs:e}")]
    BoundViolated { order: usize, lhs: f64, rhs: f64 },

    #[error("no analytic Bayes predictor for this missingness mechanism")]
    NoAnalyticPredictor,

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },

    #[error("support bound {0} too small to force the activation sign pattern")]
    SupportBoundTooSmall(f64),

    #[error("covariance estimate became singular")]
    SingularCovariance,

    #[error("{found} distinct missingness patterns exceed the cap of {cap}")]
    PatternOverflow { found: usize, cap: usize },

    #[error("zero variance in reference values")]
    ZeroVariance,

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
