use thiserror::Error;

pub type Result<T> = std::result::Result<T, ApkError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApkError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("not primitive: gcd of {0:?} is not 1")]
    NotPrimitive(Vec<i64>),

    #[error("orientation vectors are linearly dependent (pivot {pivot:e} below {threshold:e})")]
    LinearlyDependent { pivot: f64, threshold: f64 },

    #[error("integer overflow while {0}")]
    Overflow(&'static str),

    #[error("construction overlap between levels {0} and {1}")]
    ConstructionOverlap(u64, u64),

    #[error("sampling budget exceeded: {needed} points requested, cap is {cap}; raise r or the budget")]
    SamplingBudgetExceeded { needed: u128, cap: u64 },

    #[error("tuple budget exceeded: index {index} above cap {cap}")]
    TupleBudgetExceeded { index: u128, cap: u128 },

    #[error("certification failed: {0}")]
    CertificationFailed(String),

    #[error("no initial point: no point of Q lies within eps*scale of the patch origin")]
    NoInitialPoint,

    #[error("epsilon violates the separation hypothesis: eps = {eps} must be below ell(E)/2 = {half_ell}")]
    EpsilonHypothesis { eps: f64, half_ell: f64 },

    #[error("inequality violated: {0}")]
    InequalityViolated(String),

    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl ApkError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ApkError::InvalidParameter(msg.into())
    }
}

impl From<std::io::Error> for ApkError {
    fn from(e: std::io::Error) -> Self {
        ApkError::Io(e.to_string())
    }
}
