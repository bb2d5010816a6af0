use thiserror::Error;

pub type Result<T> = std::result::Result<T, MlsaError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlsaError {
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid gap {gap} does not match loss bound {delta}")]
    GridMismatch { gap: f64, delta: f64 },

    #[error("output has {levels} tolerance levels, the task grid has {expected}")]
    GridLengthMismatch { levels: usize, expected: usize },

    #[error("loss value {value} at (row {row}, hypothesis {column}) violates declared bound {bound}")]
    LossBoundViolated {
        row: usize,
        column: usize,
        value: f64,
        bound: f64,
    },

    #[error("grid-majority failure: good fraction {rho} is not above 1/2")]
    GridMajorityFailure { rho: f64 },

    #[error("level t = {t} fails the local growth condition (ratio {ratio}, sandwich ok: {sandwich_ok})")]
    GrowthConditionFailed { t: f64, ratio: f64, sandwich_ok: bool },

    #[error("density class has an unbounded log-ratio; smooth the class first")]
    UnboundedLogRatio,

    #[error("duplicate covariate value {0}; generators need distinct covariates")]
    DuplicateCovariate(f64),

    #[error("unknown class descriptor: {0}")]
    UnknownDescriptor(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("insufficient acceptance at t = {t}, exclude = {exclude:?}: {accepted} accepted < {required}")]
    InsufficientAcceptance {
        t: f64,
        exclude: Option<usize>,
        accepted: usize,
        required: usize,
    },

    #[error("degenerate geometry: smallest eigenvalue of the second-moment matrix is {0}")]
    DegenerateGeometry(f64),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub(crate) fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(MlsaError::IndexOutOfRange { what, index, len })
    }
}
