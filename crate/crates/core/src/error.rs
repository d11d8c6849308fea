use thiserror::Error;

pub type Result<T> = std::result::Result<T, BsdeError>;

#[derive(Debug, Error)]
pub enum BsdeError {
    /// A configuration value or operation precondition was violated.
    #[error("invalid configuration for `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// A config file failed to parse; the message carries line information.
    #[error("failed to parse config: {0}")]
    Parse(String),

    #[error("index out of range: {what} = {index} (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("`{name}` expects {expected} parameter(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },

    /// Two solutions were compared that do not share the same Brownian sample.
    #[error("solutions are not coupled: {0}")]
    Coupling(String),

    #[error("regression design is rank deficient ({0}); use a positive ridge")]
    RankDeficient(String),

    #[error("contraction guard failed: dt * L = {product:.4} >= 1 (L = {lipschitz}); use at least N = {min_steps} steps")]
    Contraction {
        lipschitz: f64,
        product: f64,
        min_steps: usize,
    },

    /// An envelope index in a sweep schedule is too large for the grid.
    #[error("schedule entry n = {n} fails the contraction guard dt * n < 1 with N = {steps}; use at least N = {min_steps} steps")]
    ScheduleContraction { n: f64, steps: usize, min_steps: usize },

    #[error("Picard iteration did not converge at step {step} (path {path}, last change {change:e})")]
    Picard {
        step: usize,
        path: usize,
        change: f64,
    },

    #[error("inf-convolution search over {dims} axes exceeds the supported dimension 3")]
    SearchDimension { dims: usize },

    #[error("non-finite value produced at step {step}")]
    NonFinite { step: usize },

    #[error("malformed path file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BsdeError {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        BsdeError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            BsdeError::Contraction { .. }
                | BsdeError::ScheduleContraction { .. }
                | BsdeError::Picard { .. }
                | BsdeError::RankDeficient(_)
                | BsdeError::NonFinite { .. }
        )
    }
}
