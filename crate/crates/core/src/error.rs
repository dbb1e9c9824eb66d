use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    /// An argument outside the domain of an operation (negative time, negative frequency, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The parameter set failed validation; each entry names one violated invariant.
    #[error("invalid parameters: {}", .0.join("; "))]
    Invalid(Vec<String>),

    /// A non-finite value appeared while stepping a solver.
    #[error("numerical divergence in {stage} at step {step}")]
    Divergence { stage: &'static str, step: usize },

    /// A time that should lie on the grid does not.
    #[error("time {t} is not on the grid (dt = {dt})")]
    OffGrid { t: f64, dt: f64 },

    /// Two inputs that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
