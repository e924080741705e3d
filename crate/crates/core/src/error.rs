use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("CFL violation: dt = {dt} exceeds the stability bound {dt_max} (max potential {v_max})")]
    CflViolation { dt: f64, dt_max: f64, v_max: f64 },

    #[error("memory budget exceeded: {required} bytes required, budget is {budget} bytes")]
    MemoryBudget { required: u64, budget: u64 },

    #[error("numerical consistency failure: {0}")]
    NumericalConsistency(String),

    #[error("convergence order undefined: {0}")]
    UndefinedOrder(String),

    #[error("insufficient span: {0}")]
    InsufficientSpan(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
