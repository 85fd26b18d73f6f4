use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PercoError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid perimeter {perimeter} for {map}")]
    InvalidPerimeter { map: String, perimeter: u64 },
    #[error("peeling case {case} is not valid for {map}")]
    InvalidCase { map: String, case: String },
    #[error("{model} percolation on {map} is not supported: {reason}")]
    Unsupported {
        model: String,
        map: String,
        reason: String,
    },
    #[error("step budget of {budget} exceeded")]
    BudgetExceeded { budget: u64 },
    #[error("exploration already terminated")]
    Terminated,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, PercoError>;
