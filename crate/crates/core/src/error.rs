use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeccoError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value outside the loss domain: {0}")]
    Domain(String),

    #[error("loss `{0}` is not differentiable")]
    NotDifferentiable(&'static str),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solver diverged at iteration {iteration}: primal residual {primal}, dual residual {dual}")]
    Diverged {
        iteration: usize,
        primal: f64,
        dual: f64,
    },
}

pub type Result<T> = std::result::Result<T, GeccoError>;
