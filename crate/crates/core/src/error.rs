use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("metric degenerate: {quantity} = {value:e} at grid point {index}")]
    Degenerate {
        quantity: &'static str,
        value: f64,
        index: usize,
    },
    #[error("positivity lost: minimal eigenvalue {min_eig:e} at grid point {index}")]
    PositivityLost { min_eig: f64, index: usize },
    #[error("time step underflow at t = {t}: dt = {dt:e}")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, CoreError>;
