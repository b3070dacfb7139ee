use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Invalid grid or run configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Argument outside the domain of a mathematical operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Fields or paths that do not live on the same grid.
    #[error("shape error: expected {expected} points, got {got}")]
    Shape { expected: usize, got: usize },
    /// An iteration did not reach its tolerance.
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64, history: Vec<f64> },
    /// The state left the blow-up guard or became non-finite.
    #[error("blow-up at step {step} of path {path}: sup|u| = {sup:e}")]
    BlowUp { path: usize, step: usize, sup: f64 },
    /// A quadrature or other numerical routine failed.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A coefficient could not be evaluated.
    #[error("coefficient error: {0}")]
    Coefficient(String),
    /// A validation check failed.
    #[error("validation error: {0}")]
    Validation(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_check(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { expected, got })
    }
}
