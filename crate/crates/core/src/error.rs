use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("f'/b is not integrable near u = {at}")]
    NonIntegrableSource { at: f64 },

    #[error("model assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("root finding for D(s) = {target} did not converge after {iterations} iterations")]
    ConvergenceFailure { target: f64, iterations: usize },

    #[error("quadrature hit a non-finite integrand near x = {at}")]
    QuadratureFailure { at: f64 },

    #[error("state blow-up at step {step}: |u| = {value:e} exceeds {limit:e}")]
    StateBlowup { step: usize, value: f64, limit: f64 },

    #[error("run did not retain its space-time history")]
    HistoryUnavailable,

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("expression error: {0}")]
    Expression(String),
}

pub type Result<T> = std::result::Result<T, Error>;
