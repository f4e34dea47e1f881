use thiserror::Error;

use crate::exprlang::ExprError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("singular coordinate change: {what} = {value:e}")]
    SingularChange { what: &'static str, value: f64 },
    #[error("coordinate change is not inverse-consistent: mismatch {mismatch:e}")]
    InverseMismatch { mismatch: f64 },
    #[error("degenerate metric: {0}")]
    MetricDegenerate(String),
    #[error("degenerate Lagrangian: condition number of g is {condition:e}")]
    DegenerateLagrangian { condition: f64 },
    #[error("adaptive step underflow at t = {t} (step {step:e})")]
    StepFailure { t: f64, step: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("quadrature: {0}")]
    Quadrature(String),
    #[error("derivative not available: {0}")]
    MissingDerivative(&'static str),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
