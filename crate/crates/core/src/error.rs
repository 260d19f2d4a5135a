use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("quadrature did not converge (residual estimate {residual:e})")]
    Integration { residual: f64 },

    #[error("density ratio {ratio:e} outside [exp(-{a}), exp({a})]")]
    BoundViolation { ratio: f64, a: f64 },

    #[error("all Monte-Carlo outer weights underflowed")]
    DegenerateWeights,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("infeasible constants: {0}")]
    Infeasible(String),

    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),

    #[error("overflow evaluating {0}")]
    Overflow(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
