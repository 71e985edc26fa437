use thiserror::Error;

/// Errors raised by the solvers and the experiment layer.
#[derive(Debug, Error)]
pub enum MassflowError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("exponent p = {p} is not admissible for N = {n}: need 2 < p < {limit}")]
    InadmissibleExponent { p: f64, n: usize, limit: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("field left the mass constraint: relative drift {drift:.3e}")]
    ConstraintViolated { drift: f64 },

    #[error(
        "{what} did not converge after {iterations} iterations (last residual {residual:.3e})"
    )]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("step size underflow at step {step}: dt = {dt:.3e}")]
    StepUnderflow { step: usize, dt: f64 },

    #[error("singular system in {0}")]
    Singular(&'static str),

    #[error("domain mismatch: fields live on different grids")]
    DomainMismatch,

    #[error("not resolvable on this grid: {0}")]
    Unresolvable(String),

    #[error("duplicate record key {0}")]
    DuplicateRecord(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MassflowError>;
