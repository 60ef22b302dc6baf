use thiserror::Error;

/// Errors produced by the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("m = {m} is outside the admissible range m > 10/9")]
    OutOfRegime { m: f64 },

    #[error("solver failure in {context}: residual {residual:.3e} after {iterations} iterations")]
    Solver {
        context: &'static str,
        residual: f64,
        iterations: usize,
    },

    #[error("step rejected: {0}")]
    StepRejected(String),

    #[error("blow-up suspected at t = {time} (step {step}): dt halvings exhausted")]
    BlowUpSuspected { time: f64, step: u64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
