use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("root of f(x, ., v) not bracketed on [-M, M] at x = {x}, v = {v}")]
    NotBracketed { x: f64, v: f64 },

    #[error("{what} did not converge after {iterations} iterations (last measure {last})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        last: f64,
    },

    #[error("time step {dt} exceeds the stability bound {dt_max}")]
    TimeStepTooLarge { dt: f64, dt_max: f64 },

    #[error("state left the admissible region: {0}")]
    BlowUp(String),

    #[error("sub/super-solution check failed: {0}")]
    NotOrderedSolution(String),

    #[error("monotone chain violated: {0}")]
    ChainViolation(String),

    #[error("hypothesis not met: {0}")]
    Hypothesis(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
