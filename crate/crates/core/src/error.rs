use thiserror::Error;

use crate::field::SpectralField;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: expected d={expected_dim} n={expected_n}, got d={dim} n={n}")]
    GridMismatch {
        expected_dim: usize,
        expected_n: usize,
        dim: usize,
        n: usize,
    },

    #[error("time step {dt:e} violates the advective CFL limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("non-finite values at t = {time:e}: {reason}")]
    NumericalAbort {
        time: f64,
        reason: String,
        /// Last state that passed the health checks, when one exists.
        last_healthy: Option<Box<SpectralField>>,
    },

    #[error("{method} did not converge after {iterations} iterations (last estimate {last:e})")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        last: f64,
    },

    #[error("no bracket for {what} below t_max = {t_max:e}")]
    BracketNotFound { what: &'static str, t_max: f64 },

    #[error("kernel under-resolved: t = {t:e} is below the grid smoothing time {t_min:e}")]
    UnderResolved { t: f64, t_min: f64 },

    #[error("no quench schedule: mean temperature {mean} is not below the ignition temperature {alpha0}")]
    NoQuenchSchedule { mean: f64, alpha0: f64 },

    #[error("invariant violated at t = {time:e}: {what}")]
    InvariantViolation { time: f64, what: String },

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
