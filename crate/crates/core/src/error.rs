use thiserror::Error;

use crate::pinn::PinnModel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid swing parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The adaptive stepper could not make progress (step size underflow or
    /// non-finite state). `t_last` is the last time with a valid state.
    #[error("integration failed for p1 = {p1} at t = {t_last}: step size underflow")]
    IntegrationFailed { p1: f64, t_last: f64 },

    #[error("no equilibrium: |p1| = {p1} exceeds the pull-out power {pull_out}")]
    NoEquilibrium { p1: f64, pull_out: f64 },

    #[error("requested {requested} samples but only {available} are available")]
    InsufficientSamples { requested: usize, available: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("operation requires a {expected} model")]
    ModeMismatch { expected: &'static str },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("relative error undefined: reference vector has zero norm")]
    ZeroNorm,

    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Diverged {
        iteration: usize,
        loss: f64,
        /// Last model whose loss was finite and below the divergence bound.
        last_finite: Box<PinnModel>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
