use alloc::string::String;

/// Errors produced by estimators, models and generators.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("{what} did not converge after {iterations} iterations")]
    ConvergenceFailure { what: String, iterations: usize },
    /// No hidden state can explain the observation at `frame`.
    #[error("observation at frame {frame} has zero likelihood under every hidden state")]
    ZeroLikelihood { frame: usize },
    #[error("hidden state {state} received no responsibility mass")]
    DegenerateState { state: usize },
    /// A non-finite state appeared during integration.
    #[error("integration diverged at step {step} (trajectory {index})")]
    Divergence { step: usize, index: usize },
    #[error("score undefined: {0}")]
    UndefinedScore(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => { $crate::error::Error::InvalidArgument(alloc::format!($($arg)*)) };
}
macro_rules! degenerate {
    ($($arg:tt)*) => { $crate::error::Error::DegenerateInput(alloc::format!($($arg)*)) };
}
macro_rules! insufficient {
    ($($arg:tt)*) => { $crate::error::Error::InsufficientData(alloc::format!($($arg)*)) };
}
pub(crate) use {degenerate, insufficient, invalid};
