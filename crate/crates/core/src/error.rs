use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    /// Occupancy has mass where the reference measure has none.
    #[error("infinite divergence at layer {layer}, state {state}, action {action}, next state {next:?}")]
    InfiniteDivergence {
        layer: usize,
        state: usize,
        action: usize,
        next: Option<usize>,
    },

    #[error("solver did not converge after {iterations} iterations (projected gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("could not sample a confidence-set member after {0} attempts")]
    SamplingFailed(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
