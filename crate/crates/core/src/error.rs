use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate direction: polarization basis requires a nonzero wave vector")]
    DegenerateDirection,

    #[error("state shape mismatch: expected {expected} mode amplitudes, got {got}")]
    StateShape { expected: usize, got: usize },

    #[error("invalid frequency {0}: must be positive and finite")]
    InvalidFrequency(f64),

    #[error("numerical divergence at step {step} (t = {t})")]
    Divergence { step: usize, t: f64 },

    #[error("history out of sync: accumulator holds {accumulated} samples, history has {history}")]
    HistorySync { accumulated: usize, history: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("ensemble failed: {diverged} of {total} trajectories diverged")]
    EnsembleDiverged { diverged: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
