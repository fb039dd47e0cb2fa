use thiserror::Error;

/// Errors raised by the simulator, learner and file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("simulation diverged at physics step {step}")]
    SimulationDiverged { step: u64 },

    #[error("training diverged at iteration {iteration}: {reason}")]
    TrainingDiverged { iteration: u64, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("episode already finished; reset before stepping")]
    EpisodeDone,

    #[error("unsupported checkpoint format (bad magic)")]
    UnsupportedFormat,

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
