use crate::env::UeAction;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("UE {} chose {action:?} with an empty buffer", ue + 1)]
    InvalidAction { ue: usize, action: UeAction },

    #[error("buffer level {level} outside 0..={b_max}")]
    BufferOutOfRange { level: usize, b_max: usize },

    #[error("UE index {0} out of range")]
    UeOutOfRange(usize),

    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("training diverged at episode {episode}, step {step}: loss is {loss}")]
    Diverged { episode: usize, step: usize, loss: f64 },

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("activation vector contains NaN at position {0}")]
    NanActivation(usize),

    #[error("episodic memory is empty")]
    EmptyMemory,

    #[error("empty state domain")]
    EmptyDomain,

    #[error("no rule covers state ({0}, {1})")]
    NoRule(usize, usize),

    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },

    #[error("probability {0} outside [0, 1]")]
    ProbabilityRange(f64),

    #[error("candidate list is empty")]
    EmptyCandidates,

    #[error("portfolio has no entry for environment {0}")]
    MissingEntry(String),

    #[error("reconfiguration did not converge after {0} manipulations")]
    NonConvergence(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
