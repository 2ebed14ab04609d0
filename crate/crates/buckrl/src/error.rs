use thiserror::Error;

/// Errors shared across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    /// Output voltage fell below the CPL guard floor; the P/v term is
    /// singular at v_o = 0 and the trajectory is no longer meaningful.
    #[error("output voltage {v_o} V below floor {v_min} V (CPL term singular)")]
    SingularVoltage { v_o: f64, v_min: f64 },

    #[error("action index {index} out of range for space of {len} actions")]
    ActionIndexOutOfRange { index: usize, len: usize },

    #[error("episode already finished; call reset before stepping")]
    EpisodeFinished,

    #[error("replay buffer holds {have} transitions, need {need}")]
    InsufficientSamples { have: usize, need: usize },

    #[error("parameter dimensions do not match: {0}")]
    DimensionMismatch(String),

    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),

    #[error("{aborted} of the last {total} training episodes aborted; training diverged")]
    AbortedTooOften { aborted: usize, total: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("trace is empty")]
    EmptyTrace,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
