use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cluster shape: {0}")]
    InvalidShape(String),

    #[error("rank {rank} out of range for {total} ranks")]
    RankOutOfRange { rank: usize, total: usize },

    #[error("step {step} out of range ({steps} inter-node steps)")]
    StepOutOfRange { step: usize, steps: usize },

    #[error("unsupported shape for {algorithm}: {reason}")]
    UnsupportedShape {
        algorithm: &'static str,
        reason: String,
    },

    /// A posted operation found no counterpart before the phase completed.
    #[error("deadlock in phase {phase}: rank {rank} waits on rank {peer}")]
    Deadlock {
        phase: String,
        rank: usize,
        peer: usize,
    },

    #[error("protocol error in phase {phase}: {detail}")]
    Protocol { phase: String, detail: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parameter error: {0}")]
    Params(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
