//! Deep Q-learning over action types: network, replay memory, training loop,
//! greedy solving, and model files.

mod agent;
mod model;
pub mod network;
pub mod replay;
mod solve;
mod train;

use thiserror::Error;

pub use agent::{Agent, LearnStats};
pub use model::{load_model, model_from_json, model_to_json, save_model, TrainedModel, MODEL_FORMAT, MODEL_VERSION};
pub use network::{epsilon_next, huber, huber_grad, Adam, IncrementalForward, QNetwork};
pub use replay::{Experience, ReplayBuffer};
pub use solve::{solve, SolveConfig, SolveReport};
pub use train::{train, Checkpoint, LogRow, StepTrace, StopReason, TrainConfig, TrainOptions, TrainReport, LOG_HEADER};

#[derive(Debug, Error)]
pub enum DqnError {
    #[error("profile mismatch: {0}")]
    Profile(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at step {step} (episode {episode}): {detail}")]
    Divergence { step: usize, episode: usize, detail: String },
    #[error("failed to parse model: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Derives an independent 64-bit seed for component `stream` of a run.
pub fn split_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
