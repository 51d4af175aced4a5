//! Skeleton transformer over joint tokens, its channel gate, training loops
//! and checkpoint files.

mod config;
mod forward;
mod state;
mod train;

pub use config::{ModelConfig, TrainHyper, Trainable};
pub use forward::{apply_gate, forward, predict, ForwardOutput, INFERENCE_CHUNK};
pub use state::{Mode, ModelState, GATE, HEAD_WEIGHT, MODEL_FILE, WEIGHTS_FILE};
pub use train::{
    accuracy, argmax, ensemble_train, finetune_gating, loss_and_gradients, member_setup, train, EpochLog,
    LossGradients, ParameterReport, TrainOutcome,
};

use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("stochastic forward pass needs a random stream")]
    MissingRng,
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
