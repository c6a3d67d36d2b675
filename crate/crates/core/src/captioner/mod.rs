//! A compact multimodal captioner: map, route and view encoders fused into
//! a causal transformer decoder, trained with a generation loss plus a
//! contrastive alignment term.

mod checkpoint;
mod config;
pub mod data;
mod generate;
pub mod graph;
pub mod layers;
pub mod loss;
mod model;
pub mod params;
pub mod train;
pub mod vocab;

#[cfg(test)]
mod tests;

pub use checkpoint::Checkpoint;
pub use config::{CaptionerConfig, Conditioning, InputFlags, NegativeSampling, SystemVariant, TrainConfig};
pub use data::{build_vocabulary, load_samples, make_sample, Patches, Sample};
pub use generate::DecodeOptions;
pub use loss::FusionBatch;
pub use model::{Captioner, Encoded, MAP_PREFIX, PANO_ENCODER_PREFIX, PANO_MLP_PREFIX, ROUTE_PREFIX};
pub use train::{train, EpochMetrics, LossValues, TrainOutcome, Trainer};
pub use vocab::Vocabulary;

use crate::map::MapError;

#[derive(Debug, thiserror::Error)]
pub enum CaptionerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no input enabled; the top-down map (td) is required")]
    NoInputs,
    #[error("zero-norm embedding in the contrastive batch")]
    ZeroNorm,
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("loss became non-finite at step {0}; lower the learning rate")]
    Diverged(u64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
