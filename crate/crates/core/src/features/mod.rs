//! Reference feature extractor: handcrafted descriptors followed by a
//! trainable normalized affine embedding, plus matching and the training
//! objective.

pub mod checkpoint;
mod descriptor;
mod embedding;
mod loss;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use descriptor::{describe, describe_with_tree, slot, Descriptor, DescriptorConfig, DESCRIPTOR_DIM};
pub use embedding::{embed, match_features, EmbeddingParams, FeatureMap};
pub use loss::{contrastive_loss_and_grad, hardest_contrastive_loss, sgd_step, LossConfig, LossOutput, NegativePools};

pub(crate) use embedding::dot;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("feature map is empty")]
    EmptyFeatures,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no correspondences to train on")]
    EmptyCorrespondences,
    #[error("correspondence ({0}, {1}) indexes past the end of a feature map")]
    IndexOutOfRange(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },
}
