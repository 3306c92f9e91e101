//! Orchestration on top of the library: synthetic corpora, training with
//! progressive self-labeling, bucketed evaluation and report emission.

pub mod config;
pub mod corpus;
pub mod evaluate;
pub mod train;

pub use config::{CorpusConfig, EstimatorKind, PrepConfig, RunConfig};
pub use corpus::{discover_sequences, load_corpus, prepare, simulate_corpus, simulate_sequence, PreparedSequence};
pub use evaluate::{build_similarity_map, evaluate, register_frames, BucketReport, EvalReport};
pub use train::{train, EpochReport, TrainOutcome, TrainOptions};

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::features::FeatureError;
use crate::scpcr::RegistrationError;
use crate::selflabel::SelfLabelError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("registration failed: {0}")]
    Registration(#[from] RegistrationError),
}

impl PipelineError {
    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Registration(_) => 4,
        }
    }
}

impl From<DatasetError> for PipelineError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InvalidSchedule(m) => Self::Config(m),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<SimError> for PipelineError {
    fn from(e: SimError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<FeatureError> for PipelineError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::InvalidConfig(m) => Self::Config(m),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<SelfLabelError> for PipelineError {
    fn from(e: SelfLabelError) -> Self {
        match e {
            SelfLabelError::InvalidConfig(m) => Self::Config(m),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}
