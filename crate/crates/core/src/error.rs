use std::path::PathBuf;

use thiserror::Error;

use crate::augmentation::AugmentError;
use crate::autodiff::{CheckpointError, TensorError};
use crate::config::ConfigError;
use crate::contrastive::ContrastiveError;
use crate::data::DataError;
use crate::evaluation::EvalError;
use crate::hin::GraphError;
use crate::trainer::TrainError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Contrastive(#[from] ContrastiveError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit status for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit status for unreadable or inconsistent data.
pub const EXIT_DATA: i32 = 3;
/// Process exit status for numeric failures during training.
pub const EXIT_NUMERIC: i32 = 4;

impl Error {
    pub(crate) fn setup(msg: impl Into<String>) -> Self {
        Self::Setup(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Setup(_) => EXIT_CONFIG,
            Self::Augment(AugmentError::InvalidDelta(_)) => EXIT_CONFIG,
            Self::Contrastive(ContrastiveError::NonpositiveTau(_) | ContrastiveError::InvalidLambda(_)) => EXIT_CONFIG,
            Self::Train(TrainError::EmptyBatch) => EXIT_CONFIG,
            Self::Tensor(TensorError::UnknownParam(_)) => EXIT_DATA,
            Self::Data(_) | Self::Graph(_) | Self::Eval(_) | Self::Checkpoint(_) | Self::Io { .. } => EXIT_DATA,
            Self::Train(TrainError::UserWithoutInteractions(_) | TrainError::NegativeSamplingExhausted { .. }) => {
                EXIT_DATA
            }
            Self::Tensor(_) | Self::Augment(_) | Self::Contrastive(_) | Self::Train(_) => EXIT_NUMERIC,
        }
    }
}
