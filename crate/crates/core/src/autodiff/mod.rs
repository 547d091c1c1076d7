//! Dense-tensor reverse-mode differentiation, parameter storage,
//! initialization, the Adam optimizer and checkpoint I/O.

mod adam;
mod checkpoint;
mod init;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use init::{xavier_init, xavier_uniform};
pub use params::ParamStore;
pub use tape::{Gradients, Tape, Var};
pub(crate) use tape::{log_sigmoid, sigmoid};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("loss must be 1x1, got {shape:?}")]
    NotScalar { shape: (usize, usize) },
    #[error("variable is not recorded on this tape")]
    DetachedVar,
    #[error("tensor dimensions must be positive, got {rows}x{cols}")]
    ZeroDim { rows: usize, cols: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}
