//! Masked contrastive learning on heterogeneous information networks.
//!
//! Users and items are embedded through two views of a typed graph: a
//! one-hop relational attention view, and a meta-path view that masks and
//! propagates embeddings before node- and semantic-level attention. The
//! views are aligned with a multi-path contrastive loss and trained jointly
//! with BPR for top-K recommendation.
//!
//! The numeric core is generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix it to `f64`, which is what the trainer and CLI use.

pub mod augmentation;
pub mod autodiff;
pub mod baseline;
pub mod config;
pub mod contrastive;
pub mod data;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod hin;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod sparse;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = autodiff::Tensor<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type ParamStore = autodiff::ParamStore<f64>;
pub type AdamState = autodiff::AdamState<f64>;
pub type MclModel = model::MclModel<f64>;
pub type Trainer = trainer::Trainer<f64>;
