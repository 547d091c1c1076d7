//! Embedding perturbation: whole-row Bernoulli masking with inverse-keep
//! scaling, followed by `L` steps of propagation over a normalized
//! meta-path adjacency and averaging of all orders `0..=L`.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{Tape, Tensor, TensorError, Var};
use crate::hin::MetaPathGraph;
use crate::scalar::Scalar;
use crate::sparse::SparseOperator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("mask probability must lie in [0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("mask covers {mask} nodes but embedding has {rows} rows")]
    LengthMismatch { mask: usize, rows: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Per-node keep flags drawn i.i.d. with `P(keep) = 1 − delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVector {
    keep: Vec<bool>,
    delta: f64,
}

impl MaskVector {
    /// Mask that keeps every node (`delta = 0`).
    pub fn keep_all(num_nodes: usize) -> Self {
        Self {
            keep: vec![true; num_nodes],
            delta: 0.0,
        }
    }

    pub fn from_flags(keep: Vec<bool>, delta: f64) -> Result<Self, AugmentError> {
        check_delta(delta)?;
        Ok(Self { keep, delta })
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn flags(&self) -> &[bool] {
        &self.keep
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Row multipliers: `1 / (1 − delta)` for kept rows, `0` otherwise.
    pub fn scales<T: Scalar>(&self) -> Tensor<T> {
        let s = T::of(1.0 / (1.0 - self.delta));
        Tensor::from_fn(self.keep.len(), 1, |r, _| if self.keep[r] { s } else { T::zero() })
    }
}

fn check_delta(delta: f64) -> Result<(), AugmentError> {
    if (0.0..1.0).contains(&delta) {
        Ok(())
    } else {
        Err(AugmentError::InvalidDelta(delta))
    }
}

pub fn sample_mask<R: Rng + ?Sized>(num_nodes: usize, delta: f64, rng: &mut R) -> Result<MaskVector, AugmentError> {
    check_delta(delta)?;
    let keep = (0..num_nodes).map(|_| rng.gen::<f64>() >= delta).collect();
    Ok(MaskVector { keep, delta })
}

/// Row `i` becomes `E_i / (1 − delta)` if kept and zero otherwise.
pub fn apply_mask<T: Scalar>(embeddings: &Tensor<T>, mask: &MaskVector) -> Result<Tensor<T>, AugmentError> {
    if mask.len() != embeddings.rows() {
        return Err(AugmentError::LengthMismatch {
            mask: mask.len(),
            rows: embeddings.rows(),
        });
    }
    let scales = mask.scales::<T>();
    let cols = embeddings.cols();
    Ok(Tensor::from_fn(embeddings.rows(), cols, |r, c| {
        embeddings.get(r, c) * scales.get(r, 0)
    }))
}

/// Recorded variant of [`apply_mask`]; gradients reach kept rows only.
pub fn apply_mask_on_tape<T: Scalar>(tape: &mut Tape<T>, embeddings: Var, mask: &MaskVector) -> Result<Var, AugmentError> {
    let rows = tape.shape(embeddings).0;
    if mask.len() != rows {
        return Err(AugmentError::LengthMismatch { mask: mask.len(), rows });
    }
    let scales = tape.constant(mask.scales());
    Ok(tape.mul(embeddings, scales)?)
}

/// Propagated and order-averaged embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedEmbedding<T> {
    pub matrix: Tensor<T>,
    pub order: usize,
}

/// `(1 / (L + 1)) Σ_{l=0..L} Ā^l Ẽ` with `Ā = D^{-1/2} A D^{-1/2}`.
pub fn propagate<T: Scalar>(
    graph: &MetaPathGraph,
    masked: &Tensor<T>,
    order: usize,
) -> Result<AugmentedEmbedding<T>, AugmentError> {
    let operator = SparseOperator::normalized_adjacency(&graph.adjacency);
    let mut current = masked.clone();
    let mut total = masked.clone();
    for _ in 0..order {
        current = operator.apply(&current)?;
        total.add_assign(&current);
    }
    Ok(AugmentedEmbedding {
        matrix: total.scale(T::one() / T::of((order + 1) as f64)),
        order,
    })
}

/// Recorded variant of [`propagate`] over a prebuilt normalized operator.
pub fn propagate_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    operator: &Arc<SparseOperator<T>>,
    masked: Var,
    order: usize,
) -> Result<Var, AugmentError> {
    let mut current = masked;
    let mut total = masked;
    for _ in 0..order {
        current = tape.sparse_matmul(operator, current)?;
        total = tape.add(total, current)?;
    }
    if order == 0 {
        return Ok(total);
    }
    Ok(tape.scale(total, T::one() / T::of((order + 1) as f64))?)
}
