//! Shared projection head, temperature-scaled cross-view similarity and the
//! multi-path positive loss.

use thiserror::Error;

use crate::autodiff::{Tape, Tensor, TensorError, Var};
use crate::hin::PositiveMatrix;
use crate::scalar::Scalar;

/// Guard added inside every log of a positive score.
pub const LOG_EPS: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContrastiveError {
    #[error("temperature must be positive, got {0}")]
    NonpositiveTau(f64),
    #[error("lambda1 must lie in [0, 1], got {0}")]
    InvalidLambda(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Two-layer head shared by both views and both node types.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// `ELU(H W1 + b1) W2 + b2`, row-wise.
pub fn project<T: Scalar>(tape: &mut Tape<T>, h: Var, vars: ProjectionVars) -> Result<Var, TensorError> {
    let a = tape.matmul(h, vars.w1)?;
    let a = tape.add(a, vars.b1)?;
    let a = tape.elu(a)?;
    let b = tape.matmul(a, vars.w2)?;
    tape.add(b, vars.b2)
}

/// Row-normalized similarity, anchored on view 1 (`sim1`) and on view 2
/// (`sim2`, built from the transposed cosine matrix).
#[derive(Debug, Clone, Copy)]
pub struct SimilarityPair {
    pub sim1: Var,
    pub sim2: Var,
}

/// `sim1 = softmax_rows(C / τ)`, `sim2 = softmax_rows(Cᵀ / τ)` with
/// `C_ab = cos(z1_a, z2_b)`. With `double_exp` the logits are
/// `exp(C / τ)` instead.
pub fn similarity_pair<T: Scalar>(
    tape: &mut Tape<T>,
    z1: Var,
    z2: Var,
    tau: f64,
    double_exp: bool,
) -> Result<SimilarityPair, ContrastiveError> {
    if !(tau > 0.0) {
        return Err(ContrastiveError::NonpositiveTau(tau));
    }
    if tape.shape(z1) != tape.shape(z2) {
        return Err(TensorError::ShapeMismatch {
            op: "similarity_pair",
            left: tape.shape(z1),
            right: tape.shape(z2),
        }
        .into());
    }
    let cos = tape.cosine_similarity(z1, z2)?;
    let mut logits = tape.scale(cos, T::of(1.0 / tau))?;
    if double_exp {
        logits = tape.exp(logits)?;
    }
    let sim1 = tape.row_softmax(logits, None)?;
    let flipped = tape.transpose(logits)?;
    let sim2 = tape.row_softmax(flipped, None)?;
    Ok(SimilarityPair { sim1, sim2 })
}

/// `−mean_a [λ1 log(score1_a + ε) + (1 − λ1) log(score2_a + ε)]` where
/// `score_a = Σ_b Pos_ab sim_ab`.
pub fn contrastive_loss<T: Scalar>(
    tape: &mut Tape<T>,
    pair: SimilarityPair,
    positives: Var,
    lambda1: f64,
) -> Result<Var, ContrastiveError> {
    if !(0.0..=1.0).contains(&lambda1) {
        return Err(ContrastiveError::InvalidLambda(lambda1));
    }
    let eps = T::of(LOG_EPS);
    let s1 = tape.mul(pair.sim1, positives)?;
    let s1 = tape.row_sum(s1)?;
    let l1 = tape.log(s1, eps)?;
    let s2 = tape.mul(pair.sim2, positives)?;
    let s2 = tape.row_sum(s2)?;
    let l2 = tape.log(s2, eps)?;
    let a = tape.scale(l1, T::of(lambda1))?;
    let b = tape.scale(l2, T::of(1.0 - lambda1))?;
    let per_anchor = tape.add(a, b)?;
    let m = tape.mean(per_anchor)?;
    Ok(tape.scale(m, -T::one())?)
}

/// Dense 0/1 matrix of a positive set.
pub fn positives_dense<T: Scalar>(pos: &PositiveMatrix) -> Tensor<T> {
    pos.matrix.to_dense()
}

/// Diagonal-only positives (the InfoNCE ablation).
pub fn info_nce_positives<T: Scalar>(n: usize) -> Tensor<T> {
    Tensor::identity(n)
}
