//! Plain BPR matrix factorization with hand-written gradients. Used as a
//! reference point for ordering checks and as an independent oracle for the
//! trainer with both graph views switched off.

use rand::Rng;

use crate::autodiff::{adam_step, log_sigmoid, sigmoid, AdamConfig, AdamState, Tensor};
use crate::error::Result;
use crate::evaluation::{topk_rank, RankingResult};
use crate::scalar::Scalar;
use crate::trainer::{sample_bpr_batch, InteractionSplit, Triple};

/// User and item tables plus any extra tables that only take part in the
/// L2 penalty.
#[derive(Debug, Clone)]
pub struct BprMf<T> {
    /// `[users, items, extra...]`
    tables: Vec<Tensor<T>>,
    adam: AdamState<T>,
    lambda2: f64,
}

impl<T: Scalar> BprMf<T> {
    pub fn new(users: Tensor<T>, items: Tensor<T>, extra: Vec<Tensor<T>>, lr: f64, lambda2: f64) -> Self {
        let mut tables = vec![users, items];
        tables.extend(extra);
        let adam = AdamState::new(AdamConfig::with_lr(lr), &tables);
        Self { tables, adam, lambda2 }
    }

    pub fn users(&self) -> &Tensor<T> {
        &self.tables[0]
    }

    pub fn items(&self) -> &Tensor<T> {
        &self.tables[1]
    }

    /// `−Σ ln σ(x_uij) + λ2 Σ ‖E‖²` without updating anything.
    pub fn loss(&self, triples: &[Triple]) -> f64 {
        let (u, it) = (self.users(), self.items());
        let mut total = T::zero();
        for &(a, i, j) in triples {
            total = total + log_sigmoid(dot(u.row(a), it.row(i)) - dot(u.row(a), it.row(j)));
        }
        let mut loss = -total;
        if self.lambda2 > 0.0 {
            for t in &self.tables {
                loss = loss + t.squared_norm() * T::of(self.lambda2);
            }
        }
        loss.as_f64()
    }

    /// One Adam step on a batch; returns the loss before the update.
    pub fn step(&mut self, triples: &[Triple]) -> Result<f64> {
        let loss = self.loss(triples);
        let mut grads: Vec<Tensor<T>> = self
            .tables
            .iter()
            .map(|t| t.scale(T::of(2.0 * self.lambda2)))
            .collect();
        let (u, it) = (&self.tables[0], &self.tables[1]);
        let d = u.cols();
        for &(a, i, j) in triples {
            let x = dot(u.row(a), it.row(i)) - dot(u.row(a), it.row(j));
            // d/dx of −ln σ(x) is −σ(−x)
            let g = -sigmoid(-x);
            for k in 0..d {
                let (uk, ik, jk) = (u.get(a, k), it.get(i, k), it.get(j, k));
                let gu = grads[0].get(a, k) + g * (ik - jk);
                grads[0].set(a, k, gu);
                let gi = grads[1].get(i, k) + g * uk;
                grads[1].set(i, k, gi);
                let gj = grads[1].get(j, k) - g * uk;
                grads[1].set(j, k, gj);
            }
        }
        adam_step(&mut self.tables, &grads, &mut self.adam)?;
        Ok(loss)
    }

    /// `⌈|train| / batch⌉` sampled steps; returns the mean batch loss.
    pub fn epoch<R: Rng + ?Sized>(&mut self, split: &InteractionSplit, batch: usize, rng: &mut R) -> Result<f64> {
        let batches = split.train().len().div_ceil(batch).max(1);
        let mut acc = 0.0;
        for _ in 0..batches {
            let triples = sample_bpr_batch(split, batch, rng)?;
            acc += self.step(&triples)?;
        }
        Ok(acc / batches as f64)
    }

    pub fn score_matrix(&self) -> Result<Tensor<T>> {
        Ok(self.users().matmul_transposed(self.items())?)
    }

    pub fn evaluate(&self, split: &InteractionSplit, ks: &[usize]) -> Result<RankingResult> {
        Ok(topk_rank(&self.score_matrix()?, split, ks)?)
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}
