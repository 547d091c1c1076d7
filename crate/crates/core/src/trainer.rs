//! Interaction split, BPR sampling and loss, and the joint training loop
//! with validation-based early stopping.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::augmentation::sample_mask;
use crate::autodiff::{adam_step, AdamConfig, AdamState, ParamStore, Tape, Tensor, Var};
use crate::config::{L2Scope, TrainConfig};
use crate::error::Result;
use crate::evaluation::{topk_rank, validation_rank, RankingResult};
use crate::model::{GraphContext, MclModel, StepMasks};
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("user {0} has no interactions")]
    UserWithoutInteractions(usize),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("no negative item found for user {user} after {tries} draws")]
    NegativeSamplingExhausted { user: usize, tries: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}: bpr={l_bpr} l_u={l_u} l_i={l_i}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        l_bpr: f64,
        l_u: f64,
        l_i: f64,
    },
}

/// Disjoint train / validation / test interactions with per-user sorted
/// item lists.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSplit {
    num_users: usize,
    num_items: usize,
    train: Vec<(usize, usize)>,
    val: Vec<(usize, usize)>,
    test: Vec<(usize, usize)>,
    train_items: Vec<Vec<usize>>,
    val_items: Vec<Vec<usize>>,
    test_items: Vec<Vec<usize>>,
}

fn per_user(num_users: usize, pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut lists = vec![Vec::new(); num_users];
    for &(u, i) in pairs {
        lists[u].push(i);
    }
    for l in &mut lists {
        l.sort_unstable();
        l.dedup();
    }
    lists
}

impl InteractionSplit {
    pub fn from_parts(
        num_users: usize,
        num_items: usize,
        train: Vec<(usize, usize)>,
        val: Vec<(usize, usize)>,
        test: Vec<(usize, usize)>,
    ) -> Self {
        Self {
            train_items: per_user(num_users, &train),
            val_items: per_user(num_users, &val),
            test_items: per_user(num_users, &test),
            num_users,
            num_items,
            train,
            val,
            test,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn train(&self) -> &[(usize, usize)] {
        &self.train
    }

    pub fn val(&self) -> &[(usize, usize)] {
        &self.val
    }

    pub fn test(&self) -> &[(usize, usize)] {
        &self.test
    }

    pub fn train_items(&self, u: usize) -> &[usize] {
        &self.train_items[u]
    }

    pub fn val_items(&self, u: usize) -> &[usize] {
        &self.val_items[u]
    }

    pub fn test_items(&self, u: usize) -> &[usize] {
        &self.test_items[u]
    }

    pub fn train_lists(&self) -> &[Vec<usize>] {
        &self.train_items
    }

    pub fn val_lists(&self) -> &[Vec<usize>] {
        &self.val_items
    }

    pub fn test_lists(&self) -> &[Vec<usize>] {
        &self.test_items
    }

    pub fn is_train(&self, u: usize, i: usize) -> bool {
        self.train_items[u].binary_search(&i).is_ok()
    }
}

/// Per user: shuffle, hold out `round(0.2 n)` for test, then move
/// `round(0.1 · rest)` of the rest to validation, always leaving at least
/// one training interaction.
pub fn split_interactions(
    interactions: &[(usize, usize)],
    num_users: usize,
    num_items: usize,
    seed: u64,
) -> Result<InteractionSplit, TrainError> {
    let lists = per_user(num_users, interactions);
    if let Some(u) = lists.iter().position(Vec::is_empty) {
        return Err(TrainError::UserWithoutInteractions(u));
    }
    let mut rng = stream(seed, Stream::Split);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (u, items) in lists.into_iter().enumerate() {
        let mut items = items;
        items.shuffle(&mut rng);
        let n = items.len();
        let n_test = ((0.2 * n as f64).round() as usize).min(n - 1);
        let pool = n - n_test;
        let n_val = ((0.1 * pool as f64).round() as usize).min(pool - 1);
        for (k, &i) in items.iter().enumerate() {
            if k < n_test {
                test.push((u, i));
            } else if k < n_test + n_val {
                val.push((u, i));
            } else {
                train.push((u, i));
            }
        }
    }
    Ok(InteractionSplit::from_parts(num_users, num_items, train, val, test))
}

/// Rejection attempts per negative before giving up.
pub const MAX_NEGATIVE_TRIES: usize = 100;

/// `(user, positive, negative)` triple.
pub type Triple = (usize, usize, usize);

/// Draws `(u, i)` uniformly from train and `j` uniformly from items not in
/// `u`'s training set.
pub fn sample_bpr_batch<R: Rng + ?Sized>(
    split: &InteractionSplit,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<Triple>, TrainError> {
    if batch == 0 || split.train.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch {
        let (u, i) = split.train[rng.gen_range(0..split.train.len())];
        let mut tries = 0;
        let j = loop {
            if tries == MAX_NEGATIVE_TRIES {
                return Err(TrainError::NegativeSamplingExhausted { user: u, tries });
            }
            tries += 1;
            let j = rng.gen_range(0..split.num_items);
            if !split.is_train(u, j) {
                break j;
            }
        };
        out.push((u, i, j));
    }
    Ok(out)
}

/// `−Σ ln σ(ŷ_ui − ŷ_uj) + λ2 Σ_θ ‖θ‖²` with `ŷ` the dot product of the
/// user and item rows.
pub fn bpr_loss<T: Scalar>(
    tape: &mut Tape<T>,
    users: Var,
    items: Var,
    triples: &[Triple],
    lambda2: f64,
    regularized: &[Var],
) -> Result<Var> {
    if triples.is_empty() {
        return Err(TrainError::EmptyBatch.into());
    }
    let us: Arc<[usize]> = triples.iter().map(|t| t.0).collect();
    let is: Arc<[usize]> = triples.iter().map(|t| t.1).collect();
    let js: Arc<[usize]> = triples.iter().map(|t| t.2).collect();
    let u = tape.gather_rows(users, us)?;
    let i = tape.gather_rows(items, is)?;
    let j = tape.gather_rows(items, js)?;
    let ui = tape.mul(u, i)?;
    let ui = tape.row_sum(ui)?;
    let uj = tape.mul(u, j)?;
    let uj = tape.row_sum(uj)?;
    let diff = tape.sub(ui, uj)?;
    let ls = tape.log_sigmoid(diff)?;
    let s = tape.sum(ls)?;
    let mut loss = tape.scale(s, -T::one())?;
    if lambda2 > 0.0 {
        for &p in regularized {
            let sq = tape.mul(p, p)?;
            let sq = tape.sum(sq)?;
            let term = tape.scale(sq, T::of(lambda2))?;
            loss = tape.add(loss, term)?;
        }
    }
    Ok(loss)
}

/// Loss components of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub l_bpr: f64,
    pub l_u: f64,
    pub l_i: f64,
    pub total: f64,
    pub grad_norm: f64,
}

/// Batch-averaged losses of one epoch.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub l_bpr: f64,
    pub l_u: f64,
    pub l_i: f64,
    pub total: f64,
    pub grad_norm: f64,
    /// Validation recall at the selection K, when a validation set exists.
    pub val_recall20: Option<f64>,
    pub seconds: f64,
}

impl EpochReport {
    /// Equality ignoring wall time.
    pub fn same_numbers(&self, other: &Self) -> bool {
        Self { seconds: 0.0, ..self.clone() } == Self { seconds: 0.0, ..other.clone() }
    }
}

/// Result of [`Trainer::fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_recall: Option<f64>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
struct Best<T> {
    epoch: usize,
    recall: f64,
    params: ParamStore<T>,
}

/// Owns the model, optimizer and random streams of one training run.
#[derive(Debug)]
pub struct Trainer<T> {
    cfg: TrainConfig,
    model: MclModel<T>,
    ctx: GraphContext<T>,
    split: InteractionSplit,
    adam: AdamState<T>,
    mask_rng: ChaCha8Rng,
    neg_rng: ChaCha8Rng,
    epoch: usize,
    best: Option<Best<T>>,
    stale: usize,
}

impl<T: Scalar> Trainer<T> {
    /// Fresh parameters from the config seed.
    pub fn new(cfg: TrainConfig, ctx: GraphContext<T>, split: InteractionSplit) -> Result<Self> {
        cfg.validate()?;
        let model = MclModel::new(&ctx, cfg.dim, cfg.seed)?;
        Ok(Self::with_model(cfg, ctx, split, model))
    }

    pub fn with_model(cfg: TrainConfig, ctx: GraphContext<T>, split: InteractionSplit, model: MclModel<T>) -> Self {
        let adam = AdamState::new(AdamConfig::with_lr(cfg.lr), model.params.tensors());
        Self {
            mask_rng: stream(cfg.seed, Stream::Mask),
            neg_rng: stream(cfg.seed, Stream::Negatives),
            cfg,
            model,
            ctx,
            split,
            adam,
            epoch: 0,
            best: None,
            stale: 0,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &MclModel<T> {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut MclModel<T> {
        &mut self.model
    }

    pub fn context(&self) -> &GraphContext<T> {
        &self.ctx
    }

    pub fn split(&self) -> &InteractionSplit {
        &self.split
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn masks(&mut self) -> Result<Option<StepMasks>> {
        let c = &self.cfg;
        if c.ablation.no_meta || c.ablation.no_mask || !c.mask_enabled {
            return Ok(None);
        }
        Ok(Some(StepMasks {
            user: sample_mask(self.ctx.num_users(), c.mask_delta, &mut self.mask_rng)?,
            item: sample_mask(self.ctx.num_items(), c.mask_delta, &mut self.mask_rng)?,
        }))
    }

    /// Builds the joint loss `L_bpr + β (L_u + L_i)` on `tape` for the
    /// given triples. Returns the forward handles and the loss parts.
    pub fn joint_loss(
        &self,
        tape: &mut Tape<T>,
        triples: &[Triple],
        masks: Option<&StepMasks>,
    ) -> Result<(crate::model::Forward, Var, Var, Option<Var>)> {
        let beta = self.cfg.effective_beta();
        let f = self.model.forward(tape, &self.ctx, &self.cfg, masks, beta > 0.0)?;
        let reg: Vec<Var> = match self.cfg.l2_scope {
            L2Scope::Embeddings => self.model.embedding_slots().iter().map(|&s| f.params[s]).collect(),
            L2Scope::All => f.params.clone(),
        };
        let l_bpr = bpr_loss(tape, f.user, f.item, triples, self.cfg.lambda2, &reg)?;
        let (total, cl) = match (f.l_user, f.l_item) {
            (Some(lu), Some(li)) if beta > 0.0 => {
                let cl = tape.add(lu, li)?;
                let weighted = tape.scale(cl, T::of(beta))?;
                (tape.add(l_bpr, weighted)?, Some(cl))
            }
            _ => (l_bpr, None),
        };
        Ok((f, l_bpr, total, cl))
    }

    /// One forward/backward/Adam step on a batch.
    pub fn step(&mut self, triples: &[Triple]) -> Result<StepLosses> {
        let masks = self.masks()?;
        let mut tape = Tape::new();
        let (f, l_bpr, total, _) = self.joint_loss(&mut tape, triples, masks.as_ref())?;
        let read = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item().as_f64());
        let losses = StepLosses {
            l_bpr: read(Some(l_bpr)),
            l_u: read(f.l_user),
            l_i: read(f.l_item),
            total: read(Some(total)),
            grad_norm: 0.0,
        };
        let mut grads = tape.backward(total)?;
        let grads: Vec<Tensor<T>> = f.params.iter().map(|&v| grads.take(v)).collect();
        let norm = grads.iter().map(|g| g.squared_norm().as_f64()).sum::<f64>().sqrt();
        if !losses.total.is_finite() || !norm.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch: self.epoch + 1,
                batch: 0,
                l_bpr: losses.l_bpr,
                l_u: losses.l_u,
                l_i: losses.l_i,
            }
            .into());
        }
        adam_step(self.model.params.tensors_mut(), &grads, &mut self.adam)?;
        Ok(StepLosses {
            grad_norm: norm,
            ..losses
        })
    }

    /// `⌈|train| / batch⌉` steps of freshly sampled triples, then a
    /// validation pass.
    pub fn train_epoch(&mut self) -> Result<EpochReport> {
        let start = Instant::now();
        let n = self.split.train().len();
        let batches = n.div_ceil(self.cfg.batch_size).max(1);
        let mut acc = [0.0; 5];
        for b in 0..batches {
            let triples = sample_bpr_batch(&self.split, self.cfg.batch_size, &mut self.neg_rng)?;
            let s = self.step(&triples).map_err(|e| match e {
                crate::Error::Train(TrainError::NonFiniteLoss { l_bpr, l_u, l_i, .. }) => TrainError::NonFiniteLoss {
                    epoch: self.epoch + 1,
                    batch: b,
                    l_bpr,
                    l_u,
                    l_i,
                }
                .into(),
                other => other,
            })?;
            for (a, v) in acc.iter_mut().zip([s.l_bpr, s.l_u, s.l_i, s.total, s.grad_norm]) {
                *a += v;
            }
        }
        self.epoch += 1;
        let val = self.validation_recall()?;
        let k = batches as f64;
        Ok(EpochReport {
            epoch: self.epoch,
            l_bpr: acc[0] / k,
            l_u: acc[1] / k,
            l_i: acc[2] / k,
            total: acc[3] / k,
            grad_norm: acc[4] / k,
            val_recall20: val,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Validation Recall@`select_k`, or `None` without validation data.
    pub fn validation_recall(&self) -> Result<Option<f64>> {
        if self.split.val().is_empty() {
            return Ok(None);
        }
        let scores = self.model.score_matrix(&self.ctx, &self.cfg)?;
        let r = validation_rank(&scores, &self.split, &[self.cfg.select_k])?;
        Ok(Some(r.recall[0]))
    }

    /// Trains until `epochs` or until validation recall has not improved
    /// for `patience` epochs, then restores the best parameters.
    pub fn fit(&mut self, mut on_epoch: impl FnMut(&EpochReport)) -> Result<FitSummary> {
        let mut stopped_early = false;
        while self.epoch < self.cfg.epochs {
            let report = self.train_epoch()?;
            on_epoch(&report);
            if let Some(recall) = report.val_recall20 {
                let improved = self.best.as_ref().is_none_or(|b| recall > b.recall);
                if improved {
                    self.best = Some(Best {
                        epoch: self.epoch,
                        recall,
                        params: self.model.params.clone(),
                    });
                    self.stale = 0;
                } else {
                    self.stale += 1;
                    if self.stale >= self.cfg.patience {
                        stopped_early = true;
                        break;
                    }
                }
            }
        }
        let summary = match &self.best {
            Some(b) => {
                self.model.params = b.params.clone();
                FitSummary {
                    epochs_run: self.epoch,
                    best_epoch: b.epoch,
                    best_val_recall: Some(b.recall),
                    stopped_early,
                }
            }
            None => FitSummary {
                epochs_run: self.epoch,
                best_epoch: self.epoch,
                best_val_recall: None,
                stopped_early,
            },
        };
        Ok(summary)
    }

    /// Test ranking with train and validation items excluded.
    pub fn evaluate(&self, ks: &[usize]) -> Result<RankingResult> {
        let scores = self.model.score_matrix(&self.ctx, &self.cfg)?;
        Ok(topk_rank(&scores, &self.split, ks)?)
    }

    /// Validation ranking with train items excluded.
    pub fn evaluate_validation(&self, ks: &[usize]) -> Result<RankingResult> {
        let scores = self.model.score_matrix(&self.ctx, &self.cfg)?;
        Ok(validation_rank(&scores, &self.split, ks)?)
    }

    pub fn into_model(self) -> MclModel<T> {
        self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn ten_interactions_split_seven_one_two() {
        let inter: Vec<(usize, usize)> = (0..10).map(|i| (0, i)).chain([(1, 3)]).collect();
        let s = split_interactions(&inter, 2, 10, 4).unwrap();
        assert_eq!(s.train_items(0).len(), 7);
        assert_eq!(s.val_items(0).len(), 1);
        assert_eq!(s.test_items(0).len(), 2);
        assert_eq!(s.train_items(1), &[3]);
        assert!(s.test_items(1).is_empty());
        assert_eq!(s, split_interactions(&inter, 2, 10, 4).unwrap());
    }

    #[test]
    fn user_without_interactions_rejected() {
        assert_eq!(
            split_interactions(&[(0, 0)], 2, 1, 0).unwrap_err(),
            TrainError::UserWithoutInteractions(1)
        );
    }

    #[test]
    fn saturated_catalog_gives_up() {
        let s = InteractionSplit::from_parts(1, 2, vec![(0, 0), (0, 1)], vec![], vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            sample_bpr_batch(&s, 1, &mut rng).unwrap_err(),
            TrainError::NegativeSamplingExhausted { user: 0, tries: 100 }
        );
        assert_eq!(sample_bpr_batch(&s, 0, &mut rng).unwrap_err(), TrainError::EmptyBatch);
    }

    #[test]
    fn equal_scores_cost_ln2() {
        let mut tape = Tape::<f64>::new();
        let u = tape.param(Tensor::from_rows(&[vec![1.0, 2.0]]));
        let i = tape.param(Tensor::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]));
        let l = bpr_loss(&mut tape, u, i, &[(0, 0, 1)], 0.0, &[]).unwrap();
        assert!((tape.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
