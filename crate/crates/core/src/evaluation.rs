//! Top-K ranking metrics, noise-interaction injection and robustness
//! report rows.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::scalar::Scalar;
use crate::trainer::InteractionSplit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no user has held-out items to rank")]
    EmptyTestSet,
    #[error("user has no relevant items")]
    NoRelevantItems,
    #[error("K must be at least 1")]
    ZeroK,
    #[error("noise ratio must lie in (0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("score matrix is {rows}x{cols} but the split has {users} users and {items} items")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        users: usize,
        items: usize,
    },
}

/// Top `k` item ids of one score row, skipping `exclude` (sorted). Higher
/// scores first; ties go to the smaller id.
pub fn top_k<T: Scalar>(scores: &[T], exclude: &[usize], k: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scores.len())
        .filter(|i| exclude.binary_search(i).is_err())
        .collect();
    let better = |a: &usize, b: &usize| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    };
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k, better);
        candidates.truncate(k);
    }
    candidates.sort_by(better);
    candidates
}

/// `|topK ∩ relevant| / |relevant|`.
pub fn recall_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if relevant.is_empty() {
        return Err(EvalError::NoRelevantItems);
    }
    let hits = ranked.iter().take(k).filter(|i| relevant.contains(i)).count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// DCG over hits at 1-based rank `r` with gain `1 / log2(r + 1)`, divided
/// by the DCG of `min(|relevant|, K)` hits at the top.
pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if relevant.is_empty() {
        return Err(EvalError::NoRelevantItems);
    }
    let gain = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(pos, _)| gain(pos))
        .sum();
    let idcg: f64 = (0..relevant.len().min(k)).map(gain).sum();
    Ok(dcg / idcg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRanking {
    pub user: usize,
    /// Ranked list of length `max(K)`.
    pub items: Vec<usize>,
    /// Per K, in the order of [`RankingResult::ks`].
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub ks: Vec<usize>,
    pub users: Vec<UserRanking>,
    /// Means over ranked users, per K.
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
}

impl RankingResult {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.recall[i])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.ndcg[i])
    }
}

/// Ranks every user with a nonempty `relevant` list. `exclude[u]` and
/// `relevant[u]` are sorted item lists.
pub fn rank_users<T: Scalar>(
    scores: &Tensor<T>,
    exclude: &[Vec<usize>],
    relevant: &[Vec<usize>],
    ks: &[usize],
) -> Result<RankingResult, EvalError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(EvalError::ZeroK);
    }
    if scores.rows() != relevant.len() || exclude.len() != relevant.len() {
        return Err(EvalError::ShapeMismatch {
            rows: scores.rows(),
            cols: scores.cols(),
            users: relevant.len(),
            items: scores.cols(),
        });
    }
    let kmax = *ks.iter().max().expect("nonempty");
    let users: Vec<UserRanking> = (0..relevant.len())
        .into_par_iter()
        .filter(|&u| !relevant[u].is_empty())
        .map(|u| {
            let items = top_k(scores.row(u), &exclude[u], kmax);
            let recall = ks.iter().map(|&k| recall_at_k(&items, &relevant[u], k).expect("nonempty")).collect();
            let ndcg = ks.iter().map(|&k| ndcg_at_k(&items, &relevant[u], k).expect("nonempty")).collect();
            UserRanking {
                user: u,
                items,
                recall,
                ndcg,
            }
        })
        .collect();
    if users.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let mean = |f: &dyn Fn(&UserRanking) -> f64| users.iter().map(f).sum::<f64>() / users.len() as f64;
    let recall = (0..ks.len()).map(|j| mean(&|r: &UserRanking| r.recall[j])).collect();
    let ndcg = (0..ks.len()).map(|j| mean(&|r: &UserRanking| r.ndcg[j])).collect();
    Ok(RankingResult {
        ks: ks.to_vec(),
        users,
        recall,
        ndcg,
    })
}

/// Test ranking: train and validation items are excluded.
pub fn topk_rank<T: Scalar>(
    scores: &Tensor<T>,
    split: &InteractionSplit,
    ks: &[usize],
) -> Result<RankingResult, EvalError> {
    check_scores(scores, split)?;
    let exclude: Vec<Vec<usize>> = (0..split.num_users())
        .map(|u| merge(split.train_items(u), split.val_items(u)))
        .collect();
    rank_users(scores, &exclude, split.test_lists(), ks)
}

/// Validation ranking: train items are excluded.
pub fn validation_rank<T: Scalar>(
    scores: &Tensor<T>,
    split: &InteractionSplit,
    ks: &[usize],
) -> Result<RankingResult, EvalError> {
    check_scores(scores, split)?;
    rank_users(scores, split.train_lists(), split.val_lists(), ks)
}

/// Ranking of the training interactions themselves with nothing excluded;
/// measures how well a model fits its training data.
pub fn train_rank<T: Scalar>(
    scores: &Tensor<T>,
    split: &InteractionSplit,
    ks: &[usize],
) -> Result<RankingResult, EvalError> {
    check_scores(scores, split)?;
    let none = vec![Vec::new(); split.num_users()];
    rank_users(scores, &none, split.train_lists(), ks)
}

fn check_scores<T: Scalar>(scores: &Tensor<T>, split: &InteractionSplit) -> Result<(), EvalError> {
    if scores.rows() != split.num_users() || scores.cols() != split.num_items() {
        return Err(EvalError::ShapeMismatch {
            rows: scores.rows(),
            cols: scores.cols(),
            users: split.num_users(),
            items: split.num_items(),
        });
    }
    Ok(())
}

fn merge(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Outcome of [`inject_noise`].
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    pub requested: usize,
    pub added: Vec<(usize, usize)>,
    /// Users drawn for a noise edge who had no unseen item left.
    pub saturated_users: Vec<usize>,
}

/// Picks `⌈ratio · |train|⌉` training interactions and, for each picked
/// `(u, i)`, adds `(u, j)` with `j` uniform over items `u` has not seen in
/// train, validation, test or earlier noise. Validation and test are left
/// untouched.
pub fn inject_noise<R: Rng + ?Sized>(
    split: &InteractionSplit,
    ratio: f64,
    rng: &mut R,
) -> Result<(InteractionSplit, NoiseReport), EvalError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(EvalError::InvalidRatio(ratio));
    }
    let train = split.train();
    let requested = ((ratio * train.len() as f64).ceil() as usize).min(train.len());
    let mut picked = sample(rng, train.len(), requested).into_vec();
    picked.sort_unstable();
    let mut seen: Vec<BTreeSet<usize>> = (0..split.num_users())
        .map(|u| {
            split.train_items(u)
                .iter()
                .chain(split.val_items(u))
                .chain(split.test_items(u))
                .copied()
                .collect()
        })
        .collect();
    let mut added = Vec::new();
    let mut saturated = Vec::new();
    for idx in picked {
        let u = train[idx].0;
        let free = split.num_items() - seen[u].len();
        if free == 0 {
            log::warn!("user {u} has interacted with every item; skipping a noise edge");
            saturated.push(u);
            continue;
        }
        // The n-th unseen item, found by walking the gaps of the seen set.
        let mut n = rng.gen_range(0..free);
        let mut j = 0;
        loop {
            if !seen[u].contains(&j) {
                if n == 0 {
                    break;
                }
                n -= 1;
            }
            j += 1;
        }
        seen[u].insert(j);
        added.push((u, j));
    }
    let mut new_train = train.to_vec();
    new_train.extend(&added);
    let perturbed = InteractionSplit::from_parts(
        split.num_users(),
        split.num_items(),
        new_train,
        split.val().to_vec(),
        split.test().to_vec(),
    );
    Ok((
        perturbed,
        NoiseReport {
            requested,
            added,
            saturated_users: saturated,
        },
    ))
}

/// One line of a robustness or ablation report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub condition: String,
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    /// Relative Recall@K drop versus the matching clean run, in percent.
    pub rel_drop_pct: f64,
    pub seed: String,
    pub wall_seconds: f64,
}

pub const REPORT_HEADER: &str = "condition,K,recall,ndcg,rel_drop_pct,seed,wall_seconds";

/// `100 · (clean − perturbed) / clean`, zero when the clean value is zero.
pub fn relative_drop_pct(clean: f64, perturbed: f64) -> f64 {
    if clean == 0.0 {
        0.0
    } else {
        100.0 * (clean - perturbed) / clean
    }
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.3}",
            r.condition, r.k, r.recall, r.ndcg, r.rel_drop_pct, r.seed, r.wall_seconds
        );
    }
    out
}
