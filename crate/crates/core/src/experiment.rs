//! End-to-end runs: split, perturb, train, evaluate and persist. Also the
//! sweep, robustness and ablation drivers built on top of single runs.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::hash::{Hash, Hasher};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{read_checkpoint, write_checkpoint, Tensor};
use crate::config::{Ablation, ExperimentConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{inject_noise, relative_drop_pct, report_csv, NoiseReport, RankingResult, ReportRow};
use crate::model::{GraphContext, MclModel};
use crate::rng::{stream, Stream};
use crate::trainer::{split_interactions, EpochReport, FitSummary, InteractionSplit, Trainer};

/// Version string recorded with every run.
pub const VERSION: &str = concat!("mcl-", env!("CARGO_PKG_VERSION"));

/// Split, noise and training network for one config.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// The network with interactions replaced by the (perturbed) train set.
    pub train_network: Dataset,
    pub split: InteractionSplit,
    pub noise: Option<NoiseReport>,
}

/// Splits interactions by the config seed, injects noise if configured and
/// rebuilds the network from the training interactions only.
pub fn prepare(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Prepared> {
    let seed = cfg.train.seed;
    let mut split = split_interactions(&ds.interactions(), ds.num_users(), ds.num_items(), seed)?;
    let mut noise = None;
    if cfg.noise_ratio > 0.0 {
        let mut rng = stream(seed, Stream::Noise);
        let (perturbed, report) = inject_noise(&split, cfg.noise_ratio, &mut rng)?;
        log::info!(
            "injected {} noise edges ({} requested)",
            report.added.len(),
            report.requested
        );
        split = perturbed;
        noise = Some(report);
    }
    let train_network = ds.with_interactions(split.train().iter().copied())?;
    Ok(Prepared {
        train_network,
        split,
        noise,
    })
}

/// Graph context over the training network with the config's path set.
pub fn context(prepared: &Prepared, cfg: &ExperimentConfig) -> Result<GraphContext<f64>> {
    let paths = prepared.train_network.run_metapaths(cfg.use_extra_metapaths)?;
    GraphContext::build(&prepared.train_network, &paths, cfg.train.infonce_ablation)
}

/// Test and validation rankings of a finished run.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub test: RankingResult,
    pub val: Option<RankingResult>,
}

impl RunMetrics {
    /// `split,K,recall,ndcg` rows; contains nothing time-dependent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("split,K,recall,ndcg\n");
        let mut put = |name: &str, r: &RankingResult| {
            for (idx, k) in r.ks.iter().enumerate() {
                let _ = writeln!(out, "{name},{k},{},{}", r.recall[idx], r.ndcg[idx]);
            }
        };
        put("test", &self.test);
        if let Some(v) = &self.val {
            put("val", v);
        }
        out
    }

    pub fn test_recall(&self, k: usize) -> f64 {
        self.test.recall_at(k).unwrap_or(f64::NAN)
    }

    pub fn test_ndcg(&self, k: usize) -> f64 {
        self.test.ndcg_at(k).unwrap_or(f64::NAN)
    }

    pub fn val_recall(&self, k: usize) -> Option<f64> {
        self.val.as_ref().and_then(|v| v.recall_at(k))
    }
}

/// Persisted summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub version: String,
    pub seed: u64,
    pub config: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_recall: Option<f64>,
    pub stopped_early: bool,
    /// `(K, recall, ndcg)` on the test split.
    pub test: Vec<(usize, f64, f64)>,
    pub val: Vec<(usize, f64, f64)>,
    pub noise_edges: usize,
    pub checkpoint: Option<PathBuf>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub wall_seconds: f64,
}

impl RunRecord {
    pub fn test_recall(&self, k: usize) -> Option<f64> {
        self.test.iter().find(|t| t.0 == k).map(|t| t.1)
    }

    pub fn test_ndcg(&self, k: usize) -> Option<f64> {
        self.test.iter().find(|t| t.0 == k).map(|t| t.2)
    }

    pub fn val_recall(&self, k: usize) -> Option<f64> {
        self.val.iter().find(|t| t.0 == k).map(|t| t.1)
    }
}

/// Everything a finished run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub metrics: RunMetrics,
    pub epochs: Vec<EpochReport>,
    pub trainer: Trainer<f64>,
    pub dir: Option<PathBuf>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn triples(r: &RankingResult) -> Vec<(usize, f64, f64)> {
    r.ks.iter()
        .enumerate()
        .map(|(i, &k)| (k, r.recall[i], r.ndcg[i]))
        .collect()
}

/// Run id derived from the dataset name and the config snapshot.
pub fn default_run_id(ds: &Dataset, cfg: &ExperimentConfig) -> String {
    let mut h = DefaultHasher::new();
    cfg.to_text().hash(&mut h);
    format!("{}-s{}-{:08x}", ds.name, cfg.train.seed, h.finish() as u32)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Trains and evaluates one config. With `out_dir` the run directory
/// `out_dir/run_id` receives `config.txt`, `log.jsonl`, `metrics.csv`,
/// `checkpoint.bin`, `embeddings.tsv` and `run.json`.
pub fn run(ds: &Dataset, cfg: &ExperimentConfig, out_dir: Option<&Path>, run_id: Option<&str>) -> Result<RunOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let started_unix = unix_now();
    let run_id = run_id.map_or_else(|| default_run_id(ds, cfg), str::to_string);
    let dir = out_dir.map(|d| d.join(&run_id));
    let mut log_file = match &dir {
        Some(d) => {
            create_dir(d)?;
            write_file(&d.join("config.txt"), cfg.to_text().as_bytes())?;
            let path = d.join("log.jsonl");
            Some((BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?), path))
        }
        None => None,
    };

    let prepared = prepare(ds, cfg)?;
    let ctx = context(&prepared, cfg)?;
    log::info!(
        "{run_id}: {} users, {} items, {} train / {} val / {} test interactions",
        ctx.num_users(),
        ctx.num_items(),
        prepared.split.train().len(),
        prepared.split.val().len(),
        prepared.split.test().len()
    );
    let mut trainer = Trainer::new(cfg.train.clone(), ctx, prepared.split.clone())?;
    let mut epochs = Vec::new();
    let mut io_error = None;
    let summary: FitSummary = trainer.fit(|r| {
        log::debug!(
            "{run_id} epoch {}: total {:.5} bpr {:.5} val_recall {:?}",
            r.epoch,
            r.total,
            r.l_bpr,
            r.val_recall20
        );
        if let Some((w, path)) = &mut log_file {
            let line = serde_json::to_string(r).expect("epoch report serializes");
            if let Err(e) = writeln!(w, "{line}") {
                io_error.get_or_insert_with(|| Error::io(path.clone(), e));
            }
        }
        epochs.push(r.clone());
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    if let Some((mut w, path)) = log_file {
        w.flush().map_err(|e| Error::io(path, e))?;
    }

    let test = trainer.evaluate(&cfg.train.eval_k)?;
    let val = if prepared.split.val().is_empty() {
        None
    } else {
        Some(trainer.evaluate_validation(&cfg.train.eval_k)?)
    };
    let metrics = RunMetrics { test, val };
    let wall_seconds = started.elapsed().as_secs_f64();
    log::info!(
        "{run_id}: best epoch {} of {}, test recall {:?}",
        summary.best_epoch,
        summary.epochs_run,
        metrics.test.recall
    );

    let mut record = RunRecord {
        run_id: run_id.clone(),
        version: VERSION.to_string(),
        seed: cfg.train.seed,
        config: cfg.to_text(),
        epochs_run: summary.epochs_run,
        best_epoch: summary.best_epoch,
        best_val_recall: summary.best_val_recall,
        stopped_early: summary.stopped_early,
        test: triples(&metrics.test),
        val: metrics.val.as_ref().map(triples).unwrap_or_default(),
        noise_edges: prepared.noise.as_ref().map_or(0, |n| n.added.len()),
        checkpoint: None,
        started_unix,
        finished_unix: unix_now(),
        wall_seconds,
    };
    if let Some(d) = &dir {
        write_file(&d.join("metrics.csv"), metrics.to_csv().as_bytes())?;
        let ck = d.join("checkpoint.bin");
        let mut bytes = Vec::new();
        write_checkpoint(&trainer.model().params, &mut bytes)?;
        write_file(&ck, &bytes)?;
        record.checkpoint = Some(ck);
        write_embeddings(&d.join("embeddings.tsv"), &prepared.train_network, &trainer)?;
        let json = serde_json::to_string_pretty(&record).expect("run record serializes");
        write_file(&d.join("run.json"), json.as_bytes())?;
    }
    Ok(RunOutcome {
        record,
        metrics,
        epochs,
        trainer,
        dir,
    })
}

/// `node_id \t type \t d floats` for every user and item, using the final
/// scoring representations.
pub fn embeddings_tsv(network: &Dataset, user: &Tensor<f64>, item: &Tensor<f64>) -> String {
    let hin = &network.hin;
    let mut out = String::new();
    for (t, table) in [(network.user_type, user), (network.item_type, item)] {
        let name = hin.schema().type_name(t);
        for local in 0..table.rows() {
            out.push_str(hin.external_id(hin.global_id(t, local)));
            out.push('\t');
            out.push_str(name);
            for v in table.row(local) {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
    }
    out
}

fn write_embeddings(path: &Path, network: &Dataset, trainer: &Trainer<f64>) -> Result<()> {
    let (u, i) = trainer.model().representations(trainer.context(), trainer.config())?;
    write_file(path, embeddings_tsv(network, &u, &i).as_bytes())
}

/// Rebuilds the run's split and network, loads a checkpoint and returns a
/// trainer ready for evaluation or export.
pub fn restore(ds: &Dataset, cfg: &ExperimentConfig, checkpoint: &Path) -> Result<(Prepared, Trainer<f64>)> {
    cfg.validate()?;
    let bytes = fs::read(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
    let params = read_checkpoint(bytes.as_slice())?;
    let prepared = prepare(ds, cfg)?;
    let ctx = context(&prepared, cfg)?;
    let mut model = MclModel::new(&ctx, cfg.train.dim, cfg.train.seed)?;
    model.load_params(&params)?;
    let trainer = Trainer::with_model(cfg.train.clone(), ctx, prepared.split.clone(), model);
    Ok((prepared, trainer))
}

/// Test metrics of a saved checkpoint.
pub fn evaluate_checkpoint(ds: &Dataset, cfg: &ExperimentConfig, checkpoint: &Path) -> Result<RunMetrics> {
    let (prepared, trainer) = restore(ds, cfg, checkpoint)?;
    let test = trainer.evaluate(&cfg.train.eval_k)?;
    let val = if prepared.split.val().is_empty() {
        None
    } else {
        Some(trainer.evaluate_validation(&cfg.train.eval_k)?)
    };
    Ok(RunMetrics { test, val })
}

/// Writes the embedding dump of a saved checkpoint.
pub fn export_embeddings(ds: &Dataset, cfg: &ExperimentConfig, checkpoint: &Path, path: &Path) -> Result<()> {
    let (prepared, trainer) = restore(ds, cfg, checkpoint)?;
    write_embeddings(path, &prepared.train_network, &trainer)
}

/// One finished grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub assignment: Vec<(String, String)>,
    pub record: RunRecord,
}

/// Result of [`sweep`].
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Index into `points` of the best validation recall.
    pub best: Option<usize>,
}

pub const SWEEP_HEADER: &str = "point,assignment,val_recall,test_recall,test_ndcg,best_epoch,run_id";

fn sweep_line(p: &SweepPoint, k: usize) -> String {
    let assignment: Vec<String> = p.assignment.iter().map(|(a, b)| format!("{a}={b}")).collect();
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    format!(
        "{},{},{},{},{},{},{}",
        p.index,
        assignment.join(";"),
        opt(p.record.val_recall(k)),
        opt(p.record.test_recall(k)),
        opt(p.record.test_ndcg(k)),
        p.record.best_epoch,
        p.record.run_id
    )
}

/// Runs every point of `cfg.sweep` (cross product, first key slowest) into
/// `out_dir/point-NNN`. Points whose `run.json` already exists are loaded
/// instead of retrained, and each finished point is appended to
/// `summary.csv` right away, so an interrupted sweep can be resumed.
/// Finishes with `best.txt`, the config of the best validation point.
pub fn sweep(ds: &Dataset, cfg: &ExperimentConfig, out_dir: &Path, parallel: bool) -> Result<SweepResult> {
    cfg.validate()?;
    create_dir(out_dir)?;
    let grid = cfg.grid_points();
    let k = cfg.train.select_k;
    let summary_path = out_dir.join("summary.csv");
    if !summary_path.exists() {
        write_file(&summary_path, format!("{SWEEP_HEADER}\n").as_bytes())?;
    }
    let summary = Mutex::new(
        OpenOptions::new()
            .append(true)
            .open(&summary_path)
            .map_err(|e| Error::io(&summary_path, e))?,
    );
    let run_point = |(index, assignment): (usize, &Vec<(String, String)>)| -> Result<SweepPoint> {
        let mut point_cfg = cfg.clone();
        point_cfg.sweep.clear();
        for (key, value) in assignment {
            point_cfg.set(key, value)?;
        }
        point_cfg.validate()?;
        let run_id = format!("point-{index:03}");
        let done = out_dir.join(&run_id).join("run.json");
        let record = match fs::read_to_string(&done) {
            Ok(text) => match serde_json::from_str::<RunRecord>(&text) {
                Ok(r) if r.config == point_cfg.to_text() => {
                    log::info!("{run_id}: already complete, reusing");
                    return Ok(SweepPoint {
                        index,
                        assignment: assignment.clone(),
                        record: r,
                    });
                }
                _ => run(ds, &point_cfg, Some(out_dir), Some(&run_id))?.record,
            },
            Err(_) => run(ds, &point_cfg, Some(out_dir), Some(&run_id))?.record,
        };
        let point = SweepPoint {
            index,
            assignment: assignment.clone(),
            record,
        };
        let mut f = summary.lock().expect("summary lock");
        writeln!(f, "{}", sweep_line(&point, k)).map_err(|e| Error::io(&summary_path, e))?;
        f.flush().map_err(|e| Error::io(&summary_path, e))?;
        Ok(point)
    };
    let results: Vec<Result<SweepPoint>> = if parallel {
        grid.par_iter().enumerate().map(run_point).collect()
    } else {
        grid.iter().enumerate().map(run_point).collect()
    };
    let mut points = Vec::with_capacity(results.len());
    for r in results {
        points.push(r?);
    }
    // Ties go to the earlier grid point.
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        let v = p.record.val_recall(k).unwrap_or(f64::NEG_INFINITY);
        let better = best.is_none_or(|b| v > points[b].record.val_recall(k).unwrap_or(f64::NEG_INFINITY));
        if better {
            best = Some(i);
        }
    }
    if let Some(b) = best {
        let p = &points[b];
        let mut text = format!("# best by validation Recall@{k}: {}\n", sweep_line(p, k));
        text.push_str(&p.record.config);
        write_file(&out_dir.join("best.txt"), text.as_bytes())?;
    }
    Ok(SweepResult { points, best })
}

/// Config for a named ablation variant.
pub fn with_variant(cfg: &ExperimentConfig, ablation: Ablation) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.train.ablation = ablation;
    c
}

fn variant(name: &str) -> Ablation {
    Ablation::VARIANTS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, a)| *a)
        .expect("known variant name")
}

/// One trained condition.
#[derive(Debug, Clone)]
pub struct ConditionRun {
    pub condition: String,
    pub variant: String,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub wall_seconds: f64,
}

fn run_condition(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    variant: &str,
    condition: &str,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<ConditionRun> {
    let mut c = cfg.clone();
    c.train.seed = seed;
    let started = Instant::now();
    let id = format!("{}-{condition}-s{seed}", variant.replace('/', "_"));
    let outcome = run(ds, &c, out_dir, Some(&id))?;
    Ok(ConditionRun {
        condition: condition.to_string(),
        variant: variant.to_string(),
        seed,
        metrics: outcome.metrics,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Report rows for a set of runs. `baseline_of` names, per run, the run
/// whose recall is the "clean" reference for the relative drop. Mean rows
/// over seeds follow the per-seed rows.
fn rows_for(
    runs: &[ConditionRun],
    ks: &[usize],
    label: impl Fn(&ConditionRun) -> String,
    baseline_of: impl Fn(&ConditionRun) -> Option<usize>,
) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for r in runs {
        for &k in ks {
            let recall = r.metrics.test_recall(k);
            let clean = baseline_of(r).map_or(recall, |b| runs[b].metrics.test_recall(k));
            rows.push(ReportRow {
                condition: label(r),
                k,
                recall,
                ndcg: r.metrics.test_ndcg(k),
                rel_drop_pct: relative_drop_pct(clean, recall),
                seed: r.seed.to_string(),
                wall_seconds: r.wall_seconds,
            });
        }
    }
    let mut labels: Vec<String> = Vec::new();
    for r in runs {
        let l = label(r);
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    for l in labels {
        for &k in ks {
            let matching: Vec<&ReportRow> = rows.iter().filter(|r| r.condition == l && r.k == k).collect();
            let n = matching.len() as f64;
            let mean = |f: fn(&ReportRow) -> f64| matching.iter().map(|r| f(r)).sum::<f64>() / n;
            let row = ReportRow {
                condition: l.clone(),
                k,
                recall: mean(|r| r.recall),
                ndcg: mean(|r| r.ndcg),
                rel_drop_pct: mean(|r| r.rel_drop_pct),
                seed: "mean".into(),
                wall_seconds: matching.iter().map(|r| r.wall_seconds).sum(),
            };
            rows.push(row);
        }
    }
    rows
}

/// Mean over the `seed == "mean"` row of a condition.
pub fn mean_row<'a>(rows: &'a [ReportRow], condition: &str, k: usize) -> Option<&'a ReportRow> {
    rows.iter()
        .find(|r| r.condition == condition && r.k == k && r.seed == "mean")
}

/// Variants compared under perturbation.
pub const ROBUSTNESS_VARIANTS: [&str; 3] = ["mcl", "w/o-mask", "w/o-1hop"];

/// Trains each robustness variant per seed on clean data, under every
/// configured noise ratio and with the redundant meta-paths added. Writes
/// `report.csv` and `runs.jsonl` into `out_dir` when given.
pub fn robustness(ds: &Dataset, cfg: &ExperimentConfig, seeds: &[u64], out_dir: Option<&Path>) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let mut conditions: Vec<(String, ExperimentConfig)> = Vec::new();
    let mut clean = cfg.clone();
    clean.noise_ratio = 0.0;
    clean.use_extra_metapaths = false;
    conditions.push(("clean".into(), clean.clone()));
    for &ratio in &cfg.noise_ratios {
        let mut c = clean.clone();
        c.noise_ratio = ratio;
        conditions.push((format!("noise{ratio}"), c));
    }
    if !ds.extra_metapaths.is_empty() {
        let mut c = clean.clone();
        c.use_extra_metapaths = true;
        conditions.push(("extra_metapaths".into(), c));
    }
    let runs_dir = out_dir.map(|d| d.join("runs"));
    let mut jobs = Vec::new();
    for v in ROBUSTNESS_VARIANTS {
        for &seed in seeds {
            for (name, c) in &conditions {
                jobs.push((v, seed, name.clone(), with_variant(c, variant(v))));
            }
        }
    }
    let runs = jobs
        .par_iter()
        .map(|(v, seed, name, c)| run_condition(ds, c, v, name, *seed, runs_dir.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let baseline = |r: &ConditionRun| {
        runs.iter()
            .position(|o| o.variant == r.variant && o.seed == r.seed && o.condition == "clean")
    };
    let rows = rows_for(&runs, &cfg.train.eval_k, |r| format!("{}/{}", r.variant, r.condition), baseline);
    if let Some(d) = out_dir {
        write_reports(d, "report.csv", &rows, &runs)?;
    }
    Ok(rows)
}

/// Trains full MCL and the four ablations per seed. Relative drops are
/// against full MCL with the same seed. Writes `ablation.csv` and
/// `runs.jsonl` when `out_dir` is given.
pub fn ablate(ds: &Dataset, cfg: &ExperimentConfig, seeds: &[u64], out_dir: Option<&Path>) -> Result<Vec<ReportRow>> {
    compare(ds, cfg, seeds, out_dir, &Ablation::VARIANTS, "ablation.csv")
}

/// Full MCL against the same model with diagonal-only positives.
pub fn infonce_comparison(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    seeds: &[u64],
    out_dir: Option<&Path>,
) -> Result<Vec<ReportRow>> {
    let mut info = cfg.clone();
    info.train.infonce_ablation = true;
    let mut base = cfg.clone();
    base.train.infonce_ablation = false;
    let runs_dir = out_dir.map(|d| d.join("runs"));
    let jobs: Vec<(&str, u64, &ExperimentConfig)> = seeds
        .iter()
        .flat_map(|&s| [("mcl", s, &base), ("mcl-infonce", s, &info)])
        .collect();
    let runs = jobs
        .par_iter()
        .map(|(name, seed, c)| run_condition(ds, c, name, "clean", *seed, runs_dir.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let baseline = |r: &ConditionRun| runs.iter().position(|o| o.variant == "mcl" && o.seed == r.seed);
    let rows = rows_for(&runs, &cfg.train.eval_k, |r| r.variant.clone(), baseline);
    if let Some(d) = out_dir {
        write_reports(d, "infonce.csv", &rows, &runs)?;
    }
    Ok(rows)
}

fn compare(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    seeds: &[u64],
    out_dir: Option<&Path>,
    variants: &[(&str, Ablation)],
    file: &str,
) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let runs_dir = out_dir.map(|d| d.join("runs"));
    let jobs: Vec<(&str, u64, ExperimentConfig)> = variants
        .iter()
        .flat_map(|(name, a)| seeds.iter().map(move |&s| (*name, s, with_variant(cfg, *a))))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|(name, seed, c)| run_condition(ds, c, name, "clean", *seed, runs_dir.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let baseline = |r: &ConditionRun| runs.iter().position(|o| o.variant == "mcl" && o.seed == r.seed);
    let rows = rows_for(&runs, &cfg.train.eval_k, |r| r.variant.clone(), baseline);
    if let Some(d) = out_dir {
        write_reports(d, file, &rows, &runs)?;
    }
    Ok(rows)
}

#[derive(Serialize)]
struct RunLine<'a> {
    variant: &'a str,
    condition: &'a str,
    seed: u64,
    test: Vec<(usize, f64, f64)>,
    wall_seconds: f64,
}

fn write_reports(dir: &Path, file: &str, rows: &[ReportRow], runs: &[ConditionRun]) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join(file), report_csv(rows).as_bytes())?;
    let mut jsonl = String::new();
    for r in runs {
        let line = RunLine {
            variant: &r.variant,
            condition: &r.condition,
            seed: r.seed,
            test: triples(&r.metrics.test),
            wall_seconds: r.wall_seconds,
        };
        jsonl.push_str(&serde_json::to_string(&line).expect("run line serializes"));
        jsonl.push('\n');
    }
    write_file(&dir.join("runs.jsonl"), jsonl.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic;

    fn quick() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.train.dim = 8;
        c.train.epochs = 3;
        c.train.batch_size = 64;
        c
    }

    #[test]
    fn noise_edges_join_the_training_network() {
        let ds = synthetic::toy(8, 10, 3, 2);
        let mut cfg = quick();
        cfg.noise_ratio = 0.3;
        let p = prepare(&ds, &cfg).unwrap();
        let noise = p.noise.as_ref().unwrap();
        assert!(!noise.added.is_empty());
        let inter = p.train_network.interactions();
        for e in &noise.added {
            assert!(inter.contains(e));
            assert!(!p.split.test().contains(e));
        }
        assert_eq!(inter.len(), p.split.train().len());
    }

    #[test]
    fn metrics_csv_layout() {
        let ds = synthetic::toy(8, 10, 3, 2);
        let out = run(&ds, &quick(), None, None).unwrap();
        let csv = out.metrics.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "split,K,recall,ndcg");
        assert!(lines[1].starts_with("test,10,"));
        assert_eq!(out.record.epochs_run, out.epochs.len());
    }

    #[test]
    fn mean_rows_average_seeds() {
        let runs: Vec<ConditionRun> = [0.2, 0.4]
            .iter()
            .enumerate()
            .map(|(s, &r)| ConditionRun {
                condition: "clean".into(),
                variant: "mcl".into(),
                seed: s as u64,
                metrics: RunMetrics {
                    test: RankingResult {
                        ks: vec![20],
                        users: vec![],
                        recall: vec![r],
                        ndcg: vec![r / 2.0],
                    },
                    val: None,
                },
                wall_seconds: 1.0,
            })
            .collect();
        let rows = rows_for(&runs, &[20], |r| r.variant.clone(), |_| None);
        let m = mean_row(&rows, "mcl", 20).unwrap();
        assert!((m.recall - 0.3).abs() < 1e-15);
        assert!((m.ndcg - 0.15).abs() < 1e-15);
        assert_eq!(m.rel_drop_pct, 0.0);
    }
}
