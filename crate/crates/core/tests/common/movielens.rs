//! Criteria that need the real MovieLens-100k files. They run only when
//! `ML_100K_DIR` points at a directory holding `u.data`, `u.user` and
//! `u.item`; `ML_100K_OUT` keeps the run directories (a temp dir otherwise).

use std::path::PathBuf;
use std::time::{Duration, Instant};

use mcl_core::config::ExperimentConfig;
use mcl_core::data::{load_dataset, Dataset};
use mcl_core::evaluation::ReportRow;
use mcl_core::experiment::{self, mean_row};

pub const TARGET_RECALL20: f64 = 0.3415;
pub const TARGET_NDCG20: f64 = 0.4110;
pub const REL_TOL: f64 = 0.10;
pub const WALL_BUDGET: Duration = Duration::from_secs(2 * 3600);
pub const SEEDS: [u64; 3] = [0, 1, 2];

pub enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

impl Outcome {
    pub fn check(ok: bool, detail: String) -> Self {
        if ok {
            Outcome::Pass(detail)
        } else {
            Outcome::Fail(detail)
        }
    }

    pub fn passed(&self) -> Option<bool> {
        match self {
            Outcome::Pass(_) => Some(true),
            Outcome::Fail(_) => Some(false),
            Outcome::NotRun(_) => None,
        }
    }

    pub fn line(&self, name: &str) -> String {
        match self {
            Outcome::Pass(d) => format!("PASS    {name}: {d}"),
            Outcome::Fail(d) => format!("FAIL    {name}: {d}"),
            Outcome::NotRun(d) => format!("NOT RUN {name}: {d}"),
        }
    }
}

pub struct Movielens {
    pub ds: Dataset,
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    _tmp: Option<tempfile::TempDir>,
}

/// Loads the dataset named by `ML_100K_DIR`, or explains why not.
pub fn load() -> Result<Movielens, String> {
    let dir = std::env::var_os("ML_100K_DIR").ok_or("ML_100K_DIR is not set")?;
    let out = std::env::var_os("ML_100K_OUT").map(PathBuf::from);
    from_dir(ExperimentConfig::default(), PathBuf::from(dir), out)
}

pub fn from_dir(mut cfg: ExperimentConfig, dir: PathBuf, out: Option<PathBuf>) -> Result<Movielens, String> {
    cfg.dataset = dir;
    let ds = load_dataset(&cfg).map_err(|e| format!("cannot load MovieLens: {e}"))?;
    let (out, tmp) = match out {
        Some(p) => (p, None),
        None => {
            let t = tempfile::tempdir().map_err(|e| e.to_string())?;
            (t.path().to_path_buf(), Some(t))
        }
    };
    Ok(Movielens { ds, cfg, out, _tmp: tmp })
}

fn recall20(rows: &[ReportRow], condition: &str) -> f64 {
    mean_row(rows, condition, 20)
        .unwrap_or_else(|| panic!("no mean row for {condition}"))
        .recall
}

fn drop20(rows: &[ReportRow], condition: &str) -> f64 {
    mean_row(rows, condition, 20)
        .unwrap_or_else(|| panic!("no mean row for {condition}"))
        .rel_drop_pct
}

/// Default reproduction grid; `ML_100K_GRID` replaces it with
/// `key=values` entries separated by `;`.
pub const DEFAULT_GRID: &str = "prop_order_L=1,2,3;tau=0.5,0.7,0.9;lr=0.001,0.005";

/// Sweeps L, τ and the learning rate, picks the best point by validation
/// Recall@20 and compares its test metrics with the reference values.
pub fn reproduction(ml: &Movielens) -> Outcome {
    let mut cfg = ml.cfg.clone();
    let grid = std::env::var("ML_100K_GRID").unwrap_or_else(|_| DEFAULT_GRID.to_string());
    for entry in grid.split(';').filter(|e| !e.trim().is_empty()) {
        let Some((k, v)) = entry.split_once('=') else {
            return Outcome::Fail(format!("bad grid entry `{entry}`"));
        };
        if let Err(e) = cfg.set(&format!("sweep.{}", k.trim()), v.trim()) {
            return Outcome::Fail(format!("bad grid entry `{entry}`: {e}"));
        }
    }
    let started = Instant::now();
    let result = match experiment::sweep(&ml.ds, &cfg, &ml.out.join("reproduction"), true) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("sweep failed: {e}")),
    };
    let wall = started.elapsed();
    let Some(best) = result.best else {
        return Outcome::Fail("no grid point finished".into());
    };
    let rec = &result.points[best].record;
    let (r, n) = (rec.test_recall(20).unwrap_or(0.0), rec.test_ndcg(20).unwrap_or(0.0));
    let ok = (r / TARGET_RECALL20 - 1.0).abs() <= REL_TOL && (n / TARGET_NDCG20 - 1.0).abs() <= REL_TOL;
    Outcome::check(
        ok,
        format!(
            "Recall@20 {r:.4} (target {TARGET_RECALL20}), NDCG@20 {n:.4} (target {TARGET_NDCG20}), ±{:.0}%, wall {:.0}s (budget {}s{})",
            REL_TOL * 100.0,
            wall.as_secs_f64(),
            WALL_BUDGET.as_secs(),
            if wall <= WALL_BUDGET { "" } else { ", exceeded" }
        ),
    )
}

pub fn ablation_ordering(ml: &Movielens) -> Outcome {
    let rows = match experiment::ablate(&ml.ds, &ml.cfg, &SEEDS, Some(&ml.out.join("ablation"))) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("ablation failed: {e}")),
    };
    let r = |c| recall20(&rows, c);
    let (mcl, cl, mask, meta, hop) = (r("mcl"), r("w/o-cl"), r("w/o-mask"), r("w/o-meta"), r("w/o-1hop"));
    Outcome::check(
        mcl > cl && cl > mask && mcl > meta && meta > hop,
        format!("mcl {mcl:.4}, w/o-cl {cl:.4}, w/o-mask {mask:.4}, w/o-meta {meta:.4}, w/o-1hop {hop:.4}"),
    )
}

fn robustness_rows(ml: &Movielens) -> Result<Vec<ReportRow>, String> {
    let mut cfg = ml.cfg.clone();
    cfg.noise_ratios = vec![0.3];
    experiment::robustness(&ml.ds, &cfg, &SEEDS, Some(&ml.out.join("robustness"))).map_err(|e| e.to_string())
}

pub fn noise_robustness(rows: &Result<Vec<ReportRow>, String>) -> Outcome {
    let rows = match rows {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("robustness failed: {e}")),
    };
    let (mcl, mask) = (drop20(rows, "mcl/noise0.3"), drop20(rows, "w/o-mask/noise0.3"));
    Outcome::check(mcl < mask, format!("Recall@20 drop at 30% noise: mcl {mcl:.2}%, w/o-mask {mask:.2}%"))
}

pub fn redundant_metapaths(rows: &Result<Vec<ReportRow>, String>) -> Outcome {
    let rows = match rows {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("robustness failed: {e}")),
    };
    let (mcl, hop) = (drop20(rows, "mcl/extra_metapaths"), drop20(rows, "w/o-1hop/extra_metapaths"));
    Outcome::check(mcl < hop, format!("Recall@20 drop with redundant paths: mcl {mcl:.2}%, w/o-1hop {hop:.2}%"))
}

pub fn infonce(ml: &Movielens) -> Outcome {
    let rows = match experiment::infonce_comparison(&ml.ds, &ml.cfg, &SEEDS, Some(&ml.out.join("infonce"))) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("comparison failed: {e}")),
    };
    let (mcl, info) = (recall20(&rows, "mcl"), recall20(&rows, "mcl-infonce"));
    Outcome::check(mcl > info, format!("Recall@20 mcl {mcl:.4}, diagonal positives {info:.4}"))
}

/// All MovieLens criteria in acceptance order, or `NotRun` for each.
pub fn all() -> Vec<(&'static str, Outcome)> {
    let names = [
        "desk-scale reproduction",
        "ablation ordering",
        "noise robustness ordering",
        "redundant meta-path robustness",
        "multi-path positives beat diagonal positives",
    ];
    match load() {
        Ok(ml) => run_all(&ml).into_iter().zip(names).map(|(o, n)| (n, o)).collect(),
        Err(why) => names.iter().map(|n| (*n, Outcome::NotRun(why.clone()))).collect(),
    }
}

pub fn run_all(ml: &Movielens) -> Vec<Outcome> {
    let robust = robustness_rows(ml);
    vec![
        reproduction(ml),
        ablation_ordering(ml),
        noise_robustness(&robust),
        redundant_metapaths(&robust),
        infonce(ml),
    ]
}
