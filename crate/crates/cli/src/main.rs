//! `mcl`: train, evaluate and stress-test masked contrastive recommenders
//! on heterogeneous information networks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcl_core::config::ExperimentConfig;
use mcl_core::data::{load_dataset, Dataset};
use mcl_core::evaluation::{report_csv, ReportRow};
use mcl_core::experiment::{self, RunMetrics};
use mcl_core::{Error, Result};

#[derive(Parser)]
#[command(name = "mcl", version, about)]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write out/<run-id>/.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory name under --out-dir; derived from the config if absent.
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Score a saved checkpoint on the test split of its config.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Clean vs. noisy vs. redundant meta-path runs for MCL, w/o-mask and w/o-1hop.
    Robustness {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds; defaults to --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Full MCL and its four ablations.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds; defaults to --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Cross product of hyperparameter grids with best-by-validation summary.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// KEY=VALUES where VALUES is `a,b,c` or `start:stop:step`. Repeatable.
        #[arg(long, value_name = "KEY=VALUES")]
        grid: Vec<String>,
        /// Run grid points on the thread pool.
        #[arg(long)]
        parallel: bool,
    },
    /// Dump final user and item representations of a checkpoint as TSV.
    ExportEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to <out-dir>/embeddings.tsv.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Movielens directory (u.data, u.user, u.item) or generic TSV directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any config key. Applied last. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(flatten)]
    keys: KeyFlags,
}

/// Shortcuts for the most used config keys.
#[derive(Args)]
struct KeyFlags {
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    lambda1: Option<String>,
    #[arg(long)]
    lambda2: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    mask_delta: Option<String>,
    #[arg(long = "prop-order-l")]
    prop_order_l: Option<String>,
    #[arg(long)]
    fusion: Option<String>,
    #[arg(long)]
    noise_ratio: Option<String>,
    #[arg(long)]
    eval_k: Option<String>,
    #[arg(long)]
    use_extra_metapaths: bool,
    #[arg(long)]
    infonce_ablation: bool,
    #[arg(long)]
    no_mask: bool,
    #[arg(long)]
    no_cl: bool,
    #[arg(long = "no-1hop")]
    no_1hop: bool,
    #[arg(long)]
    no_meta: bool,
}

impl KeyFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let values = [
            ("dim", &self.dim),
            ("batch_size", &self.batch_size),
            ("epochs", &self.epochs),
            ("patience", &self.patience),
            ("lr", &self.lr),
            ("lambda1", &self.lambda1),
            ("lambda2", &self.lambda2),
            ("beta", &self.beta),
            ("tau", &self.tau),
            ("mask_delta", &self.mask_delta),
            ("prop_order_L", &self.prop_order_l),
            ("fusion", &self.fusion),
            ("noise_ratio", &self.noise_ratio),
            ("eval_k", &self.eval_k),
        ];
        for (k, v) in values {
            if let Some(v) = v {
                out.push((k, v.clone()));
            }
        }
        let flags = [
            ("use_extra_metapaths", self.use_extra_metapaths),
            ("infonce_ablation", self.infonce_ablation),
            ("no_mask", self.no_mask),
            ("no_cl", self.no_cl),
            ("no_1hop", self.no_1hop),
            ("no_meta", self.no_meta),
        ];
        for (k, on) in flags {
            if on {
                out.push((k, "true".into()));
            }
        }
        out
    }
}

impl Common {
    /// Defaults, then the config file, then `--dataset`/`--seed`, then the
    /// key flags, then `--set`.
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.dataset = self.dataset.clone();
        cfg.train.seed = self.seed;
        for (k, v) in self.keys.pairs() {
            cfg.set(k, &v)?;
        }
        for s in &self.set {
            cfg.apply_override(s)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn load(&self) -> Result<(ExperimentConfig, Dataset)> {
        let cfg = self.config()?;
        let ds = load_dataset(&cfg)?;
        log::info!(
            "loaded {}: {} nodes, {} edges, {} users, {} items",
            ds.name,
            ds.hin.num_nodes(),
            ds.hin.num_edges(),
            ds.num_users(),
            ds.num_items()
        );
        Ok((cfg, ds))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn print_metrics(m: &RunMetrics) {
    print!("{}", m.to_csv());
}

fn print_means(rows: &[ReportRow]) {
    let means: Vec<ReportRow> = rows.iter().filter(|r| r.seed == "mean").cloned().collect();
    print!("{}", report_csv(&means));
}

fn seeds_or(seeds: Vec<u64>, seed: u64) -> Vec<u64> {
    if seeds.is_empty() {
        vec![seed]
    } else {
        seeds
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, run_id } => {
            let (cfg, ds) = common.load()?;
            let out = experiment::run(&ds, &cfg, Some(&common.out_dir), run_id.as_deref())?;
            if let Some(d) = &out.dir {
                eprintln!("run written to {}", d.display());
            }
            print_metrics(&out.metrics);
        }
        Command::Evaluate { common, checkpoint } => {
            let (cfg, ds) = common.load()?;
            let m = experiment::evaluate_checkpoint(&ds, &cfg, &checkpoint)?;
            write(&common.out_dir.join("metrics.csv"), &m.to_csv())?;
            print_metrics(&m);
        }
        Command::Robustness { common, seeds } => {
            let (cfg, ds) = common.load()?;
            let seeds = seeds_or(seeds, common.seed);
            let rows = experiment::robustness(&ds, &cfg, &seeds, Some(&common.out_dir))?;
            print_means(&rows);
        }
        Command::Ablate { common, seeds } => {
            let (cfg, ds) = common.load()?;
            let seeds = seeds_or(seeds, common.seed);
            let rows = experiment::ablate(&ds, &cfg, &seeds, Some(&common.out_dir))?;
            print_means(&rows);
        }
        Command::Sweep {
            common,
            grid,
            parallel,
        } => {
            let (mut cfg, ds) = common.load()?;
            for g in &grid {
                let (k, v) = g.split_once('=').ok_or_else(|| {
                    Error::Config(mcl_core::config::ConfigError::Syntax {
                        line: 0,
                        text: g.clone(),
                    })
                })?;
                cfg.set(&format!("sweep.{}", k.trim()), v.trim())?;
            }
            let result = experiment::sweep(&ds, &cfg, &common.out_dir, parallel)?;
            eprintln!("{} grid points, summary in {}", result.points.len(), common.out_dir.join("summary.csv").display());
            if let Some(b) = result.best {
                let p = &result.points[b];
                let assignment: Vec<String> = p.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!(
                    "best {} [{}] val_recall@{}={:?} test_recall={:?}",
                    p.record.run_id,
                    assignment.join(" "),
                    cfg.train.select_k,
                    p.record.val_recall(cfg.train.select_k),
                    p.record.test_recall(cfg.train.select_k)
                );
            }
        }
        Command::ExportEmbeddings {
            common,
            checkpoint,
            output,
        } => {
            let (cfg, ds) = common.load()?;
            let path = output.unwrap_or_else(|| common.out_dir.join("embeddings.tsv"));
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::Io {
                    path: parent.to_path_buf(),
                    source: e,
                })?;
            }
            experiment::export_embeddings(&ds, &cfg, &checkpoint, &path)?;
            eprintln!("embeddings written to {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
