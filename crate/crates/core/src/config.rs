//! Flat `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! known; repeating a key is an error. [`ExperimentConfig::to_text`] writes
//! every key in a fixed order and parses back to an equal value, so the
//! text form doubles as the run snapshot.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

/// Largest accepted mask probability. Values closer to one blow up the
/// inverse-keep scale.
pub const MAX_MASK_DELTA: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { key: String, line: usize },
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

/// Parses `key = value` lines into `(key, value, line number)` triples.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String, usize)>, ConfigError> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        if out.iter().any(|(seen, _, _)| seen == key) {
            return Err(ConfigError::Duplicate {
                key: key.to_string(),
                line: i + 1,
            });
        }
        out.push((key.to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

fn parse_num<N: FromStr>(key: &str, value: &str) -> Result<N, ConfigError> {
    value.parse().map_err(|_| invalid(key, value, "not a number"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

fn parse_list<N: FromStr>(key: &str, value: &str) -> Result<Vec<N>, ConfigError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|p| parse_num(key, p.trim())).collect()
}

fn join<N: fmt::Display>(items: &[N]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// How user and item representations of the two views combine for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fusion {
    /// `(h¹ + h²)`
    #[default]
    Sum,
    /// `[h¹ ∥ h²]`
    Concat,
    /// `h²` alone
    MetaOnly,
}

impl FromStr for Fusion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sum" => Ok(Self::Sum),
            "concat" => Ok(Self::Concat),
            "meta_only" => Ok(Self::MetaOnly),
            _ => Err("expected sum, concat or meta_only".into()),
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sum => "sum",
            Self::Concat => "concat",
            Self::MetaOnly => "meta_only",
        })
    }
}

/// Which parameters the L2 term covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum L2Scope {
    #[default]
    Embeddings,
    All,
}

impl FromStr for L2Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "embeddings" => Ok(Self::Embeddings),
            "all" => Ok(Self::All),
            _ => Err("expected embeddings or all".into()),
        }
    }
}

impl fmt::Display for L2Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Embeddings => "embeddings",
            Self::All => "all",
        })
    }
}

/// Component switches for the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablation {
    /// Skip masking and propagation; node-level attention sees raw tables.
    pub no_mask: bool,
    /// Contrastive weight forced to zero.
    pub no_cl: bool,
    /// Score with the meta-path view only.
    pub no_1hop: bool,
    /// Score with the one-hop view only; no contrastive term.
    pub no_meta: bool,
}

impl Ablation {
    pub const VARIANTS: [(&'static str, Ablation); 5] = [
        ("mcl", Ablation { no_mask: false, no_cl: false, no_1hop: false, no_meta: false }),
        ("w/o-mask", Ablation { no_mask: true, no_cl: false, no_1hop: false, no_meta: false }),
        ("w/o-cl", Ablation { no_mask: false, no_cl: true, no_1hop: false, no_meta: false }),
        ("w/o-1hop", Ablation { no_mask: false, no_cl: false, no_1hop: true, no_meta: false }),
        ("w/o-meta", Ablation { no_mask: false, no_cl: false, no_1hop: false, no_meta: true }),
    ];
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub dim: usize,
    pub batch_size: usize,
    /// Upper bound on epochs.
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub lr: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta: f64,
    pub tau: f64,
    pub double_exp: bool,
    pub infonce_ablation: bool,
    pub mask_enabled: bool,
    pub mask_delta: f64,
    pub prop_order: usize,
    pub detach_augmentation: bool,
    pub aggregate_projected: bool,
    pub fusion: Fusion,
    pub l2_scope: L2Scope,
    pub ablation: Ablation,
    pub eval_k: Vec<usize>,
    /// K of the validation recall used for model selection.
    pub select_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 128,
            batch_size: 2048,
            epochs: 500,
            patience: 20,
            lr: 0.005,
            lambda1: 0.5,
            lambda2: 1e-4,
            beta: 0.1,
            tau: 0.7,
            double_exp: false,
            infonce_ablation: false,
            mask_enabled: true,
            mask_delta: 0.1,
            prop_order: 2,
            detach_augmentation: false,
            aggregate_projected: false,
            fusion: Fusion::Sum,
            l2_scope: L2Scope::Embeddings,
            ablation: Ablation::default(),
            eval_k: vec![10, 20],
            select_k: 20,
        }
    }
}

impl TrainConfig {
    /// Contrastive weight after ablation switches.
    pub fn effective_beta(&self) -> f64 {
        if self.ablation.no_cl || self.ablation.no_meta {
            0.0
        } else {
            self.beta
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(invalid(key, "0", "must be positive"))
            } else {
                Ok(())
            }
        };
        positive("dim", self.dim)?;
        positive("batch_size", self.batch_size)?;
        positive("epochs", self.epochs)?;
        positive("patience", self.patience)?;
        positive("select_k", self.select_k)?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("lr", &self.lr.to_string(), "must be positive"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau", &self.tau.to_string(), "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lambda1) {
            return Err(invalid("lambda1", &self.lambda1.to_string(), "must lie in [0, 1]"));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(invalid("lambda2", &self.lambda2.to_string(), "must be non-negative"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", &self.beta.to_string(), "must be non-negative"));
        }
        if !(0.0..=MAX_MASK_DELTA).contains(&self.mask_delta) {
            return Err(invalid(
                "mask_delta",
                &self.mask_delta.to_string(),
                format!("must lie in [0, {MAX_MASK_DELTA}]"),
            ));
        }
        if self.eval_k.is_empty() || self.eval_k.contains(&0) {
            return Err(invalid("eval_k", &join(&self.eval_k), "need at least one positive K"));
        }
        Ok(())
    }
}

/// A named meta-path as written in config: relation names with `~` marking
/// reverse traversal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPathDecl {
    pub name: String,
    pub spec: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    /// Detect from the files present.
    #[default]
    Auto,
    Movielens,
    Generic,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Self::Auto),
            "movielens" => Ok(Self::Movielens),
            "generic" => Ok(Self::Generic),
            _ => Err("expected auto, movielens or generic".into()),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::Movielens => "movielens",
            Self::Generic => "generic",
        })
    }
}

/// Everything a run needs besides the data itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub dataset_format: DatasetFormat,
    /// Ratings at or above this value count as interactions.
    pub rating_threshold: f64,
    /// Overrides the dataset's default meta-paths when nonempty.
    pub metapaths: Vec<MetaPathDecl>,
    /// Overrides the dataset's redundant meta-path set when nonempty.
    pub extra_metapaths: Vec<MetaPathDecl>,
    /// Train with the redundant set added to the original paths.
    pub use_extra_metapaths: bool,
    pub noise_ratio: f64,
    pub noise_ratios: Vec<f64>,
    pub train: TrainConfig,
    /// Sweep grid: key and candidate values, in declaration order.
    pub sweep: Vec<(String, Vec<String>)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data/ml-100k"),
            dataset_format: DatasetFormat::Auto,
            rating_threshold: 0.0,
            metapaths: Vec::new(),
            extra_metapaths: Vec::new(),
            use_extra_metapaths: false,
            noise_ratio: 0.0,
            noise_ratios: vec![0.1, 0.3],
            train: TrainConfig::default(),
            sweep: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_text(&text)
    }

    /// Applies every pair in `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, v, _) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override as given on a command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let Some((k, v)) = assignment.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: 0,
                text: assignment.to_string(),
            });
        };
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let t = &mut self.train;
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "dataset_format" => self.dataset_format = value.parse().map_err(|e: String| invalid(key, value, e))?,
            "rating_threshold" => self.rating_threshold = parse_num(key, value)?,
            "use_extra_metapaths" => self.use_extra_metapaths = parse_bool(key, value)?,
            "noise_ratio" => self.noise_ratio = parse_num(key, value)?,
            "noise_ratios" => self.noise_ratios = parse_list(key, value)?,
            "seed" => t.seed = parse_num(key, value)?,
            "dim" => t.dim = parse_num(key, value)?,
            "batch_size" => t.batch_size = parse_num(key, value)?,
            "epochs" => t.epochs = parse_num(key, value)?,
            "patience" => t.patience = parse_num(key, value)?,
            "lr" => t.lr = parse_num(key, value)?,
            "lambda1" => t.lambda1 = parse_num(key, value)?,
            "lambda2" => t.lambda2 = parse_num(key, value)?,
            "beta" => t.beta = parse_num(key, value)?,
            "tau" => t.tau = parse_num(key, value)?,
            "double_exp" => t.double_exp = parse_bool(key, value)?,
            "infonce_ablation" => t.infonce_ablation = parse_bool(key, value)?,
            "mask_enabled" => t.mask_enabled = parse_bool(key, value)?,
            "mask_delta" => t.mask_delta = parse_num(key, value)?,
            "prop_order_L" => t.prop_order = parse_num(key, value)?,
            "detach_augmentation" => t.detach_augmentation = parse_bool(key, value)?,
            "aggregate_projected" => t.aggregate_projected = parse_bool(key, value)?,
            "fusion" => t.fusion = value.parse().map_err(|e: String| invalid(key, value, e))?,
            "l2_scope" => t.l2_scope = value.parse().map_err(|e: String| invalid(key, value, e))?,
            "no_mask" => t.ablation.no_mask = parse_bool(key, value)?,
            "no_cl" => t.ablation.no_cl = parse_bool(key, value)?,
            "no_1hop" => t.ablation.no_1hop = parse_bool(key, value)?,
            "no_meta" => t.ablation.no_meta = parse_bool(key, value)?,
            "eval_k" => t.eval_k = parse_list(key, value)?,
            "select_k" => t.select_k = parse_num(key, value)?,
            _ => {
                if let Some(name) = key.strip_prefix("metapath.") {
                    upsert(&mut self.metapaths, name, value);
                } else if let Some(name) = key.strip_prefix("extra_metapath.") {
                    upsert(&mut self.extra_metapaths, name, value);
                } else if let Some(name) = key.strip_prefix("sweep.") {
                    if name.starts_with("sweep.") || !Self::is_scalar_key(name) {
                        return Err(invalid(key, value, "sweep grids apply to plain keys only"));
                    }
                    let values = expand_grid(value)?;
                    if values.iter().any(|v| v.is_empty()) {
                        return Err(invalid(key, value, "empty grid value"));
                    }
                    match self.sweep.iter_mut().find(|(k, _)| k == name) {
                        Some(entry) => entry.1 = values,
                        None => self.sweep.push((name.to_string(), values)),
                    }
                } else {
                    return Err(ConfigError::UnknownKey(key.to_string()));
                }
            }
        }
        Ok(())
    }

    fn is_scalar_key(key: &str) -> bool {
        let mut probe = Self::default();
        let sample = Self::default().get(key);
        sample.is_some_and(|v| probe.set(key, &v).is_ok())
    }

    /// Current value of a plain key in its text form.
    pub fn get(&self, key: &str) -> Option<String> {
        self.plain_pairs().into_iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    fn plain_pairs(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        vec![
            ("dataset", self.dataset.display().to_string()),
            ("dataset_format", self.dataset_format.to_string()),
            ("rating_threshold", self.rating_threshold.to_string()),
            ("seed", t.seed.to_string()),
            ("dim", t.dim.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("epochs", t.epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("lr", t.lr.to_string()),
            ("lambda1", t.lambda1.to_string()),
            ("lambda2", t.lambda2.to_string()),
            ("beta", t.beta.to_string()),
            ("tau", t.tau.to_string()),
            ("double_exp", t.double_exp.to_string()),
            ("infonce_ablation", t.infonce_ablation.to_string()),
            ("mask_enabled", t.mask_enabled.to_string()),
            ("mask_delta", t.mask_delta.to_string()),
            ("prop_order_L", t.prop_order.to_string()),
            ("detach_augmentation", t.detach_augmentation.to_string()),
            ("aggregate_projected", t.aggregate_projected.to_string()),
            ("fusion", t.fusion.to_string()),
            ("l2_scope", t.l2_scope.to_string()),
            ("no_mask", t.ablation.no_mask.to_string()),
            ("no_cl", t.ablation.no_cl.to_string()),
            ("no_1hop", t.ablation.no_1hop.to_string()),
            ("no_meta", t.ablation.no_meta.to_string()),
            ("eval_k", join(&t.eval_k)),
            ("select_k", t.select_k.to_string()),
            ("use_extra_metapaths", self.use_extra_metapaths.to_string()),
            ("noise_ratio", self.noise_ratio.to_string()),
            ("noise_ratios", join(&self.noise_ratios)),
        ]
    }

    /// Canonical text form, one key per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.plain_pairs() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for d in &self.metapaths {
            out.push_str(&format!("metapath.{} = {}\n", d.name, d.spec));
        }
        for d in &self.extra_metapaths {
            out.push_str(&format!("extra_metapath.{} = {}\n", d.name, d.spec));
        }
        for (k, values) in &self.sweep {
            out.push_str(&format!("sweep.{k} = {}\n", values.join(",")));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.noise_ratio) {
            return Err(invalid("noise_ratio", &self.noise_ratio.to_string(), "must lie in [0, 1]"));
        }
        if let Some(r) = self.noise_ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(invalid("noise_ratios", &r.to_string(), "ratios must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Cross product of the sweep grid as override lists, first key varying
    /// slowest. An empty grid yields one empty override list.
    pub fn grid_points(&self) -> Vec<Vec<(String, String)>> {
        let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (key, values) in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((key.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

fn upsert(list: &mut Vec<MetaPathDecl>, name: &str, spec: &str) {
    match list.iter_mut().find(|d| d.name == name) {
        Some(d) => d.spec = spec.to_string(),
        None => list.push(MetaPathDecl {
            name: name.to_string(),
            spec: spec.to_string(),
        }),
    }
}

/// `start:stop:step` expands to an inclusive grid; anything else is taken
/// as a comma list.
pub fn expand_grid(text: &str) -> Result<Vec<String>, ConfigError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Ok(text.split(',').map(|v| v.trim().to_string()).collect());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| invalid("grid", text, "not a number")))
        .collect::<Result<_, _>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || stop < start {
        return Err(invalid("grid", text, "need start <= stop and step > 0"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    // Round to the step's decimal precision so 0.5 + 3 * 0.05 prints as 0.65.
    let decimals = parts[2].trim().split('.').nth(1).map_or(0, str::len) as i32;
    let scale = 10f64.powi(decimals);
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * scale).round() / scale)
        .map(|v| v.to_string())
        .collect())
}
