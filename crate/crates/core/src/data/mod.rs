//! Dataset ingestion: raw MovieLens-100k, generic TSV networks, and
//! synthetic fixtures shaped like the supported datasets.

pub mod generic;
pub mod movielens;
pub mod synthetic;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{DatasetFormat, ExperimentConfig, MetaPathDecl};
use crate::hin::{GraphError, Hin, MetaPath, NodeTypeId, RelationId};

pub use generic::{load_generic, write_generic, Manifest};
pub use movielens::load_movielens;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}:{line}: {reason}")]
    MalformedRow { path: PathBuf, line: usize, reason: String },
    #[error("cannot access {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("cannot tell the format of {0}; expected u.data or nodes.tsv")]
    UnknownFormat(PathBuf),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub(crate) fn read_text(path: &Path) -> Result<String, DataError> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|e| DataError::MalformedRow {
        path: path.to_path_buf(),
        line: 0,
        reason: format!("not UTF-8: {e}"),
    })
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    std::fs::read(path).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// A network with its designated user-item relation and meta-path sets.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub hin: Hin,
    pub user_type: NodeTypeId,
    pub item_type: NodeTypeId,
    /// Relation from users to items whose edges are the interactions.
    pub interaction: RelationId,
    pub metapaths: Vec<MetaPathDecl>,
    /// Redundant paths added in the robustness study.
    pub extra_metapaths: Vec<MetaPathDecl>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        hin: Hin,
        user_type: &str,
        item_type: &str,
        interaction: &str,
        metapaths: Vec<MetaPathDecl>,
        extra_metapaths: Vec<MetaPathDecl>,
    ) -> Result<Self, DataError> {
        let schema = hin.schema();
        let u = schema.type_id(user_type)?;
        let i = schema.type_id(item_type)?;
        let rel = schema.find(u, interaction, i).ok_or_else(|| {
            DataError::Manifest(format!("no relation `{interaction}` from {user_type} to {item_type}"))
        })?;
        let ds = Self {
            name: name.into(),
            hin,
            user_type: u,
            item_type: i,
            interaction: rel,
            metapaths,
            extra_metapaths,
        };
        ds.resolve(&ds.metapaths)?;
        ds.resolve(&ds.extra_metapaths)?;
        Ok(ds)
    }

    pub fn num_users(&self) -> usize {
        self.hin.type_count(self.user_type)
    }

    pub fn num_items(&self) -> usize {
        self.hin.type_count(self.item_type)
    }

    /// Observed `(user, item)` pairs in local ids, sorted.
    pub fn interactions(&self) -> Vec<(usize, usize)> {
        self.hin.relation_adjacency(self.interaction).iter().collect()
    }

    /// Parses declarations against the schema.
    pub fn resolve(&self, decls: &[MetaPathDecl]) -> Result<Vec<MetaPath>, GraphError> {
        decls
            .iter()
            .map(|d| {
                let p = MetaPath::parse(self.hin.schema(), d.name.clone(), &d.spec)?;
                let t = p.endpoint_type();
                if t != self.user_type && t != self.item_type {
                    return Err(GraphError::TypeMismatch {
                        path: d.name.clone(),
                        reason: format!(
                            "endpoint type {} is neither the user nor the item type",
                            self.hin.schema().type_name(t)
                        ),
                    });
                }
                Ok(p)
            })
            .collect()
    }

    /// Meta-paths for a run: the original set, plus the redundant set when
    /// asked for.
    pub fn run_metapaths(&self, with_extra: bool) -> Result<Vec<MetaPath>, GraphError> {
        let mut paths = self.resolve(&self.metapaths)?;
        if with_extra {
            paths.extend(self.resolve(&self.extra_metapaths)?);
        }
        Ok(paths)
    }

    /// Same network with the interaction edges replaced.
    pub fn with_interactions(&self, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        Ok(Self {
            hin: self.hin.with_relation_edges(self.interaction, pairs)?,
            ..self.clone()
        })
    }
}

/// Loads the dataset named by a config and applies its meta-path
/// overrides.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, DataError> {
    let dir = &cfg.dataset;
    let format = match cfg.dataset_format {
        DatasetFormat::Auto => {
            if dir.join("u.data").exists() {
                DatasetFormat::Movielens
            } else if dir.join("nodes.tsv").exists() {
                DatasetFormat::Generic
            } else {
                return Err(DataError::UnknownFormat(dir.clone()));
            }
        }
        f => f,
    };
    let mut ds = match format {
        DatasetFormat::Movielens => load_movielens(dir, cfg.rating_threshold)?,
        _ => load_generic(dir)?,
    };
    if !cfg.metapaths.is_empty() {
        ds.metapaths = cfg.metapaths.clone();
    }
    if !cfg.extra_metapaths.is_empty() {
        ds.extra_metapaths = cfg.extra_metapaths.clone();
    }
    ds.resolve(&ds.metapaths)?;
    ds.resolve(&ds.extra_metapaths)?;
    if ds.metapaths.is_empty() {
        return Err(DataError::Manifest("no meta-paths declared".into()));
    }
    Ok(ds)
}

pub(crate) fn decl(name: &str, spec: &str) -> MetaPathDecl {
    MetaPathDecl {
        name: name.into(),
        spec: spec.into(),
    }
}
