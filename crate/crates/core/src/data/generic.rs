//! Generic network directories:
//!
//! ```text
//! nodes.tsv     external_id <TAB> type_name
//! edges.tsv     src_external_id <TAB> relation_name <TAB> dst_external_id
//! schema.tsv    src_type <TAB> relation <TAB> dst_type
//! manifest.txt  key = value (name, user_type, item_type,
//!               interaction_relation, metapath.NAME, extra_metapath.NAME)
//! ```
//!
//! TSV files are UTF-8 without a header. `edges.tsv` may be absent.

use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, DataError, Dataset};
use crate::config::{parse_pairs, MetaPathDecl};
use crate::hin::{build_hin, NodeTypeId};

/// Dataset-level description stored next to the TSV files.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub name: String,
    pub user_type: String,
    pub item_type: String,
    pub interaction_relation: String,
    pub metapaths: Vec<MetaPathDecl>,
    pub extra_metapaths: Vec<MetaPathDecl>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut m = Manifest::default();
        let pairs = parse_pairs(text).map_err(|e| DataError::Manifest(e.to_string()))?;
        for (k, v, _) in pairs {
            match k.as_str() {
                "name" => m.name = v,
                "user_type" => m.user_type = v,
                "item_type" => m.item_type = v,
                "interaction_relation" => m.interaction_relation = v,
                _ => {
                    let decl = |name: &str| MetaPathDecl {
                        name: name.to_string(),
                        spec: v.clone(),
                    };
                    if let Some(name) = k.strip_prefix("metapath.") {
                        m.metapaths.push(decl(name));
                    } else if let Some(name) = k.strip_prefix("extra_metapath.") {
                        m.extra_metapaths.push(decl(name));
                    } else {
                        return Err(DataError::Manifest(format!("unknown key `{k}`")));
                    }
                }
            }
        }
        for (key, value) in [
            ("user_type", &m.user_type),
            ("item_type", &m.item_type),
            ("interaction_relation", &m.interaction_relation),
        ] {
            if value.is_empty() {
                return Err(DataError::Manifest(format!("`{key}` is required")));
            }
        }
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "user_type = {}", self.user_type);
        let _ = writeln!(out, "item_type = {}", self.item_type);
        let _ = writeln!(out, "interaction_relation = {}", self.interaction_relation);
        for d in &self.metapaths {
            let _ = writeln!(out, "metapath.{} = {}", d.name, d.spec);
        }
        for d in &self.extra_metapaths {
            let _ = writeln!(out, "extra_metapath.{} = {}", d.name, d.spec);
        }
        out
    }
}

fn columns<const N: usize>(text: &str, path: &Path) -> Result<Vec<[String; N]>, DataError> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = raw.split('\t').collect();
        if parts.len() != N || parts.iter().any(|p| p.trim().is_empty()) {
            return Err(DataError::MalformedRow {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("expected {N} tab-separated fields"),
            });
        }
        rows.push(std::array::from_fn(|k| parts[k].trim().to_string()));
    }
    Ok(rows)
}

pub fn load_generic(dir: &Path) -> Result<Dataset, DataError> {
    let manifest = Manifest::parse(&read_text(&dir.join("manifest.txt"))?)?;
    let nodes_path = dir.join("nodes.tsv");
    let schema_path = dir.join("schema.tsv");
    let edges_path = dir.join("edges.tsv");
    let nodes: Vec<[String; 2]> = columns(&read_text(&nodes_path)?, &nodes_path)?;
    let schema: Vec<[String; 3]> = columns(&read_text(&schema_path)?, &schema_path)?;
    let edges: Vec<[String; 3]> = if edges_path.exists() {
        columns(&read_text(&edges_path)?, &edges_path)?
    } else {
        Vec::new()
    };
    let nodes: Vec<(&str, &str)> = nodes.iter().map(|[a, b]| (a.as_str(), b.as_str())).collect();
    let edges: Vec<(&str, &str, &str)> = edges.iter().map(|[a, b, c]| (a.as_str(), b.as_str(), c.as_str())).collect();
    let schema: Vec<(&str, &str, &str)> = schema.iter().map(|[a, b, c]| (a.as_str(), b.as_str(), c.as_str())).collect();
    let hin = build_hin(&nodes, &edges, &schema)?;
    let name = if manifest.name.is_empty() {
        dir.file_name().map_or_else(|| "dataset".into(), |n| n.to_string_lossy().into_owned())
    } else {
        manifest.name.clone()
    };
    Dataset::new(
        name,
        hin,
        &manifest.user_type,
        &manifest.item_type,
        &manifest.interaction_relation,
        manifest.metapaths,
        manifest.extra_metapaths,
    )
}

/// Writes a dataset in the generic layout; [`load_generic`] reads it back
/// to the same network.
pub fn write_generic(dir: &Path, ds: &Dataset) -> Result<(), DataError> {
    let io = |e: std::io::Error| DataError::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let hin = &ds.hin;
    let schema = hin.schema();
    let mut nodes = String::new();
    for v in 0..hin.num_nodes() {
        let _ = writeln!(nodes, "{}\t{}", hin.external_id(v), schema.type_name(hin.node_type(v)));
    }
    let mut edges = String::new();
    for e in hin.edges() {
        let _ = writeln!(
            edges,
            "{}\t{}\t{}",
            hin.external_id(e.src),
            schema.relation(e.relation).name,
            hin.external_id(e.dst)
        );
    }
    let mut schema_text = String::new();
    for r in schema.relations() {
        let _ = writeln!(
            schema_text,
            "{}\t{}\t{}",
            schema.type_name(r.src_type),
            r.name,
            schema.type_name(r.dst_type)
        );
    }
    let manifest = Manifest {
        name: ds.name.clone(),
        user_type: schema.type_name(ds.user_type).to_string(),
        item_type: schema.type_name(ds.item_type).to_string(),
        interaction_relation: schema.relation(ds.interaction).name.clone(),
        metapaths: ds.metapaths.clone(),
        extra_metapaths: ds.extra_metapaths.clone(),
    };
    for (file, body) in [
        ("nodes.tsv", nodes),
        ("edges.tsv", edges),
        ("schema.tsv", schema_text),
        ("manifest.txt", manifest.to_text()),
    ] {
        std::fs::write(dir.join(file), body).map_err(io)?;
    }
    Ok(())
}

/// Type name per node type id, for reports.
pub fn type_names(ds: &Dataset) -> Vec<String> {
    (0..ds.hin.schema().num_types())
        .map(|t| ds.hin.schema().type_name(NodeTypeId(t)).to_string())
        .collect()
}
