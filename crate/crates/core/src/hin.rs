//! Heterogeneous information network: typed nodes, typed relations, the
//! network schema, meta-path subgraphs and multi-path positive matrices.
//!
//! Nodes get dense global ids grouped by type in schema order, so every
//! type occupies a contiguous range `type_offsets[t]..type_offsets[t + 1]`
//! and local ids within a type start at zero.

use std::collections::HashMap;

use thiserror::Error;

use crate::sparse::CsrMatrix;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("unknown node type `{0}`")]
    UnknownType(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("edge ({src_type}, {relation}, {dst_type}) is not in the schema")]
    SchemaViolation {
        src_type: String,
        relation: String,
        dst_type: String,
    },
    #[error("network is not heterogeneous: {types} node types + {relations} relations <= 2")]
    NotHeterogeneous { types: usize, relations: usize },
    #[error("meta-path `{path}` does not compose: {reason}")]
    TypeMismatch { path: String, reason: String },
    #[error("positive matrix inputs mix endpoint types")]
    MixedEndpointTypes,
    #[error("positive matrix needs at least one subgraph")]
    EmptySubgraphList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeTypeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub name: String,
    pub src_type: NodeTypeId,
    pub dst_type: NodeTypeId,
}

/// Type-level graph of allowed `(src-type, relation, dst-type)` triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    types: Vec<String>,
    relations: Vec<Relation>,
}

impl Schema {
    /// Node types are numbered in order of first appearance.
    pub fn new<S: AsRef<str>>(triples: &[(S, S, S)]) -> Self {
        let mut types: Vec<String> = Vec::new();
        let mut relations: Vec<Relation> = Vec::new();
        let type_id = |name: &str, types: &mut Vec<String>| match types.iter().position(|t| t == name) {
            Some(i) => NodeTypeId(i),
            None => {
                types.push(name.to_owned());
                NodeTypeId(types.len() - 1)
            }
        };
        for (src, rel, dst) in triples {
            let src_type = type_id(src.as_ref(), &mut types);
            let dst_type = type_id(dst.as_ref(), &mut types);
            let relation = Relation {
                name: rel.as_ref().to_owned(),
                src_type,
                dst_type,
            };
            if !relations.contains(&relation) {
                relations.push(relation);
            }
        }
        Self { types, relations }
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn type_name(&self, t: NodeTypeId) -> &str {
        &self.types[t.0]
    }

    pub fn type_names(&self) -> &[String] {
        &self.types
    }

    pub fn type_id(&self, name: &str) -> Result<NodeTypeId, GraphError> {
        self.types
            .iter()
            .position(|t| t == name)
            .map(NodeTypeId)
            .ok_or_else(|| GraphError::UnknownType(name.to_owned()))
    }

    pub fn relation(&self, r: RelationId) -> &Relation {
        &self.relations[r.0]
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    /// Relation with this name and endpoint types.
    pub fn find(&self, src: NodeTypeId, name: &str, dst: NodeTypeId) -> Option<RelationId> {
        self.relations
            .iter()
            .position(|r| r.name == name && r.src_type == src && r.dst_type == dst)
            .map(RelationId)
    }

    /// Relations with this name, in schema order.
    pub fn relations_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = RelationId> + 'a {
        self.relations
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.name == name)
            .map(|(i, _)| RelationId(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub relation: RelationId,
    pub dst: usize,
}

/// Validated heterogeneous information network.
#[derive(Debug, Clone)]
pub struct Hin {
    schema: Schema,
    node_types: Vec<NodeTypeId>,
    type_offsets: Vec<usize>,
    external: Vec<String>,
    lookup: HashMap<String, usize>,
    edges: Vec<Edge>,
    /// Per relation, local-src x local-dst pattern.
    relation_adjacency: Vec<CsrMatrix>,
}

impl Hin {
    /// Builds from per-type node counts and local-id edges. External ids
    /// are generated as `<type>:<local>`.
    pub fn from_counts(
        schema: Schema,
        type_counts: &[usize],
        edges: impl IntoIterator<Item = (RelationId, usize, usize)>,
    ) -> Result<Self, GraphError> {
        assert_eq!(type_counts.len(), schema.num_types(), "one count per type");
        let external: Vec<String> = type_counts
            .iter()
            .enumerate()
            .flat_map(|(t, &n)| {
                let name = schema.type_name(NodeTypeId(t)).to_owned();
                (0..n).map(move |i| format!("{name}:{i}"))
            })
            .collect();
        Self::assemble(schema, type_counts, external, edges)
    }

    fn assemble(
        schema: Schema,
        type_counts: &[usize],
        external: Vec<String>,
        local_edges: impl IntoIterator<Item = (RelationId, usize, usize)>,
    ) -> Result<Self, GraphError> {
        if schema.num_types() + schema.num_relations() <= 2 {
            return Err(GraphError::NotHeterogeneous {
                types: schema.num_types(),
                relations: schema.num_relations(),
            });
        }
        let mut type_offsets = vec![0];
        for &n in type_counts {
            type_offsets.push(type_offsets.last().unwrap() + n);
        }
        let node_types = type_counts
            .iter()
            .enumerate()
            .flat_map(|(t, &n)| std::iter::repeat_n(NodeTypeId(t), n))
            .collect();
        let mut lookup = HashMap::with_capacity(external.len());
        for (i, name) in external.iter().enumerate() {
            if lookup.insert(name.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode(name.clone()));
            }
        }

        let mut per_relation: Vec<Vec<(usize, usize)>> = vec![Vec::new(); schema.num_relations()];
        for (r, s, d) in local_edges {
            let rel = schema.relation(r);
            let (ns, nd) = (type_counts[rel.src_type.0], type_counts[rel.dst_type.0]);
            if s >= ns {
                return Err(GraphError::UnknownNode(format!("{}:{s}", schema.type_name(rel.src_type))));
            }
            if d >= nd {
                return Err(GraphError::UnknownNode(format!("{}:{d}", schema.type_name(rel.dst_type))));
            }
            per_relation[r.0].push((s, d));
        }
        let relation_adjacency: Vec<CsrMatrix> = per_relation
            .into_iter()
            .enumerate()
            .map(|(r, pairs)| {
                let rel = schema.relation(RelationId(r));
                CsrMatrix::from_pairs(type_counts[rel.src_type.0], type_counts[rel.dst_type.0], pairs)
            })
            .collect();
        let edges = relation_adjacency
            .iter()
            .enumerate()
            .flat_map(|(r, adj)| {
                let rel = schema.relation(RelationId(r));
                let (so, dof) = (type_offsets[rel.src_type.0], type_offsets[rel.dst_type.0]);
                adj.iter().map(move |(s, d)| Edge {
                    src: so + s,
                    relation: RelationId(r),
                    dst: dof + d,
                })
            })
            .collect();

        Ok(Self {
            schema,
            node_types,
            type_offsets,
            external,
            lookup,
            edges,
            relation_adjacency,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_type(&self, node: usize) -> NodeTypeId {
        self.node_types[node]
    }

    pub fn type_count(&self, t: NodeTypeId) -> usize {
        self.type_offsets[t.0 + 1] - self.type_offsets[t.0]
    }

    pub fn type_offset(&self, t: NodeTypeId) -> usize {
        self.type_offsets[t.0]
    }

    pub fn type_offsets(&self) -> &[usize] {
        &self.type_offsets
    }

    pub fn global_id(&self, t: NodeTypeId, local: usize) -> usize {
        debug_assert!(local < self.type_count(t));
        self.type_offsets[t.0] + local
    }

    pub fn local_id(&self, node: usize) -> usize {
        node - self.type_offsets[self.node_types[node].0]
    }

    pub fn internal_id(&self, external: &str) -> Option<usize> {
        self.lookup.get(external).copied()
    }

    pub fn external_id(&self, node: usize) -> &str {
        &self.external[node]
    }

    /// Local-src x local-dst adjacency of one relation.
    pub fn relation_adjacency(&self, r: RelationId) -> &CsrMatrix {
        &self.relation_adjacency[r.0]
    }

    /// Copy of this network with all edges of `relation` replaced by
    /// `pairs` (local ids). Used to rebuild the graph from a training
    /// split or after injecting noise interactions.
    pub fn with_relation_edges(
        &self,
        relation: RelationId,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let kept: Vec<(RelationId, usize, usize)> = self
            .relation_adjacency
            .iter()
            .enumerate()
            .filter(|(r, _)| *r != relation.0)
            .flat_map(|(r, adj)| adj.iter().map(move |(s, d)| (RelationId(r), s, d)))
            .chain(pairs.into_iter().map(|(s, d)| (relation, s, d)))
            .collect();
        let counts: Vec<usize> = (0..self.schema.num_types())
            .map(|t| self.type_count(NodeTypeId(t)))
            .collect();
        Self::assemble(self.schema.clone(), &counts, self.external.clone(), kept)
    }
}

/// Validates and reindexes a network given by external ids and names.
///
/// `nodes` are `(external_id, type_name)`, `edges` are
/// `(src_external_id, relation_name, dst_external_id)` and `schema` holds
/// `(src_type, relation, dst_type)` triples.
pub fn build_hin<S: AsRef<str>>(
    nodes: &[(S, S)],
    edges: &[(S, S, S)],
    schema: &[(S, S, S)],
) -> Result<Hin, GraphError> {
    let schema = Schema::new(schema);
    let mut by_type: Vec<Vec<&str>> = vec![Vec::new(); schema.num_types()];
    let mut local: HashMap<&str, (NodeTypeId, usize)> = HashMap::with_capacity(nodes.len());
    for (id, ty) in nodes {
        let t = schema.type_id(ty.as_ref())?;
        let list = &mut by_type[t.0];
        if local.insert(id.as_ref(), (t, list.len())).is_some() {
            return Err(GraphError::DuplicateNode(id.as_ref().to_owned()));
        }
        list.push(id.as_ref());
    }
    let mut local_edges = Vec::with_capacity(edges.len());
    for (src, rel, dst) in edges {
        let &(st, si) = local
            .get(src.as_ref())
            .ok_or_else(|| GraphError::UnknownNode(src.as_ref().to_owned()))?;
        let &(dt, di) = local
            .get(dst.as_ref())
            .ok_or_else(|| GraphError::UnknownNode(dst.as_ref().to_owned()))?;
        let r = schema
            .find(st, rel.as_ref(), dt)
            .ok_or_else(|| GraphError::SchemaViolation {
                src_type: schema.type_name(st).to_owned(),
                relation: rel.as_ref().to_owned(),
                dst_type: schema.type_name(dt).to_owned(),
            })?;
        local_edges.push((r, si, di));
    }
    let counts: Vec<usize> = by_type.iter().map(Vec::len).collect();
    let external = by_type.into_iter().flatten().map(str::to_owned).collect();
    Hin::assemble(schema, &counts, external, local_edges)
}

/// One traversal of a relation, forward (`src -> dst`) or reversed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MetaPathStep {
    pub relation: RelationId,
    pub reverse: bool,
}

impl MetaPathStep {
    pub fn from_type(self, schema: &Schema) -> NodeTypeId {
        let r = schema.relation(self.relation);
        if self.reverse {
            r.dst_type
        } else {
            r.src_type
        }
    }

    pub fn to_type(self, schema: &Schema) -> NodeTypeId {
        let r = schema.relation(self.relation);
        if self.reverse {
            r.src_type
        } else {
            r.dst_type
        }
    }
}

/// Typed relation sequence whose two ends share a node type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPath {
    name: String,
    steps: Vec<MetaPathStep>,
    endpoint_type: NodeTypeId,
}

impl MetaPath {
    pub fn new(schema: &Schema, name: impl Into<String>, steps: Vec<MetaPathStep>) -> Result<Self, GraphError> {
        let name = name.into();
        let mismatch = |reason: String| GraphError::TypeMismatch {
            path: name.clone(),
            reason,
        };
        let Some(first) = steps.first() else {
            return Err(mismatch("no steps".into()));
        };
        if let Some(bad) = steps.iter().find(|s| s.relation.0 >= schema.num_relations()) {
            return Err(mismatch(format!("relation id {} not in schema", bad.relation.0)));
        }
        for (i, w) in steps.windows(2).enumerate() {
            let (a, b) = (w[0].to_type(schema), w[1].from_type(schema));
            if a != b {
                return Err(mismatch(format!(
                    "step {} ends at {} but step {} starts at {}",
                    i,
                    schema.type_name(a),
                    i + 1,
                    schema.type_name(b)
                )));
            }
        }
        let start = first.from_type(schema);
        let end = steps.last().unwrap().to_type(schema);
        if start != end {
            return Err(mismatch(format!(
                "starts at {} but ends at {}",
                schema.type_name(start),
                schema.type_name(end)
            )));
        }
        Ok(Self {
            name,
            steps,
            endpoint_type: start,
        })
    }

    /// Parses a comma-separated relation sequence such as `rate, ~rate`.
    /// A leading `~` traverses the relation from destination to source.
    /// Bare names that only fit the running type in reverse are reversed
    /// automatically.
    pub fn parse(schema: &Schema, name: impl Into<String>, spec: &str) -> Result<Self, GraphError> {
        let name = name.into();
        let mut steps = Vec::new();
        let mut current: Option<NodeTypeId> = None;
        for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (rel_name, forced_reverse) = match token.strip_prefix('~') {
                Some(rest) => (rest.trim(), true),
                None => (token, false),
            };
            let candidates: Vec<RelationId> = schema.relations_named(rel_name).collect();
            if candidates.is_empty() {
                return Err(GraphError::UnknownRelation(rel_name.to_owned()));
            }
            let fits = |step: MetaPathStep| current.is_none_or(|c| step.from_type(schema) == c);
            let step = candidates
                .iter()
                .flat_map(|&relation| {
                    let orientations: &[bool] = if forced_reverse { &[true] } else { &[false, true] };
                    orientations.iter().map(move |&reverse| MetaPathStep { relation, reverse })
                })
                .find(|&s| fits(s))
                .ok_or_else(|| GraphError::TypeMismatch {
                    path: name.clone(),
                    reason: format!("relation `{token}` cannot follow the previous step"),
                })?;
            current = Some(step.to_type(schema));
            steps.push(step);
        }
        Self::new(schema, name, steps)
    }

    /// Resolves a path given as a node-type sequence, picking the unique
    /// relation (in either direction) between consecutive types.
    pub fn through_types(schema: &Schema, name: impl Into<String>, types: &[&str]) -> Result<Self, GraphError> {
        let name = name.into();
        let ids = types
            .iter()
            .map(|t| schema.type_id(t))
            .collect::<Result<Vec<_>, _>>()?;
        let mut steps = Vec::new();
        for w in ids.windows(2) {
            let options: Vec<MetaPathStep> = (0..schema.num_relations())
                .flat_map(|r| {
                    [false, true].map(|reverse| MetaPathStep {
                        relation: RelationId(r),
                        reverse,
                    })
                })
                .filter(|s| s.from_type(schema) == w[0] && s.to_type(schema) == w[1])
                .collect();
            match options.as_slice() {
                [only] => steps.push(*only),
                [] => {
                    return Err(GraphError::TypeMismatch {
                        path: name,
                        reason: format!(
                            "no relation between {} and {}",
                            schema.type_name(w[0]),
                            schema.type_name(w[1])
                        ),
                    })
                }
                _ => {
                    return Err(GraphError::TypeMismatch {
                        path: name,
                        reason: format!(
                            "ambiguous relation between {} and {}",
                            schema.type_name(w[0]),
                            schema.type_name(w[1])
                        ),
                    })
                }
            }
        }
        Self::new(schema, name, steps)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn steps(&self) -> &[MetaPathStep] {
        &self.steps
    }

    pub fn endpoint_type(&self) -> NodeTypeId {
        self.endpoint_type
    }
}

/// Homogeneous graph over one node type induced by a meta-path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPathGraph {
    pub name: String,
    pub endpoint_type: NodeTypeId,
    /// Symmetric, binary, zero diagonal; local ids of the endpoint type.
    pub adjacency: CsrMatrix,
    pub degrees: Vec<usize>,
}

impl MetaPathGraph {
    pub fn num_nodes(&self) -> usize {
        self.adjacency.rows()
    }
}

/// Binarized composition of the path's step adjacencies, symmetrized,
/// with self-loops removed.
pub fn metapath_subgraph(hin: &Hin, path: &MetaPath) -> Result<MetaPathGraph, GraphError> {
    let schema = hin.schema();
    // Re-validate against this network's schema.
    let path = MetaPath::new(schema, path.name(), path.steps().to_vec())?;
    let mut product: Option<CsrMatrix> = None;
    for step in path.steps() {
        let adj = hin.relation_adjacency(step.relation);
        let m = if step.reverse { adj.transpose() } else { adj.clone() };
        product = Some(match product {
            None => m,
            Some(p) => p.bool_product(&m).map_err(|(a, b)| GraphError::TypeMismatch {
                path: path.name().to_owned(),
                reason: format!("inner dimensions {a} vs {b}"),
            })?,
        });
    }
    let adjacency = product.expect("path has steps").symmetrize().without_diagonal();
    let degrees = adjacency.row_counts();
    Ok(MetaPathGraph {
        name: path.name().to_owned(),
        endpoint_type: path.endpoint_type(),
        adjacency,
        degrees,
    })
}

/// Node pairs linked in every given subgraph, plus the diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveMatrix {
    pub endpoint_type: NodeTypeId,
    pub matrix: CsrMatrix,
}

pub fn positive_matrix(subgraphs: &[MetaPathGraph]) -> Result<PositiveMatrix, GraphError> {
    let Some(first) = subgraphs.first() else {
        return Err(GraphError::EmptySubgraphList);
    };
    if subgraphs.iter().any(|g| g.endpoint_type != first.endpoint_type) {
        return Err(GraphError::MixedEndpointTypes);
    }
    let matrix = subgraphs[1..]
        .iter()
        .fold(first.adjacency.clone(), |acc, g| acc.intersect(&g.adjacency))
        .with_diagonal();
    Ok(PositiveMatrix {
        endpoint_type: first.endpoint_type,
        matrix,
    })
}

/// Neighbors of one node reached through one relation orientation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGroup {
    pub relation: RelationId,
    /// True when the node is the relation's destination.
    pub reverse: bool,
    /// Global ids, ascending.
    pub neighbors: Vec<usize>,
}

/// Direct neighbors grouped by relation orientation: forward groups in
/// schema order, then reverse groups. Empty groups are omitted.
pub fn one_hop_neighbors(hin: &Hin, node: usize) -> Result<Vec<NeighborGroup>, GraphError> {
    if node >= hin.num_nodes() {
        return Err(GraphError::UnknownNode(node.to_string()));
    }
    let t = hin.node_type(node);
    let local = hin.local_id(node);
    let schema = hin.schema();
    let mut groups = Vec::new();
    for reverse in [false, true] {
        for (r, rel) in schema.relations().iter().enumerate() {
            let adj = hin.relation_adjacency(RelationId(r));
            let neighbors: Vec<usize> = if !reverse && rel.src_type == t {
                let off = hin.type_offset(rel.dst_type);
                adj.row(local).iter().map(|&d| off + d).collect()
            } else if reverse && rel.dst_type == t {
                let off = hin.type_offset(rel.src_type);
                (0..adj.rows()).filter(|&s| adj.contains(s, local)).map(|s| off + s).collect()
            } else {
                continue;
            };
            if !neighbors.is_empty() {
                groups.push(NeighborGroup {
                    relation: RelationId(r),
                    reverse,
                    neighbors,
                });
            }
        }
    }
    Ok(groups)
}

/// Direct neighbors of every node as `(neighbor, relation)` pairs, with
/// each node's list grouped like [`one_hop_neighbors`].
pub fn one_hop_incidence(hin: &Hin) -> Vec<Vec<(usize, RelationId)>> {
    let mut lists: Vec<Vec<(usize, RelationId)>> = vec![Vec::new(); hin.num_nodes()];
    let schema = hin.schema();
    // Forward orientation first, then reverse, each relation in schema order.
    for reverse in [false, true] {
        for (r, rel) in schema.relations().iter().enumerate() {
            let adj = hin.relation_adjacency(RelationId(r));
            let (so, dof) = (hin.type_offset(rel.src_type), hin.type_offset(rel.dst_type));
            for (s, d) in adj.iter() {
                let (node, nbr) = if reverse { (dof + d, so + s) } else { (so + s, dof + d) };
                lists[node].push((nbr, RelationId(r)));
            }
        }
    }
    lists
}
