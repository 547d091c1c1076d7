//! The two embedding views.
//!
//! * One-hop view: every node attends over its direct heterogeneous
//!   neighbors. A neighbor `w` reached through relation `r` is scored as
//!   `LeakyReLU(a_selfᵣ·h_e + a_nbrᵣ·(h_w Pᵣ))` and the softmax-weighted
//!   sum of raw neighbor embeddings goes through ELU.
//! * Meta-path view: per meta-path subgraph, node-level attention with the
//!   same additive scorer over (augmented) same-type embeddings, then a
//!   semantic-level softmax over paths.
//!
//! Row-vector convention throughout: a projection acts as `h · P`.

use std::sync::Arc;

use crate::autodiff::{Tape, TensorError, Var};
use crate::hin::{one_hop_incidence, Hin, MetaPathGraph};
use crate::scalar::Scalar;
use crate::sparse::SegmentIndex;

/// LeakyReLU slope of every attention scorer.
pub const ATTENTION_SLOPE: f64 = 0.2;

/// Edge structure for attention: edges grouped by target with per-edge
/// source and target rows ready for gathers.
#[derive(Debug, Clone)]
pub struct AttentionGraph {
    pub segments: Arc<SegmentIndex>,
    pub targets: Arc<[usize]>,
    pub sources: Arc<[usize]>,
}

impl AttentionGraph {
    pub fn new(segments: SegmentIndex) -> Self {
        Self {
            targets: segments.targets().into(),
            sources: segments.sources().into(),
            segments: Arc::new(segments),
        }
    }

    /// Attention over a meta-path subgraph (local ids of its node type).
    pub fn from_metapath(graph: &MetaPathGraph) -> Self {
        Self::new(SegmentIndex::from_adjacency(&graph.adjacency))
    }

    pub fn num_nodes(&self) -> usize {
        self.segments.num_targets()
    }
}

/// One-hop neighborhoods of every node in a network.
#[derive(Debug, Clone)]
pub struct OneHopStructure {
    num_nodes: usize,
    num_relations: usize,
    graph: AttentionGraph,
    /// Same edges with sources offset by `relation * num_nodes`, for
    /// aggregating projected neighbors.
    projected: Arc<SegmentIndex>,
    self_positions: Arc<[usize]>,
    neighbor_positions: Arc<[usize]>,
}

impl OneHopStructure {
    pub fn new(hin: &Hin) -> Self {
        let n = hin.num_nodes();
        let r = hin.schema().num_relations();
        let incidence = one_hop_incidence(hin);
        let plain: Vec<Vec<usize>> = incidence
            .iter()
            .map(|l| l.iter().map(|&(w, _)| w).collect())
            .collect();
        let shifted: Vec<Vec<usize>> = incidence
            .iter()
            .map(|l| l.iter().map(|&(w, rel)| rel.0 * n + w).collect())
            .collect();
        let mut self_positions = Vec::new();
        let mut neighbor_positions = Vec::new();
        for (e, list) in incidence.iter().enumerate() {
            for &(w, rel) in list {
                self_positions.push(e * r + rel.0);
                neighbor_positions.push(w * r + rel.0);
            }
        }
        Self {
            num_nodes: n,
            num_relations: r,
            graph: AttentionGraph::new(SegmentIndex::from_neighbor_lists(&plain, n)),
            projected: Arc::new(SegmentIndex::from_neighbor_lists(&shifted, n * r)),
            self_positions: self_positions.into(),
            neighbor_positions: neighbor_positions.into(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn num_edges(&self) -> usize {
        self.graph.segments.num_edges()
    }
}

/// Tape handles of the one-hop parameters, one entry per relation.
#[derive(Debug, Clone)]
pub struct OneHopVars {
    /// `d x d` projection `Pᵣ`.
    pub projections: Vec<Var>,
    /// `d x 1` scorer half applied to the target embedding.
    pub self_scorers: Vec<Var>,
    /// `d x 1` scorer half applied to the projected neighbor.
    pub neighbor_scorers: Vec<Var>,
}

/// Relational attention over direct neighbors, `ELU(Σ α_ew h_w)`.
///
/// With `aggregate_projected` the sum runs over `h_w Pᵣ` instead of the
/// raw neighbor embedding.
pub fn one_hop_encode<T: Scalar>(
    tape: &mut Tape<T>,
    structure: &OneHopStructure,
    embeddings: Var,
    vars: &OneHopVars,
    aggregate_projected: bool,
) -> Result<Var, TensorError> {
    let (rows, _) = tape.shape(embeddings);
    if rows != structure.num_nodes {
        return Err(TensorError::ShapeMismatch {
            op: "one_hop_encode",
            left: (rows, 0),
            right: (structure.num_nodes, 0),
        });
    }
    let r = structure.num_relations;
    if vars.projections.len() != r || vars.self_scorers.len() != r || vars.neighbor_scorers.len() != r {
        return Err(TensorError::ShapeMismatch {
            op: "one_hop_encode",
            left: (vars.projections.len(), 0),
            right: (r, 0),
        });
    }
    if structure.num_edges() == 0 {
        let zeros = tape.scale(embeddings, T::zero())?;
        return tape.elu(zeros);
    }
    let mut self_cols = Vec::with_capacity(r);
    let mut nbr_cols = Vec::with_capacity(r);
    for rel in 0..r {
        self_cols.push(tape.matmul(embeddings, vars.self_scorers[rel])?);
        let folded = tape.matmul(vars.projections[rel], vars.neighbor_scorers[rel])?;
        nbr_cols.push(tape.matmul(embeddings, folded)?);
    }
    let self_scores = tape.concat_cols(&self_cols)?;
    let nbr_scores = tape.concat_cols(&nbr_cols)?;
    let e_self = tape.gather_elements(self_scores, Arc::clone(&structure.self_positions))?;
    let e_nbr = tape.gather_elements(nbr_scores, Arc::clone(&structure.neighbor_positions))?;
    let raw = tape.add(e_self, e_nbr)?;
    let logits = tape.leaky_relu(raw, T::of(ATTENTION_SLOPE))?;
    let alpha = tape.segment_softmax(logits, &structure.graph.segments)?;
    let aggregated = if aggregate_projected {
        let projected = vars
            .projections
            .iter()
            .map(|&p| tape.matmul(embeddings, p))
            .collect::<Result<Vec<_>, _>>()?;
        let stacked = tape.concat_rows(&projected)?;
        tape.segment_weighted_sum(alpha, stacked, &structure.projected)?
    } else {
        tape.segment_weighted_sum(alpha, embeddings, &structure.graph.segments)?
    };
    tape.elu(aggregated)
}

/// Edge-level attention weights of [`one_hop_encode`], grouped like the
/// structure's segments. Used for inspection and tests.
pub fn one_hop_attention<T: Scalar>(
    tape: &mut Tape<T>,
    structure: &OneHopStructure,
    embeddings: Var,
    vars: &OneHopVars,
) -> Result<Var, TensorError> {
    let r = structure.num_relations;
    let mut self_cols = Vec::with_capacity(r);
    let mut nbr_cols = Vec::with_capacity(r);
    for rel in 0..r {
        self_cols.push(tape.matmul(embeddings, vars.self_scorers[rel])?);
        let folded = tape.matmul(vars.projections[rel], vars.neighbor_scorers[rel])?;
        nbr_cols.push(tape.matmul(embeddings, folded)?);
    }
    let self_scores = tape.concat_cols(&self_cols)?;
    let nbr_scores = tape.concat_cols(&nbr_cols)?;
    let e_self = tape.gather_elements(self_scores, Arc::clone(&structure.self_positions))?;
    let e_nbr = tape.gather_elements(nbr_scores, Arc::clone(&structure.neighbor_positions))?;
    let raw = tape.add(e_self, e_nbr)?;
    let logits = tape.leaky_relu(raw, T::of(ATTENTION_SLOPE))?;
    tape.segment_softmax(logits, &structure.graph.segments)
}

/// Node-level attention weights over one meta-path subgraph.
pub fn node_level_attention<T: Scalar>(
    tape: &mut Tape<T>,
    graph: &AttentionGraph,
    embeddings: Var,
    self_scorer: Var,
    neighbor_scorer: Var,
) -> Result<Var, TensorError> {
    let (rows, _) = tape.shape(embeddings);
    if rows != graph.num_nodes() {
        return Err(TensorError::ShapeMismatch {
            op: "node_level_encode",
            left: (rows, 0),
            right: (graph.num_nodes(), 0),
        });
    }
    let s_self = tape.matmul(embeddings, self_scorer)?;
    let s_nbr = tape.matmul(embeddings, neighbor_scorer)?;
    let e_self = tape.gather_rows(s_self, Arc::clone(&graph.targets))?;
    let e_nbr = tape.gather_rows(s_nbr, Arc::clone(&graph.sources))?;
    let raw = tape.add(e_self, e_nbr)?;
    let logits = tape.leaky_relu(raw, T::of(ATTENTION_SLOPE))?;
    tape.segment_softmax(logits, &graph.segments)
}

/// `ELU(Σ_{w ∈ N_ρ(e)} β_ew h_w)`; isolated nodes map to `ELU(0) = 0`.
pub fn node_level_encode<T: Scalar>(
    tape: &mut Tape<T>,
    graph: &AttentionGraph,
    embeddings: Var,
    self_scorer: Var,
    neighbor_scorer: Var,
) -> Result<Var, TensorError> {
    if graph.segments.num_edges() == 0 {
        let (rows, _) = tape.shape(embeddings);
        if rows != graph.num_nodes() {
            return Err(TensorError::ShapeMismatch {
                op: "node_level_encode",
                left: (rows, 0),
                right: (graph.num_nodes(), 0),
            });
        }
        let zeros = tape.scale(embeddings, T::zero())?;
        return tape.elu(zeros);
    }
    let beta = node_level_attention(tape, graph, embeddings, self_scorer, neighbor_scorer)?;
    let aggregated = tape.segment_weighted_sum(beta, embeddings, &graph.segments)?;
    tape.elu(aggregated)
}

/// Tape handles of one semantic attention block.
#[derive(Debug, Clone, Copy)]
pub struct SemanticVars {
    /// `d x d`
    pub weight: Var,
    /// `1 x d`
    pub bias: Var,
    /// `d x 1`
    pub query: Var,
}

/// Fuses per-path embeddings with softmax weights over
/// `w_ρ = mean_e qᵀ tanh(h_e^ρ W + b)`. Returns the fused embedding and the
/// `1 x P` weight row.
pub fn semantic_fuse<T: Scalar>(
    tape: &mut Tape<T>,
    path_embeddings: &[Var],
    vars: SemanticVars,
) -> Result<(Var, Var), TensorError> {
    let Some(&first) = path_embeddings.first() else {
        return Err(TensorError::EmptyInput { op: "semantic_fuse" });
    };
    let shape = tape.shape(first);
    let mut importances = Vec::with_capacity(path_embeddings.len());
    for &h in path_embeddings {
        if tape.shape(h) != shape {
            return Err(TensorError::ShapeMismatch {
                op: "semantic_fuse",
                left: shape,
                right: tape.shape(h),
            });
        }
        let lin = tape.matmul(h, vars.weight)?;
        let shifted = tape.add(lin, vars.bias)?;
        let act = tape.tanh(shifted)?;
        let scores = tape.matmul(act, vars.query)?;
        importances.push(tape.mean(scores)?);
    }
    let w = tape.concat_cols(&importances)?;
    let gamma = tape.row_softmax(w, None)?;
    let mut fused: Option<Var> = None;
    for (j, &h) in path_embeddings.iter().enumerate() {
        let g = tape.gather_elements(gamma, Arc::from(vec![j]))?;
        let weighted = tape.mul(h, g)?;
        fused = Some(match fused {
            None => weighted,
            Some(acc) => tape.add(acc, weighted)?,
        });
    }
    Ok((fused.expect("at least one path"), gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn elu(x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            x.exp() - 1.0
        }
    }
    use crate::hin::{build_hin, metapath_subgraph, MetaPath, NodeTypeId};
    use crate::sparse::CsrMatrix;

    fn lcg_tensor(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Tensor::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    fn toy_hin() -> Hin {
        let nodes = [
            ("u0", "User"),
            ("u1", "User"),
            ("m0", "Movie"),
            ("m1", "Movie"),
            ("g0", "Genre"),
            ("g1", "Genre"),
        ];
        let edges = [
            ("u0", "rate", "m0"),
            ("u0", "rate", "m1"),
            ("u1", "rate", "m1"),
            ("m0", "has", "g0"),
            ("m1", "has", "g0"),
            ("m1", "has", "g1"),
        ];
        build_hin(&nodes, &edges, &[("User", "rate", "Movie"), ("Movie", "has", "Genre")]).unwrap()
    }

    fn leaky(x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            ATTENTION_SLOPE * x
        }
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn row_times(row: &[f64], m: &Tensor<f64>) -> Vec<f64> {
        (0..m.cols()).map(|c| (0..row.len()).map(|k| row[k] * m.get(k, c)).sum()).collect()
    }

    #[test]
    fn one_hop_matches_per_node_loop() {
        let hin = toy_hin();
        let d = 3;
        let h = lcg_tensor(hin.num_nodes(), d, 1);
        let proj: Vec<_> = (0..2).map(|r| lcg_tensor(d, d, 10 + r)).collect();
        let a_self: Vec<_> = (0..2).map(|r| lcg_tensor(d, 1, 20 + r)).collect();
        let a_nbr: Vec<_> = (0..2).map(|r| lcg_tensor(d, 1, 30 + r)).collect();

        let structure = OneHopStructure::new(&hin);
        let mut tape = Tape::new();
        let hv = tape.param(h.clone());
        let vars = OneHopVars {
            projections: proj.iter().map(|p| tape.param(p.clone())).collect(),
            self_scorers: a_self.iter().map(|p| tape.param(p.clone())).collect(),
            neighbor_scorers: a_nbr.iter().map(|p| tape.param(p.clone())).collect(),
        };
        let out = one_hop_encode(&mut tape, &structure, hv, &vars, false).unwrap();
        let out = tape.value(out).clone();

        // Oracle: scan the edge list per node.
        for e in 0..hin.num_nodes() {
            let mut nbrs = Vec::new();
            for edge in hin.edges() {
                if edge.src == e {
                    nbrs.push((edge.dst, edge.relation.0));
                }
                if edge.dst == e {
                    nbrs.push((edge.src, edge.relation.0));
                }
            }
            let scores: Vec<f64> = nbrs
                .iter()
                .map(|&(w, r)| {
                    let pw = row_times(h.row(w), &proj[r]);
                    leaky(dot(h.row(e), a_self[r].data()) + dot(&pw, a_nbr[r].data()))
                })
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            for c in 0..d {
                let sum: f64 = nbrs
                    .iter()
                    .zip(&scores)
                    .map(|(&(w, _), s)| s.exp() / z * h.get(w, c))
                    .sum();
                let expected = elu(sum);
                assert!((out.get(e, c) - expected).abs() < 1e-10, "node {e} col {c}");
            }
        }
    }

    #[test]
    fn single_neighbor_gets_full_weight() {
        let hin = build_hin(&[("u", "User"), ("m", "Movie")], &[("u", "rate", "m")], &[("User", "rate", "Movie")]).unwrap();
        let structure = OneHopStructure::new(&hin);
        let h = Tensor::from_rows(&[vec![0.5, -1.0], vec![-0.3, 2.0]]);
        let mut tape = Tape::new();
        let hv = tape.param(h.clone());
        let vars = OneHopVars {
            projections: vec![tape.param(lcg_tensor(2, 2, 4))],
            self_scorers: vec![tape.param(lcg_tensor(2, 1, 5))],
            neighbor_scorers: vec![tape.param(lcg_tensor(2, 1, 6))],
        };
        let alpha = one_hop_attention(&mut tape, &structure, hv, &vars).unwrap();
        assert_eq!(tape.value(alpha).data(), &[1.0, 1.0]);
        let out = one_hop_encode(&mut tape, &structure, hv, &vars, false).unwrap();
        let out = tape.value(out);
        assert!((out.get(0, 0) - elu(-0.3)).abs() < 1e-15);
        assert!((out.get(0, 1) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn identical_neighbors_split_evenly() {
        let hin = build_hin(
            &[("u", "User"), ("m0", "Movie"), ("m1", "Movie")],
            &[("u", "rate", "m0"), ("u", "rate", "m1")],
            &[("User", "rate", "Movie")],
        )
        .unwrap();
        let structure = OneHopStructure::new(&hin);
        let h = Tensor::from_rows(&[vec![0.1, 0.2], vec![0.7, -0.4], vec![0.7, -0.4]]);
        let mut tape = Tape::new();
        let hv = tape.param(h);
        let vars = OneHopVars {
            projections: vec![tape.param(lcg_tensor(2, 2, 7))],
            self_scorers: vec![tape.param(lcg_tensor(2, 1, 8))],
            neighbor_scorers: vec![tape.param(lcg_tensor(2, 1, 9))],
        };
        let alpha = one_hop_attention(&mut tape, &structure, hv, &vars).unwrap();
        let a = tape.value(alpha);
        assert!((a.get(0, 0) - 0.5).abs() < 1e-15 && (a.get(1, 0) - 0.5).abs() < 1e-15);
    }

    fn metapath_graph(n: usize, pairs: &[(usize, usize)]) -> MetaPathGraph {
        let adjacency = CsrMatrix::from_pairs(n, n, pairs.iter().copied()).symmetrize().without_diagonal();
        let degrees = adjacency.row_counts();
        MetaPathGraph {
            name: "p".into(),
            endpoint_type: NodeTypeId(0),
            adjacency,
            degrees,
        }
    }

    #[test]
    fn node_level_matches_loop_oracle() {
        let pairs: Vec<(usize, usize)> = (0..10)
            .flat_map(|a| (0..10).map(move |b| (a, b)))
            .filter(|&(a, b)| a < b && (a * 7 + b * 3) % 4 == 0)
            .collect();
        let g = metapath_graph(10, &pairs);
        let d = 4;
        let h = lcg_tensor(10, d, 3);
        let a1 = lcg_tensor(d, 1, 4);
        let a2 = lcg_tensor(d, 1, 5);
        let ag = AttentionGraph::from_metapath(&g);
        let mut tape = Tape::new();
        let hv = tape.param(h.clone());
        let (v1, v2) = (tape.param(a1.clone()), tape.param(a2.clone()));
        let out = node_level_encode(&mut tape, &ag, hv, v1, v2).unwrap();
        let out = tape.value(out).clone();
        for e in 0..10 {
            let nbrs: Vec<usize> = (0..10).filter(|&w| g.adjacency.contains(e, w)).collect();
            let scores: Vec<f64> = nbrs
                .iter()
                .map(|&w| leaky(dot(h.row(e), a1.data()) + dot(h.row(w), a2.data())))
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            for c in 0..d {
                let s: f64 = nbrs.iter().zip(&scores).map(|(&w, sc)| sc.exp() / z * h.get(w, c)).sum();
                assert!((out.get(e, c) - elu(s)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn complete_graph_with_equal_features_is_uniform() {
        let pairs: Vec<_> = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).filter(|(a, b)| a < b).collect();
        let g = metapath_graph(4, &pairs);
        let ag = AttentionGraph::from_metapath(&g);
        let mut tape = Tape::new();
        let hv = tape.param(Tensor::full(4, 3, 0.3));
        let (v1, v2) = (tape.param(lcg_tensor(3, 1, 1)), tape.param(lcg_tensor(3, 1, 2)));
        let beta = node_level_attention(&mut tape, &ag, hv, v1, v2).unwrap();
        for &b in tape.value(beta).data() {
            assert!((b - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn isolated_node_encodes_to_zero() {
        let g = metapath_graph(3, &[(0, 1)]);
        let ag = AttentionGraph::from_metapath(&g);
        let mut tape = Tape::new();
        let hv = tape.param(lcg_tensor(3, 2, 9));
        let (v1, v2) = (tape.param(lcg_tensor(2, 1, 1)), tape.param(lcg_tensor(2, 1, 2)));
        let out = node_level_encode(&mut tape, &ag, hv, v1, v2).unwrap();
        assert_eq!(tape.value(out).row(2), &[0.0, 0.0]);
    }

    fn semantic_vars(tape: &mut Tape<f64>, d: usize) -> SemanticVars {
        SemanticVars {
            weight: tape.param(lcg_tensor(d, d, 41)),
            bias: tape.param(lcg_tensor(1, d, 42)),
            query: tape.param(lcg_tensor(d, 1, 43)),
        }
    }

    #[test]
    fn semantic_single_path_is_identity() {
        let mut tape = Tape::new();
        let h = lcg_tensor(5, 3, 2);
        let hv = tape.param(h.clone());
        let vars = semantic_vars(&mut tape, 3);
        let (fused, gamma) = semantic_fuse(&mut tape, &[hv], vars).unwrap();
        assert_eq!(tape.value(gamma).data(), &[1.0]);
        assert_eq!(tape.value(fused), &h);
        assert!(matches!(semantic_fuse(&mut tape, &[], vars), Err(TensorError::EmptyInput { .. })));
    }

    #[test]
    fn semantic_identical_paths_split_evenly() {
        let mut tape = Tape::new();
        let h = lcg_tensor(5, 3, 2);
        let a = tape.param(h.clone());
        let b = tape.param(h);
        let vars = semantic_vars(&mut tape, 3);
        let (_, gamma) = semantic_fuse(&mut tape, &[a, b], vars).unwrap();
        assert_eq!(tape.value(gamma).data(), &[0.5, 0.5]);
    }

    #[test]
    fn semantic_matches_direct_formula() {
        let d = 3;
        let paths: Vec<_> = (0..3).map(|j| lcg_tensor(6, d, 100 + j)).collect();
        let w = lcg_tensor(d, d, 41);
        let b = lcg_tensor(1, d, 42);
        let q = lcg_tensor(d, 1, 43);
        let mut tape = Tape::new();
        let vs: Vec<_> = paths.iter().map(|p| tape.param(p.clone())).collect();
        let vars = semantic_vars(&mut tape, d);
        let (fused, gamma) = semantic_fuse(&mut tape, &vs, vars).unwrap();

        let importance: Vec<f64> = paths
            .iter()
            .map(|p| {
                (0..6)
                    .map(|e| {
                        let lin = row_times(p.row(e), &w);
                        let act: Vec<f64> = lin.iter().zip(b.data()).map(|(x, y)| (x + y).tanh()).collect();
                        dot(&act, q.data())
                    })
                    .sum::<f64>()
                    / 6.0
            })
            .collect();
        let z: f64 = importance.iter().map(|x| x.exp()).sum();
        let expected_gamma: Vec<f64> = importance.iter().map(|x| x.exp() / z).collect();
        for (g, e) in tape.value(gamma).data().iter().zip(&expected_gamma) {
            assert!((g - e).abs() < 1e-12);
        }
        let fused = tape.value(fused);
        for r in 0..6 {
            for c in 0..d {
                let e: f64 = paths.iter().zip(&expected_gamma).map(|(p, g)| g * p.get(r, c)).sum();
                assert!((fused.get(r, c) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn metapath_view_runs_on_real_subgraph() {
        let hin = toy_hin();
        let path = MetaPath::parse(hin.schema(), "MGM", "has, ~has").unwrap();
        let g = metapath_subgraph(&hin, &path).unwrap();
        let ag = AttentionGraph::from_metapath(&g);
        let mut tape = Tape::new();
        let hv = tape.param(lcg_tensor(2, 3, 5));
        let (v1, v2) = (tape.param(lcg_tensor(3, 1, 1)), tape.param(lcg_tensor(3, 1, 2)));
        let out = node_level_encode(&mut tape, &ag, hv, v1, v2).unwrap();
        assert_eq!(tape.shape(out), (2, 3));
    }
}
