//! Parameter layout, per-graph precomputation and the forward pass that
//! produces user/item representations and the cross-view losses.

use std::sync::Arc;

use crate::augmentation::{apply_mask_on_tape, propagate_on_tape, MaskVector};
use crate::autodiff::{xavier_uniform, ParamStore, Tape, Tensor, Var};
use crate::config::{Fusion, TrainConfig};
use crate::contrastive::{
    contrastive_loss, info_nce_positives, positives_dense, project, similarity_pair, ProjectionVars,
};
use crate::data::Dataset;
use crate::encoders::{
    node_level_encode, one_hop_encode, semantic_fuse, AttentionGraph, OneHopStructure, OneHopVars, SemanticVars,
};
use crate::error::{Error, Result};
use crate::hin::{metapath_subgraph, positive_matrix, MetaPath, NodeTypeId};
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;
use crate::sparse::SparseOperator;

/// One meta-path subgraph ready for the tape.
#[derive(Debug, Clone)]
pub struct PathContext<T> {
    pub name: String,
    pub attention: AttentionGraph,
    pub operator: Arc<SparseOperator<T>>,
    pub num_edges: usize,
}

/// Everything derived from the (training) network that the forward pass
/// needs. Built once per network.
#[derive(Debug, Clone)]
pub struct GraphContext<T> {
    pub onehop: OneHopStructure,
    pub type_names: Vec<String>,
    pub type_counts: Vec<usize>,
    pub num_relations: usize,
    pub user_type: NodeTypeId,
    pub item_type: NodeTypeId,
    pub user_index: Arc<[usize]>,
    pub item_index: Arc<[usize]>,
    pub user_paths: Vec<PathContext<T>>,
    pub item_paths: Vec<PathContext<T>>,
    pub pos_user: Tensor<T>,
    pub pos_item: Tensor<T>,
}

impl<T: Scalar> GraphContext<T> {
    /// `paths` must include at least one user path and one item path.
    /// With `infonce` the positives are the diagonal only.
    pub fn build(ds: &Dataset, paths: &[MetaPath], infonce: bool) -> Result<Self> {
        let hin = &ds.hin;
        let schema = hin.schema();
        let mut user_graphs = Vec::new();
        let mut item_graphs = Vec::new();
        for p in paths {
            let g = metapath_subgraph(hin, p)?;
            if p.endpoint_type() == ds.user_type {
                user_graphs.push(g);
            } else if p.endpoint_type() == ds.item_type {
                item_graphs.push(g);
            }
        }
        for (graphs, t) in [(&user_graphs, ds.user_type), (&item_graphs, ds.item_type)] {
            if graphs.is_empty() {
                return Err(Error::setup(format!(
                    "no meta-path ends at type {}; declare at least one per side",
                    schema.type_name(t)
                )));
            }
        }
        let to_ctx = |g: &crate::hin::MetaPathGraph| PathContext {
            name: g.name.clone(),
            attention: AttentionGraph::from_metapath(g),
            operator: Arc::new(SparseOperator::normalized_adjacency(&g.adjacency)),
            num_edges: g.adjacency.nnz(),
        };
        let (m, n) = (ds.num_users(), ds.num_items());
        let (pos_user, pos_item) = if infonce {
            (info_nce_positives(m), info_nce_positives(n))
        } else {
            (
                positives_dense(&positive_matrix(&user_graphs)?),
                positives_dense(&positive_matrix(&item_graphs)?),
            )
        };
        let uo = hin.type_offset(ds.user_type);
        let io = hin.type_offset(ds.item_type);
        Ok(Self {
            onehop: OneHopStructure::new(hin),
            type_names: schema.type_names().to_vec(),
            type_counts: (0..schema.num_types()).map(|t| hin.type_count(NodeTypeId(t))).collect(),
            num_relations: schema.num_relations(),
            user_type: ds.user_type,
            item_type: ds.item_type,
            user_index: (uo..uo + m).collect::<Vec<_>>().into(),
            item_index: (io..io + n).collect::<Vec<_>>().into(),
            user_paths: user_graphs.iter().map(to_ctx).collect(),
            item_paths: item_graphs.iter().map(to_ctx).collect(),
            pos_user,
            pos_item,
        })
    }

    pub fn num_users(&self) -> usize {
        self.user_index.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_index.len()
    }
}

/// Parameter slots by role.
#[derive(Debug, Clone)]
struct Layout {
    embeddings: Vec<usize>,
    /// `(P, a_self, a_nbr)` per relation.
    onehop: Vec<(usize, usize, usize)>,
    /// `(a_self, a_nbr)` per path, users then items.
    user_paths: Vec<(usize, usize)>,
    item_paths: Vec<(usize, usize)>,
    /// `(W, b, q)`
    semantic_user: (usize, usize, usize),
    semantic_item: (usize, usize, usize),
    /// `(W1, b1, W2, b2)`
    projection: (usize, usize, usize, usize),
}

/// Trainable state of the recommender.
#[derive(Debug, Clone)]
pub struct MclModel<T> {
    pub params: ParamStore<T>,
    pub dim: usize,
    layout: Layout,
}

/// Tape handles and outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// One tape leaf per parameter, in slot order.
    pub params: Vec<Var>,
    /// Scoring representations.
    pub user: Var,
    pub item: Var,
    pub h1_user: Option<Var>,
    pub h1_item: Option<Var>,
    pub h2_user: Option<Var>,
    pub h2_item: Option<Var>,
    pub gamma_user: Option<Var>,
    pub gamma_item: Option<Var>,
    /// Cross-view losses, when requested and both views exist.
    pub l_user: Option<Var>,
    pub l_item: Option<Var>,
}

/// Per-type keep masks for one training step.
#[derive(Debug, Clone)]
pub struct StepMasks {
    pub user: MaskVector,
    pub item: MaskVector,
}

impl<T: Scalar> MclModel<T> {
    /// Xavier-initialized parameters drawn from the seed's init stream:
    /// embedding tables in type order, then one-hop, node-level, semantic
    /// and projection weights. Biases start at zero.
    pub fn new(ctx: &GraphContext<T>, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, Stream::Init);
        let mut params = ParamStore::new();
        let mut xavier = |params: &mut ParamStore<T>, name: String, r: usize, c: usize| -> Result<usize> {
            Ok(params.insert(name, xavier_uniform(r, c, &mut rng)?))
        };
        let mut embeddings = Vec::new();
        for (name, &count) in ctx.type_names.iter().zip(&ctx.type_counts) {
            if count == 0 {
                return Err(Error::setup(format!("node type {name} has no nodes")));
            }
            embeddings.push(xavier(&mut params, format!("embedding.{name}"), count, dim)?);
        }
        let mut onehop = Vec::new();
        for r in 0..ctx.num_relations {
            onehop.push((
                xavier(&mut params, format!("onehop.{r}.proj"), dim, dim)?,
                xavier(&mut params, format!("onehop.{r}.a_self"), dim, 1)?,
                xavier(&mut params, format!("onehop.{r}.a_nbr"), dim, 1)?,
            ));
        }
        let mut path_params = |params: &mut ParamStore<T>, paths: &[PathContext<T>]| -> Result<Vec<(usize, usize)>> {
            paths
                .iter()
                .map(|p| {
                    Ok((
                        xavier(params, format!("path.{}.a_self", p.name), dim, 1)?,
                        xavier(params, format!("path.{}.a_nbr", p.name), dim, 1)?,
                    ))
                })
                .collect()
        };
        let user_paths = path_params(&mut params, &ctx.user_paths)?;
        let item_paths = path_params(&mut params, &ctx.item_paths)?;
        let mut semantic = |params: &mut ParamStore<T>, side: &str| -> Result<(usize, usize, usize)> {
            Ok((
                xavier(params, format!("semantic.{side}.w"), dim, dim)?,
                params.insert(format!("semantic.{side}.b"), Tensor::zeros(1, dim)),
                xavier(params, format!("semantic.{side}.q"), dim, 1)?,
            ))
        };
        let semantic_user = semantic(&mut params, "user")?;
        let semantic_item = semantic(&mut params, "item")?;
        let projection = (
            xavier(&mut params, "projection.w1".into(), dim, dim)?,
            params.insert("projection.b1", Tensor::zeros(1, dim)),
            xavier(&mut params, "projection.w2".into(), dim, dim)?,
            params.insert("projection.b2", Tensor::zeros(1, dim)),
        );
        Ok(Self {
            params,
            dim,
            layout: Layout {
                embeddings,
                onehop,
                user_paths,
                item_paths,
                semantic_user,
                semantic_item,
                projection,
            },
        })
    }

    /// Replaces parameter values by name, e.g. from a checkpoint. Every
    /// existing parameter must be present with the same shape.
    pub fn load_params(&mut self, loaded: &ParamStore<T>) -> Result<()> {
        for slot in 0..self.params.len() {
            let name = self.params.name(slot).to_string();
            let value = loaded.get(&name)?;
            if value.shape() != self.params.tensor(slot).shape() {
                return Err(Error::setup(format!(
                    "checkpoint parameter {name} has shape {:?}, expected {:?}",
                    value.shape(),
                    self.params.tensor(slot).shape()
                )));
            }
            *self.params.tensor_mut(slot) = value.clone();
        }
        Ok(())
    }

    /// Slots of the embedding tables, in type order.
    pub fn embedding_slots(&self) -> &[usize] {
        &self.layout.embeddings
    }

    /// Slots of the shared projection head.
    pub fn projection_slots(&self) -> [usize; 4] {
        let (a, b, c, d) = self.layout.projection;
        [a, b, c, d]
    }

    /// Runs both views. `masks` switches on training-time augmentation;
    /// without it masking is off (`δ = 0`) but propagation still applies.
    /// Contrastive losses are built only when `with_contrastive` is set.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        ctx: &GraphContext<T>,
        cfg: &TrainConfig,
        masks: Option<&StepMasks>,
        with_contrastive: bool,
    ) -> Result<Forward> {
        let ab = cfg.ablation;
        let vars: Vec<Var> = self.params.tensors().iter().map(|t| tape.param(t.clone())).collect();
        let tables: Vec<Var> = self.layout.embeddings.iter().map(|&s| vars[s]).collect();
        let e_user = tables[ctx.user_type.0];
        let e_item = tables[ctx.item_type.0];

        // One-hop view. Needed for scoring unless no_1hop, and for the
        // contrastive term whenever the meta view exists.
        let need_contrast = with_contrastive && !ab.no_meta;
        let (h1_user, h1_item) = if !ab.no_1hop || need_contrast {
            let all = tape.concat_rows(&tables)?;
            let onehop = OneHopVars {
                projections: self.layout.onehop.iter().map(|&(p, _, _)| vars[p]).collect(),
                self_scorers: self.layout.onehop.iter().map(|&(_, a, _)| vars[a]).collect(),
                neighbor_scorers: self.layout.onehop.iter().map(|&(_, _, b)| vars[b]).collect(),
            };
            let h1 = one_hop_encode(tape, &ctx.onehop, all, &onehop, cfg.aggregate_projected)?;
            (
                Some(tape.gather_rows(h1, Arc::clone(&ctx.user_index))?),
                Some(tape.gather_rows(h1, Arc::clone(&ctx.item_index))?),
            )
        } else {
            (None, None)
        };

        let (mut h2_user, mut h2_item, mut gamma_user, mut gamma_item) = (None, None, None, None);
        if !ab.no_meta {
            let sides = [
                (e_user, &ctx.user_paths, &self.layout.user_paths, self.layout.semantic_user, masks.map(|m| &m.user)),
                (e_item, &ctx.item_paths, &self.layout.item_paths, self.layout.semantic_item, masks.map(|m| &m.item)),
            ];
            for (side, (table, paths, slots, sem, mask)) in sides.into_iter().enumerate() {
                let (h2, gamma) = self.meta_view(tape, cfg, &vars, table, paths, slots, sem, mask)?;
                if side == 0 {
                    h2_user = Some(h2);
                    gamma_user = Some(gamma);
                } else {
                    h2_item = Some(h2);
                    gamma_item = Some(gamma);
                }
            }
        }

        let (mut l_user, mut l_item) = (None, None);
        if need_contrast {
            let (w1, b1, w2, b2) = self.layout.projection;
            let head = ProjectionVars {
                w1: vars[w1],
                b1: vars[b1],
                w2: vars[w2],
                b2: vars[b2],
            };
            let pos_user = tape.constant(ctx.pos_user.clone());
            let pos_item = tape.constant(ctx.pos_item.clone());
            for (h1, h2, pos, out) in [
                (h1_user, h2_user, pos_user, &mut l_user),
                (h1_item, h2_item, pos_item, &mut l_item),
            ] {
                let (h1, h2) = (h1.expect("one-hop view built"), h2.expect("meta view built"));
                let z1 = project(tape, h1, head)?;
                let z2 = project(tape, h2, head)?;
                let pair = similarity_pair(tape, z1, z2, cfg.tau, cfg.double_exp)?;
                *out = Some(contrastive_loss(tape, pair, pos, cfg.lambda1)?);
            }
        }

        let fuse = |tape: &mut Tape<T>, h1: Option<Var>, h2: Option<Var>, base: Var| -> Result<Var> {
            let h1 = if ab.no_1hop { None } else { h1 };
            Ok(match (h1, h2) {
                (Some(a), Some(b)) => match cfg.fusion {
                    Fusion::Sum => tape.add(a, b)?,
                    Fusion::Concat => tape.concat_cols(&[a, b])?,
                    Fusion::MetaOnly => b,
                },
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => base,
            })
        };
        let user = fuse(tape, h1_user, h2_user, e_user)?;
        let item = fuse(tape, h1_item, h2_item, e_item)?;
        Ok(Forward {
            params: vars,
            user,
            item,
            h1_user,
            h1_item,
            h2_user,
            h2_item,
            gamma_user,
            gamma_item,
            l_user,
            l_item,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn meta_view(
        &self,
        tape: &mut Tape<T>,
        cfg: &TrainConfig,
        vars: &[Var],
        table: Var,
        paths: &[PathContext<T>],
        slots: &[(usize, usize)],
        sem: (usize, usize, usize),
        mask: Option<&MaskVector>,
    ) -> Result<(Var, Var)> {
        let mut source = table;
        if !cfg.ablation.no_mask {
            if let Some(mask) = mask.filter(|_| cfg.mask_enabled) {
                source = apply_mask_on_tape(tape, source, mask)?;
            }
        }
        let mut per_path = Vec::with_capacity(paths.len());
        for (p, &(a_self, a_nbr)) in paths.iter().zip(slots) {
            let mut input = source;
            if !cfg.ablation.no_mask {
                input = propagate_on_tape(tape, &p.operator, input, cfg.prop_order)?;
                if cfg.detach_augmentation {
                    let value = tape.value(input).clone();
                    input = tape.constant(value);
                }
            }
            per_path.push(node_level_encode(tape, &p.attention, input, vars[a_self], vars[a_nbr])?);
        }
        let (w, b, q) = sem;
        let fused = semantic_fuse(
            tape,
            &per_path,
            SemanticVars {
                weight: vars[w],
                bias: vars[b],
                query: vars[q],
            },
        )?;
        Ok(fused)
    }

    /// Scoring representations with augmentation off.
    pub fn representations(&self, ctx: &GraphContext<T>, cfg: &TrainConfig) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, ctx, cfg, None, false)?;
        Ok((tape.value(f.user).clone(), tape.value(f.item).clone()))
    }

    /// `ŷ` for every user-item pair, `m x n`.
    pub fn score_matrix(&self, ctx: &GraphContext<T>, cfg: &TrainConfig) -> Result<Tensor<T>> {
        let (u, i) = self.representations(ctx, cfg)?;
        Ok(u.matmul_transposed(&i)?)
    }
}
