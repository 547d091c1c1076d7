//! Oracles and criterion checks shared by the integration tests and the
//! acceptance target.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mcl_core::augmentation::{apply_mask, propagate, sample_mask};
use mcl_core::autodiff::Var;
use mcl_core::config::{ExperimentConfig, TrainConfig};
use mcl_core::contrastive::{contrastive_loss, similarity_pair};
use mcl_core::data::{synthetic, Dataset};
use mcl_core::evaluation::{topk_rank, train_rank};
use mcl_core::hin::{build_hin, metapath_subgraph, positive_matrix, MetaPath, MetaPathGraph, NodeTypeId};
use mcl_core::model::{GraphContext, StepMasks};
use mcl_core::rng::{stream, Stream};
use mcl_core::sparse::{CsrMatrix, SegmentIndex, SparseOperator};
use mcl_core::trainer::{bpr_loss, sample_bpr_batch, InteractionSplit, Triple};
use mcl_core::{Tape, Tensor, Trainer};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Relative errors are `|a − n| / max(|a|, |n|, FD_FLOOR)`; the floor keeps
/// exactly-zero gradients from dividing round-off by zero.
pub const FD_FLOOR: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const ORACLE_TOL: f64 = 1e-10;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR)
}

/// Uniform entries in `[-1, 1]`, nudged away from zero so kinked ops are
/// differentiable at every sample.
pub fn rand_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(rows, cols, |_, _| {
        let x: f64 = rng.gen_range(-1.0..1.0);
        if x.abs() < 0.05 {
            x.signum() * 0.05 + x
        } else {
            x
        }
    })
}

pub fn rand_positive(rows: usize, cols: usize, seed: u64) -> Tensor {
    rand_tensor(rows, cols, seed).map(|x| x.abs() + 0.1)
}

type OpFn = dyn Fn(&mut Tape, &[Var]) -> Var;

/// Max relative error between the tape gradient and central differences
/// of `sum(f(inputs) ⊙ W)` for a fixed random `W`.
pub fn grad_check(inputs: &[Tensor], f: &OpFn) -> f64 {
    let weighted = |tape: &mut Tape, vars: &[Var]| {
        let out = f(tape, vars);
        let (r, c) = tape.shape(out);
        let w = tape.constant(rand_tensor(r, c, 4242));
        let p = tape.mul(out, w).unwrap();
        tape.sum(p).unwrap()
    };
    let loss_at = |vals: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.param(v.clone())).collect();
        let l = weighted(&mut tape, &vars);
        tape.value(l).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.param(v.clone())).collect();
    let loss = weighted(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let g = grads.wrt(*v);
        for k in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[k] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[k] -= FD_STEP;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(g.data()[k], numeric));
        }
    }
    worst
}

fn segments() -> Arc<SegmentIndex> {
    // 4 targets over 5 sources; target 2 has no edges.
    Arc::new(SegmentIndex::from_neighbor_lists(
        &[vec![0, 3], vec![1, 2, 4], vec![], vec![4, 0, 0]],
        5,
    ))
}

/// Gradient check of every differentiable tape op on inputs of at most
/// 8x8. Returns `(op, max relative error)`.
pub fn op_gradient_errors() -> Vec<(&'static str, f64)> {
    let t = rand_tensor;
    let mask = Tensor::from_fn(4, 6, |r, c| if (r + 2 * c) % 3 == 0 && c != 0 { 0.0 } else { 1.0 });
    let mask = Arc::new(mask);
    let sparse = Arc::new(SparseOperator::normalized_adjacency(&CsrMatrix::from_pairs(
        5,
        5,
        [(0, 1), (1, 0), (1, 2), (2, 1), (3, 4), (4, 3), (0, 3), (3, 0)],
    )));
    let mut out: Vec<(&'static str, f64)> = Vec::new();
    let mut run = |name: &'static str, inputs: Vec<Tensor>, f: Box<OpFn>| {
        out.push((name, grad_check(&inputs, &*f)));
    };
    run("matmul", vec![t(5, 4, 1), t(4, 3, 2)], Box::new(|tp, v| tp.matmul(v[0], v[1]).unwrap()));
    run("transpose", vec![t(3, 5, 3)], Box::new(|tp, v| tp.transpose(v[0]).unwrap()));
    run(
        "sparse_matmul",
        vec![t(5, 3, 4)],
        Box::new(move |tp, v| tp.sparse_matmul(&sparse, v[0]).unwrap()),
    );
    run("add", vec![t(4, 3, 5), t(4, 3, 6)], Box::new(|tp, v| tp.add(v[0], v[1]).unwrap()));
    run("add_row_broadcast", vec![t(4, 3, 7), t(1, 3, 8)], Box::new(|tp, v| tp.add(v[0], v[1]).unwrap()));
    run("add_col_broadcast", vec![t(4, 3, 9), t(4, 1, 10)], Box::new(|tp, v| tp.add(v[0], v[1]).unwrap()));
    run("sub", vec![t(4, 3, 11), t(1, 1, 12)], Box::new(|tp, v| tp.sub(v[0], v[1]).unwrap()));
    run("mul", vec![t(4, 3, 13), t(4, 3, 14)], Box::new(|tp, v| tp.mul(v[0], v[1]).unwrap()));
    run("scale", vec![t(3, 3, 15)], Box::new(|tp, v| tp.scale(v[0], -1.7).unwrap()));
    run(
        "concat_cols",
        vec![t(3, 2, 16), t(3, 4, 17)],
        Box::new(|tp, v| tp.concat_cols(&[v[0], v[1]]).unwrap()),
    );
    run(
        "concat_rows",
        vec![t(2, 3, 18), t(4, 3, 19)],
        Box::new(|tp, v| tp.concat_rows(&[v[0], v[1]]).unwrap()),
    );
    run(
        "gather_rows",
        vec![t(5, 3, 20)],
        Box::new(|tp, v| tp.gather_rows(v[0], Arc::from(vec![4, 0, 0, 2])).unwrap()),
    );
    run(
        "gather_elements",
        vec![t(4, 3, 21)],
        Box::new(|tp, v| tp.gather_elements(v[0], Arc::from(vec![11, 0, 5, 5, 7])).unwrap()),
    );
    run("row_softmax", vec![t(4, 6, 22)], Box::new(|tp, v| tp.row_softmax(v[0], None).unwrap()));
    run(
        "masked_row_softmax",
        vec![t(4, 6, 23)],
        Box::new(move |tp, v| tp.row_softmax(v[0], Some(&mask)).unwrap()),
    );
    run(
        "segment_softmax",
        vec![t(8, 1, 24)],
        Box::new(|tp, v| tp.segment_softmax(v[0], &segments()).unwrap()),
    );
    run(
        "segment_weighted_sum",
        vec![t(8, 1, 25), t(5, 3, 26)],
        Box::new(|tp, v| tp.segment_weighted_sum(v[0], v[1], &segments()).unwrap()),
    );
    run("row_l2_normalize", vec![t(4, 5, 27)], Box::new(|tp, v| tp.row_l2_normalize(v[0]).unwrap()));
    run(
        "cosine_similarity",
        vec![t(4, 5, 28), t(6, 5, 29)],
        Box::new(|tp, v| tp.cosine_similarity(v[0], v[1]).unwrap()),
    );
    run("elu", vec![t(4, 4, 30)], Box::new(|tp, v| tp.elu(v[0]).unwrap()));
    run("tanh", vec![t(4, 4, 31)], Box::new(|tp, v| tp.tanh(v[0]).unwrap()));
    run("leaky_relu", vec![t(4, 4, 32)], Box::new(|tp, v| tp.leaky_relu(v[0], 0.2).unwrap()));
    run("sigmoid", vec![t(4, 4, 33)], Box::new(|tp, v| tp.sigmoid(v[0]).unwrap()));
    run("log_sigmoid", vec![t(4, 4, 34).scale(4.0)], Box::new(|tp, v| tp.log_sigmoid(v[0]).unwrap()));
    run("exp", vec![t(4, 4, 35)], Box::new(|tp, v| tp.exp(v[0]).unwrap()));
    run("log", vec![rand_positive(4, 4, 36)], Box::new(|tp, v| tp.log(v[0], 1e-10).unwrap()));
    run("row_sum", vec![t(4, 5, 37)], Box::new(|tp, v| tp.row_sum(v[0]).unwrap()));
    run("row_mean", vec![t(4, 5, 38)], Box::new(|tp, v| tp.row_mean(v[0]).unwrap()));
    run("sum", vec![t(3, 5, 39)], Box::new(|tp, v| tp.sum(v[0]).unwrap()));
    run("mean", vec![t(3, 5, 40)], Box::new(|tp, v| tp.mean(v[0]).unwrap()));
    run(
        "composite_8x8",
        vec![t(8, 8, 41), t(8, 8, 42)],
        Box::new(|tp, v| {
            let m = tp.matmul(v[0], v[1]).unwrap();
            let e = tp.elu(m).unwrap();
            let s = tp.row_softmax(e, None).unwrap();
            tp.log(s, 1e-10).unwrap()
        }),
    );
    out
}

pub fn toy_trainer(cfg: TrainConfig) -> Trainer {
    let ds = synthetic::toy(6, 6, 3, 5);
    let split = InteractionSplit::from_parts(ds.num_users(), ds.num_items(), ds.interactions(), vec![], vec![]);
    let paths = ds.run_metapaths(false).unwrap();
    let ctx = GraphContext::build(&ds, &paths, cfg.infonce_ablation).unwrap();
    Trainer::new(cfg, ctx, split).unwrap()
}

/// Finite-difference check of the joint loss with respect to every model
/// parameter on the 6-user/6-item/3-genre toy network, masks and
/// propagation active. Returns the worst relative error, the number of
/// scalars checked and the wall time.
pub fn full_loss_gradient(cfg: TrainConfig) -> (f64, usize, Duration) {
    let start = Instant::now();
    let mut t = toy_trainer(cfg.clone());
    let mut rng = stream(3, Stream::Mask);
    let masks = StepMasks {
        user: sample_mask(t.context().num_users(), 0.3, &mut rng).unwrap(),
        item: sample_mask(t.context().num_items(), 0.3, &mut rng).unwrap(),
    };
    let triples = sample_bpr_batch(t.split(), 12, &mut stream(3, Stream::Negatives)).unwrap();
    let loss = |t: &Trainer| {
        let mut tape = Tape::new();
        let (_, _, total, _) = t.joint_loss(&mut tape, &triples, Some(&masks)).unwrap();
        tape.value(total).item()
    };
    let mut tape = Tape::new();
    let (f, _, total, _) = t.joint_loss(&mut tape, &triples, Some(&masks)).unwrap();
    let grads = tape.backward(total).unwrap();
    let analytic: Vec<Tensor> = f.params.iter().map(|&v| grads.wrt(v)).collect();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (slot, g) in analytic.iter().enumerate() {
        for k in 0..g.len() {
            let orig = t.model().params.tensor(slot).data()[k];
            t.model_mut().params.tensor_mut(slot).data_mut()[k] = orig + FD_STEP;
            let plus = loss(&t);
            t.model_mut().params.tensor_mut(slot).data_mut()[k] = orig - FD_STEP;
            let minus = loss(&t);
            t.model_mut().params.tensor_mut(slot).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(g.data()[k], numeric));
            count += 1;
        }
    }
    (worst, count, start.elapsed())
}

pub fn gradient_config() -> TrainConfig {
    TrainConfig {
        dim: 4,
        beta: 0.5,
        lambda2: 1e-3,
        mask_delta: 0.3,
        prop_order: 2,
        ..TrainConfig::default()
    }
}

// ----- augmentation -------------------------------------------------------

/// δ = 0 masking followed by zero-order propagation reproduces the input
/// bit for bit.
pub fn augmentation_identity() -> bool {
    let e = rand_tensor(7, 5, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mask = sample_mask(7, 0.0, &mut rng).unwrap();
    let g = random_graph(7, 0.4, 2);
    let out = propagate(&g, &apply_mask(&e, &mask).unwrap(), 0).unwrap();
    out.matrix == e
}

/// Largest relative deviation of the Monte-Carlo mean of masked
/// embeddings from the embeddings themselves.
pub fn mask_unbiasedness(delta: f64, draws: usize) -> f64 {
    let e = rand_tensor(6, 4, 9).map(|x| x.signum() * (x.abs() + 0.5));
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut acc = Tensor::zeros(6, 4);
    for _ in 0..draws {
        let m = sample_mask(6, delta, &mut rng).unwrap();
        acc.add_assign(&apply_mask(&e, &m).unwrap());
    }
    let mean = acc.scale(1.0 / draws as f64);
    e.data()
        .iter()
        .zip(mean.data())
        .map(|(a, b)| (a - b).abs() / a.abs())
        .fold(0.0, f64::max)
}

/// Random symmetric graph without self-loops.
pub fn random_graph(n: usize, p: f64, seed: u64) -> MetaPathGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                pairs.push((a, b));
                pairs.push((b, a));
            }
        }
    }
    let adjacency = CsrMatrix::from_pairs(n, n, pairs);
    MetaPathGraph {
        name: "random".into(),
        endpoint_type: NodeTypeId(0),
        degrees: adjacency.row_counts(),
        adjacency,
    }
}

/// Dense power iteration `X ← Ā X` with explicit loops, averaged over
/// orders `0..=L`. Isolated nodes keep their own row.
pub fn dense_propagation(adj: &[Vec<bool>], x: &Tensor, order: usize) -> Tensor {
    let n = adj.len();
    let deg: Vec<f64> = adj.iter().map(|r| r.iter().filter(|&&b| b).count() as f64).collect();
    let mut abar = vec![vec![0.0; n]; n];
    for i in 0..n {
        if deg[i] == 0.0 {
            abar[i][i] = 1.0;
        }
        for j in 0..n {
            if adj[i][j] {
                abar[i][j] = 1.0 / (deg[i].sqrt() * deg[j].sqrt());
            }
        }
    }
    let mut cur = x.clone();
    let mut total = x.clone();
    for _ in 0..order {
        let next = Tensor::from_fn(n, x.cols(), |r, c| (0..n).map(|k| abar[r][k] * cur.get(k, c)).sum());
        total.add_assign(&next);
        cur = next;
    }
    total.scale(1.0 / (order + 1) as f64)
}

/// Worst absolute difference between [`propagate`] and the dense oracle
/// over several random 12-node graphs (one isolated node each) and orders.
pub fn propagation_error() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let mut g = random_graph(12, 0.3, seed);
        // isolate node 11
        let pairs: Vec<(usize, usize)> = g.adjacency.iter().filter(|&(a, b)| a != 11 && b != 11).collect();
        g.adjacency = CsrMatrix::from_pairs(12, 12, pairs);
        g.degrees = g.adjacency.row_counts();
        let dense: Vec<Vec<bool>> = (0..12).map(|a| (0..12).map(|b| g.adjacency.contains(a, b)).collect()).collect();
        let x = rand_tensor(12, 3, 100 + seed);
        for order in [0, 1, 3, 4] {
            let got = propagate(&g, &x, order).unwrap().matrix;
            worst = worst.max(got.max_abs_diff(&dense_propagation(&dense, &x, order)));
        }
    }
    worst
}

// ----- meta-paths -----------------------------------------------------------

/// Random three-type network of at most 50 nodes with external ids `a{i}`,
/// `b{i}`, `c{i}` and relations `ab` (A→B) and `bc` (B→C).
pub struct RandomHin {
    pub counts: [usize; 3],
    pub ab: Vec<(usize, usize)>,
    pub bc: Vec<(usize, usize)>,
    pub hin: mcl_core::hin::Hin,
}

pub fn random_hin(seed: u64) -> RandomHin {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = [rng.gen_range(2..=16), rng.gen_range(2..=20), rng.gen_range(1..=12)];
    assert!(counts.iter().sum::<usize>() <= 50);
    let p = rng.gen_range(0.05..0.35);
    let mut pick = |n: usize, m: usize| -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for x in 0..n {
            for y in 0..m {
                if rng.gen_bool(p) {
                    out.push((x, y));
                }
            }
        }
        out
    };
    let ab = pick(counts[0], counts[1]);
    let bc = pick(counts[1], counts[2]);
    let mut nodes = Vec::new();
    for (prefix, ty, n) in [("a", "A", counts[0]), ("b", "B", counts[1]), ("c", "C", counts[2])] {
        nodes.extend((0..n).map(|i| (format!("{prefix}{i}"), ty.to_string())));
    }
    let mut edges: Vec<(String, String, String)> = Vec::new();
    edges.extend(ab.iter().map(|&(x, y)| (format!("a{x}"), "ab".into(), format!("b{y}"))));
    edges.extend(bc.iter().map(|&(x, y)| (format!("b{x}"), "bc".into(), format!("c{y}"))));
    edges.shuffle(&mut rng);
    let schema = [
        ("A".to_string(), "ab".to_string(), "B".to_string()),
        ("B".to_string(), "bc".to_string(), "C".to_string()),
    ];
    let hin = build_hin(&nodes, &edges, &schema).unwrap();
    RandomHin { counts, ab, bc, hin }
}

/// Endpoint pairs joined by at least one walk that follows `steps`
/// (`(edge list, reversed)`), found by depth-first enumeration of walks.
fn enumerate_paths(start_count: usize, steps: &[(&[(usize, usize)], bool)]) -> BTreeSet<(usize, usize)> {
    fn walk(node: usize, steps: &[(&[(usize, usize)], bool)], ends: &mut BTreeSet<usize>) {
        let Some(((edges, reverse), rest)) = steps.split_first() else {
            ends.insert(node);
            return;
        };
        for &(x, y) in edges.iter() {
            let (from, to) = if *reverse { (y, x) } else { (x, y) };
            if from == node {
                walk(to, rest, ends);
            }
        }
    }
    let mut pairs = BTreeSet::new();
    for s in 0..start_count {
        let mut ends = BTreeSet::new();
        walk(s, steps, &mut ends);
        for e in ends {
            if e != s {
                pairs.insert((s, e));
                pairs.insert((e, s));
            }
        }
    }
    pairs
}

fn adjacency_pairs(g: &MetaPathGraph) -> BTreeSet<(usize, usize)> {
    g.adjacency.iter().collect()
}

/// Number of (seed, path) combinations whose subgraph, degrees or
/// positive matrix disagree with brute-force enumeration.
pub fn metapath_mismatches(seeds: std::ops::Range<u64>) -> usize {
    let mut bad = 0;
    for seed in seeds {
        let r = random_hin(seed);
        let schema = r.hin.schema();
        let (ab, bc) = (&r.ab[..], &r.bc[..]);
        let cases: Vec<(&str, &str, usize, Vec<(&[(usize, usize)], bool)>)> = vec![
            ("ABA", "ab, ~ab", r.counts[0], vec![(ab, false), (ab, true)]),
            ("BAB", "~ab, ab", r.counts[1], vec![(ab, true), (ab, false)]),
            ("BCB", "bc, ~bc", r.counts[1], vec![(bc, false), (bc, true)]),
            (
                "ABCBA",
                "ab, bc, ~bc, ~ab",
                r.counts[0],
                vec![(ab, false), (bc, false), (bc, true), (ab, true)],
            ),
        ];
        let mut graphs = Vec::new();
        for (name, spec, n, steps) in &cases {
            let path = MetaPath::parse(schema, *name, spec).unwrap();
            let g = metapath_subgraph(&r.hin, &path).unwrap();
            let expected = enumerate_paths(*n, steps);
            let degrees: Vec<usize> = (0..*n).map(|a| expected.iter().filter(|p| p.0 == a).count()).collect();
            if adjacency_pairs(&g) != expected || g.degrees != degrees || g.num_nodes() != *n {
                bad += 1;
            }
            graphs.push(g);
        }
        // Pos over the two user-side paths versus an elementwise AND loop.
        let pos = positive_matrix(&[graphs[0].clone(), graphs[3].clone()]).unwrap();
        let n = r.counts[0];
        for a in 0..n {
            for b in 0..n {
                let want = a == b || (graphs[0].adjacency.contains(a, b) && graphs[3].adjacency.contains(a, b));
                if pos.matrix.contains(a, b) != want {
                    bad += 1;
                }
            }
        }
    }
    bad
}

// ----- loss and metric oracles ----------------------------------------------

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Scalar double loop for the cross-view loss.
pub fn contrastive_oracle(z1: &Tensor, z2: &Tensor, pos: &Tensor, tau: f64, lambda1: f64) -> f64 {
    let n = z1.rows();
    let c: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| cosine(z1.row(a), z2.row(b))).collect()).collect();
    let mut total = 0.0;
    for a in 0..n {
        let z1sum: f64 = (0..n).map(|b| (c[a][b] / tau).exp()).sum();
        let z2sum: f64 = (0..n).map(|b| (c[b][a] / tau).exp()).sum();
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for b in 0..n {
            s1 += pos.get(a, b) * (c[a][b] / tau).exp() / z1sum;
            s2 += pos.get(a, b) * (c[b][a] / tau).exp() / z2sum;
        }
        total += lambda1 * (s1 + 1e-10).ln() + (1.0 - lambda1) * (s2 + 1e-10).ln();
    }
    -total / n as f64
}

pub fn random_positives(n: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Tensor::identity(n);
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(0.4) {
                p.set(a, b, 1.0);
                p.set(b, a, 1.0);
            }
        }
    }
    p
}

/// Worst absolute gap between the taped cross-view loss and the oracle.
pub fn contrastive_error() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let z1 = rand_tensor(5, 4, seed);
        let z2 = rand_tensor(5, 4, seed + 100);
        let pos = random_positives(5, seed);
        let (tau, lambda1) = (0.5 + 0.05 * (seed % 9) as f64, (seed % 5) as f64 / 4.0);
        let mut tape = Tape::new();
        let (a, b, p) = (tape.param(z1.clone()), tape.param(z2.clone()), tape.constant(pos.clone()));
        let pair = similarity_pair(&mut tape, a, b, tau, false).unwrap();
        let l = contrastive_loss(&mut tape, pair, p, lambda1).unwrap();
        worst = worst.max((tape.value(l).item() - contrastive_oracle(&z1, &z2, &pos, tau, lambda1)).abs());
    }
    worst
}

pub fn bpr_oracle(users: &Tensor, items: &Tensor, triples: &[Triple], lambda2: f64) -> f64 {
    let mut total = 0.0;
    for &(u, i, j) in triples {
        let mut x = 0.0;
        for k in 0..users.cols() {
            x += users.get(u, k) * items.get(i, k) - users.get(u, k) * items.get(j, k);
        }
        total -= (1.0 / (1.0 + (-x).exp())).ln();
    }
    let sq = |t: &Tensor| t.data().iter().map(|v| v * v).sum::<f64>();
    total + lambda2 * (sq(users) + sq(items))
}

pub fn bpr_error() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let users = rand_tensor(4, 3, seed);
        let items = rand_tensor(6, 3, seed + 50);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triples: Vec<Triple> = (0..10)
            .map(|_| (rng.gen_range(0..4), rng.gen_range(0..6), rng.gen_range(0..6)))
            .collect();
        let lambda2 = 0.01 * seed as f64;
        let mut tape = Tape::new();
        let (u, i) = (tape.param(users.clone()), tape.param(items.clone()));
        let l = bpr_loss(&mut tape, u, i, &triples, lambda2, &[u, i]).unwrap();
        worst = worst.max((tape.value(l).item() - bpr_oracle(&users, &items, &triples, lambda2)).abs());
    }
    worst
}

/// Full sort of every non-excluded item, score descending then id
/// ascending, then literal Recall and NDCG definitions.
pub fn ranking_oracle(scores: &Tensor, split: &InteractionSplit, k: usize) -> (f64, f64) {
    let mut recalls = Vec::new();
    let mut ndcgs = Vec::new();
    for u in 0..split.num_users() {
        let relevant = split.test_items(u);
        if relevant.is_empty() {
            continue;
        }
        let mut candidates: Vec<usize> = (0..split.num_items())
            .filter(|i| !split.train_items(u).contains(i) && !split.val_items(u).contains(i))
            .collect();
        candidates.sort_by(|&a, &b| scores.get(u, b).partial_cmp(&scores.get(u, a)).unwrap().then(a.cmp(&b)));
        let top = &candidates[..k.min(candidates.len())];
        let hits = top.iter().filter(|i| relevant.contains(i)).count();
        recalls.push(hits as f64 / relevant.len() as f64);
        let dcg: f64 = top
            .iter()
            .enumerate()
            .filter(|(_, i)| relevant.contains(i))
            .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
            .sum();
        let idcg: f64 = (0..relevant.len().min(k)).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
        ndcgs.push(dcg / idcg);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&recalls), mean(&ndcgs))
}

pub fn random_split(users: usize, items: usize, seed: u64) -> InteractionSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for u in 0..users {
        for i in 0..items {
            match rng.gen_range(0..10) {
                0..=2 => train.push((u, i)),
                3 => val.push((u, i)),
                4 | 5 => test.push((u, i)),
                _ => {}
            }
        }
    }
    InteractionSplit::from_parts(users, items, train, val, test)
}

pub fn ranking_error() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..30 {
        let split = random_split(5, 8, seed);
        // Coarse scores force ties, which must break by item id.
        let scores = rand_tensor(5, 8, seed + 7).map(|x| (x * 3.0).round());
        for k in [1, 3, 5, 8] {
            let got = topk_rank(&scores, &split, &[k]).unwrap();
            let (r, n) = ranking_oracle(&scores, &split, k);
            worst = worst.max((got.recall[0] - r).abs()).max((got.ndcg[0] - n).abs());
        }
    }
    worst
}

// ----- training ----------------------------------------------------------------

/// Epoch at which full MCL first ranks every training item of the
/// 20x20 dense toy inside its user's top 5.
pub fn overfit_epochs(max_epochs: usize) -> Option<usize> {
    let ds = synthetic::dense_toy(20, 20, 5);
    let split = InteractionSplit::from_parts(ds.num_users(), ds.num_items(), ds.interactions(), vec![], vec![]);
    let cfg = TrainConfig {
        dim: 32,
        batch_size: 100,
        epochs: max_epochs,
        lr: 0.01,
        ..TrainConfig::default()
    };
    let paths = ds.run_metapaths(false).unwrap();
    let ctx = GraphContext::build(&ds, &paths, false).unwrap();
    let mut t = Trainer::new(cfg, ctx, split).unwrap();
    for epoch in 1..=max_epochs {
        t.train_epoch().unwrap();
        let scores = t.model().score_matrix(t.context(), t.config()).unwrap();
        if train_rank(&scores, t.split(), &[5]).unwrap().recall[0] == 1.0 {
            return Some(epoch);
        }
    }
    None
}

pub fn fixture_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.train.dim = 16;
    cfg.train.epochs = 6;
    cfg.train.batch_size = 256;
    cfg.train.seed = 3;
    cfg
}

/// Trains the same config twice into separate directories and compares
/// the bytes of `metrics.csv` (and the checkpoint).
pub fn determinism(ds: &Dataset) -> (bool, bool) {
    let cfg = fixture_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    mcl_core::experiment::run(ds, &cfg, Some(a.path()), Some("run")).unwrap();
    mcl_core::experiment::run(ds, &cfg, Some(b.path()), Some("run")).unwrap();
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join("run").join(f)).unwrap();
    (
        read(&a, "metrics.csv") == read(&b, "metrics.csv"),
        read(&a, "checkpoint.bin") == read(&b, "checkpoint.bin"),
    )
}

pub mod movielens;
