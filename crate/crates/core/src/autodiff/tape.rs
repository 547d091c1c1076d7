//! Reverse-mode differentiation tape over dense 2-D tensors.
//!
//! Every forward op appends one node holding its output value. Nodes are
//! recorded in topological order, so `backward` walks the node list in
//! reverse and visits each node once.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::scalar::Scalar;
use crate::sparse::{SegmentIndex, SparseOperator};

use super::tensor::Tensor;
use super::TensorError;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

/// How the right operand of a binary elementwise op is broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// `rows x 1`, repeated along columns.
    Column,
    /// `1 x cols`, repeated along rows.
    Row,
    Scalar,
}

impl Broadcast {
    fn resolve(
        op: &'static str,
        a: (usize, usize),
        b: (usize, usize),
    ) -> Result<Self, TensorError> {
        match b {
            _ if b == a => Ok(Self::Same),
            (1, 1) => Ok(Self::Scalar),
            (r, 1) if r == a.0 => Ok(Self::Column),
            (1, c) if c == a.1 => Ok(Self::Row),
            _ => Err(TensorError::ShapeMismatch {
                op,
                left: a,
                right: b,
            }),
        }
    }

    #[inline]
    fn index(self, r: usize, c: usize, cols: usize) -> usize {
        match self {
            Self::Same => r * cols + c,
            Self::Column => r,
            Self::Row => c,
            Self::Scalar => 0,
        }
    }

    /// Sums a full-shape gradient down to the broadcast operand's shape.
    fn reduce<T: Scalar>(self, g: &Tensor<T>) -> Tensor<T> {
        let (rows, cols) = g.shape();
        match self {
            Self::Same => g.clone(),
            Self::Scalar => Tensor::scalar(g.sum()),
            Self::Column => Tensor::from_fn(rows, 1, |r, _| g.row(r).iter().copied().sum()),
            Self::Row => {
                let mut out = Tensor::zeros(1, cols);
                for r in 0..rows {
                    for (o, &x) in out.data_mut().iter_mut().zip(g.row(r)) {
                        *o = *o + x;
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Elementwise {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Binary(Elementwise, usize, usize, Broadcast),
    Scale(usize, T),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    GatherRows(usize, Arc<[usize]>),
    GatherElements(usize, Arc<[usize]>),
    RowSoftmax(usize),
    SegmentSoftmax(usize, Arc<SegmentIndex>),
    SegmentWeightedSum(usize, usize, Arc<SegmentIndex>),
    SparseMatMul(Arc<SparseOperator<T>>, usize),
    Elu(usize),
    Tanh(usize),
    LeakyRelu(usize, T),
    Sigmoid(usize),
    LogSigmoid(usize),
    Exp(usize),
    Log(usize, T),
    RowSum(usize),
    RowMean(usize),
    Sum(usize),
    Mean(usize),
    RowL2Normalize(usize),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to `var`; zeros when `var` did not reach the loss.
    pub fn wrt(&self, var: Var) -> Tensor<T> {
        assert_eq!(var.tape, self.tape, "variable from a different tape");
        match &self.grads[var.index] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.index];
                Tensor::zeros(r, c)
            }
        }
    }

    /// Consumes the gradient of `var`.
    pub fn take(&mut self, var: Var) -> Tensor<T> {
        assert_eq!(var.tape, self.tape, "variable from a different tape");
        let (r, c) = self.shapes[var.index];
        self.grads[var.index]
            .take()
            .unwrap_or_else(|| Tensor::zeros(r, c))
    }
}

/// Single-threaded recording of forward ops.
#[derive(Debug)]
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    /// Records a constant leaf; gradients do not flow into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        assert_eq!(var.tape, self.id, "variable from a different tape");
        &self.nodes[var.index].value
    }

    pub fn shape(&self, var: Var) -> (usize, usize) {
        self.value(var).shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.index].requires_grad
    }

    fn check(&self, var: Var) -> Result<usize, TensorError> {
        if var.tape != self.id || var.index >= self.nodes.len() {
            return Err(TensorError::DetachedVar);
        }
        Ok(var.index)
    }

    fn push(
        &mut self,
        name: &'static str,
        value: Tensor<T>,
        op: Op<T>,
        inputs: &[usize],
    ) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        })
    }

    fn unary(
        &mut self,
        name: &'static str,
        a: Var,
        f: impl Fn(T) -> T,
        op: impl FnOnce(usize) -> Op<T>,
    ) -> Result<Var, TensorError> {
        let ia = self.check(a)?;
        let value = self.nodes[ia].value.map(f);
        self.push(name, value, op(ia), &[ia])
    }

    // ----- linear algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let value = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        self.push("matmul", value, Op::MatMul(ia, ib), &[ia, ib])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let ia = self.check(a)?;
        let value = self.nodes[ia].value.transpose();
        self.push("transpose", value, Op::Transpose(ia), &[ia])
    }

    /// Sparse constant operator applied on the left: `S · a`.
    pub fn sparse_matmul(
        &mut self,
        operator: &Arc<SparseOperator<T>>,
        a: Var,
    ) -> Result<Var, TensorError> {
        let ia = self.check(a)?;
        let value = operator.apply(&self.nodes[ia].value)?;
        self.push(
            "sparse_matmul",
            value,
            Op::SparseMatMul(Arc::clone(operator), ia),
            &[ia],
        )
    }

    // ----- elementwise ----------------------------------------------------

    fn binary(
        &mut self,
        name: &'static str,
        kind: Elementwise,
        a: Var,
        b: Var,
    ) -> Result<Var, TensorError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (av, bv) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let bc = Broadcast::resolve(name, av.shape(), bv.shape())?;
        let (rows, cols) = av.shape();
        let bd = bv.data();
        let value = Tensor::from_fn(rows, cols, |r, c| {
            let x = av.get(r, c);
            let y = bd[bc.index(r, c, cols)];
            match kind {
                Elementwise::Add => x + y,
                Elementwise::Sub => x - y,
                Elementwise::Mul => x * y,
            }
        });
        self.push(name, value, Op::Binary(kind, ia, ib, bc), &[ia, ib])
    }

    /// `a + b`; `b` may be `rows x 1`, `1 x cols` or `1 x 1`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("add", Elementwise::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("sub", Elementwise::Sub, a, b)
    }

    /// Elementwise product with the same broadcasting rules as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("mul", Elementwise::Mul, a, b)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var, TensorError> {
        self.unary("scale", a, |x| x * s, |ia| Op::Scale(ia, s))
    }

    // ----- shape ----------------------------------------------------------

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let idx = parts
            .iter()
            .map(|&v| self.check(v))
            .collect::<Result<Vec<_>, _>>()?;
        let Some(&first) = idx.first() else {
            return Err(TensorError::EmptyInput { op: "concat_cols" });
        };
        let rows = self.nodes[first].value.rows();
        for &i in &idx {
            let s = self.nodes[i].value.shape();
            if s.0 != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.nodes[first].value.shape(),
                    right: s,
                });
            }
        }
        let cols: usize = idx.iter().map(|&i| self.nodes[i].value.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &i in &idx {
                data.extend_from_slice(self.nodes[i].value.row(r));
            }
        }
        let value = Tensor::from_vec(rows, cols, data)?;
        self.push("concat_cols", value, Op::ConcatCols(idx.clone()), &idx)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let idx = parts
            .iter()
            .map(|&v| self.check(v))
            .collect::<Result<Vec<_>, _>>()?;
        let Some(&first) = idx.first() else {
            return Err(TensorError::EmptyInput { op: "concat_rows" });
        };
        let cols = self.nodes[first].value.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &i in &idx {
            let v = &self.nodes[i].value;
            if v.cols() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    left: self.nodes[first].value.shape(),
                    right: v.shape(),
                });
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let value = Tensor::from_vec(rows, cols, data)?;
        self.push("concat_rows", value, Op::ConcatRows(idx.clone()), &idx)
    }

    /// Selects rows `indices[k]` of `a` into row `k` of the output.
    pub fn gather_rows(&mut self, a: Var, indices: Arc<[usize]>) -> Result<Var, TensorError> {
        let ia = self.check(a)?;
        let av = &self.nodes[ia].value;
        if let Some(&bad) = indices.iter().find(|&&i| i >= av.rows()) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                bound: av.rows(),
            });
        }
        let cols = av.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices.iter() {
            data.extend_from_slice(av.row(i));
        }
        let value = Tensor::from_vec(indices.len(), cols, data)?;
        self.push("gather_rows", value, Op::GatherRows(ia, indices), &[ia])
    }

    /// Picks entries by flat row-major position into a column vector.
    pub fn gather_elements(
        &mut self,
        a: Var,
        flat_positions: Arc<[usize]>,
    ) -> Result<Var, TensorError> {
        let ia = self.check(a)?;
        let av = &self.nodes[ia].value;
        if let Some(&bad) = flat_positions.iter().find(|&&i| i >= av.len()) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather_elements",
                index: bad,
                bound: av.len(),
            });
        }
        let data = flat_positions.iter().map(|&i| av.data()[i]).collect();
        let value = Tensor::from_vec(flat_positions.len(), 1, data)?;
        self.push(
            "gather_elements",
            value,
            Op::GatherElements(ia, flat_positions),
            &[ia],
        )
    }

    // ----- normalizations -------------------------------------------------

    /// Softmax along each row with max subtraction.
    ///
    /// Entries where `mask` is zero are forced to exactly zero and excluded
    /// from the normalizer; a fully masked row is all zeros.
    pub fn row_softmax(&mut self, a: Var, mask: Option<&Tensor<T>>) -> Result<Var, TensorError> {
        let ia = self.check(a)?;
        let av = &self.nodes[ia].value;
        if let Some(m) = mask {
            if m.shape() != av.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "row_softmax",
                    left: av.shape(),
                    right: m.shape(),
                });
            }
        }
        let (rows, cols) = av.shape();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let keep = |c: usize| mask.is_none_or(|m| m.get(r, c) != T::zero());
            softmax_into(
                av.row(r),
                out.row_mut(r),
                &keep,
            );
        }
        self.push("row_softmax", out, Op::RowSoftmax(ia), &[ia])
    }

    /// Softmax of a column of edge scores within each target segment.
    pub fn segment_softmax(
        &mut self,
        scores: Var,
        segments: &Arc<SegmentIndex>,
    ) -> Result<Var, TensorError> {
        let ia = self.check(scores)?;
        let sv = &self.nodes[ia].value;
        if sv.shape() != (segments.num_edges(), 1) {
            return Err(TensorError::ShapeMismatch {
                op: "segment_softmax",
                left: sv.shape(),
                right: (segments.num_edges(), 1),
            });
        }
        let mut out = Tensor::zeros(sv.rows(), 1);
        for t in 0..segments.num_targets() {
            let range = segments.range(t);
            softmax_into(
                &sv.data()[range.clone()],
                &mut out.data_mut()[range],
                |_| true,
            );
        }
        self.push(
            "segment_softmax",
            out,
            Op::SegmentSoftmax(ia, Arc::clone(segments)),
            &[ia],
        )
    }

    /// `out[t] = Σ_{k ∈ seg(t)} weights[k] · values[source(k)]`.
    pub fn segment_weighted_sum(
        &mut self,
        weights: Var,
        values: Var,
        segments: &Arc<SegmentIndex>,
    ) -> Result<Var, TensorError> {
        let (iw, iv) = (self.check(weights)?, self.check(values)?);
        let (wv, vv) = (&self.nodes[iw].value, &self.nodes[iv].value);
        if wv.shape() != (segments.num_edges(), 1) {
            return Err(TensorError::ShapeMismatch {
                op: "segment_weighted_sum",
                left: wv.shape(),
                right: (segments.num_edges(), 1),
            });
        }
        if vv.rows() != segments.num_sources() {
            return Err(TensorError::ShapeMismatch {
                op: "segment_weighted_sum",
                left: vv.shape(),
                right: (segments.num_sources(), vv.cols()),
            });
        }
        let d = vv.cols();
        let mut out = Tensor::zeros(segments.num_targets(), d);
        for t in 0..segments.num_targets() {
            let row = out.row_mut(t);
            for k in segments.range(t) {
                let w = wv.data()[k];
                for (o, &x) in row.iter_mut().zip(vv.row(segments.source(k))) {
                    *o = *o + w * x;
                }
            }
        }
        self.push(
            "segment_weighted_sum",
            out,
            Op::SegmentWeightedSum(iw, iv, Arc::clone(segments)),
            &[iw, iv],
        )
    }

    /// Scales each row to unit Euclidean norm; zero rows stay zero.
    pub fn row_l2_normalize(&mut self, a: Var) -> Result<Var, TensorError> {
        let ia = self.check(a)?;
        let av = &self.nodes[ia].value;
        let mut out = av.clone();
        for r in 0..av.rows() {
            let norm = row_norm(av.row(r));
            if norm > T::zero() {
                for x in out.row_mut(r) {
                    *x = *x / norm;
                }
            }
        }
        self.push("row_l2_normalize", out, Op::RowL2Normalize(ia), &[ia])
    }

    /// Pairwise cosine similarities between the rows of `a` and `b`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let na = self.row_l2_normalize(a)?;
        let nb = self.row_l2_normalize(b)?;
        let nbt = self.transpose(nb)?;
        self.matmul(na, nbt)
    }

    // ----- pointwise nonlinearities --------------------------------------

    /// ELU with unit scale.
    pub fn elu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary("elu", a, elu, Op::Elu)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary("tanh", a, T::tanh, Op::Tanh)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Result<Var, TensorError> {
        self.unary(
            "leaky_relu",
            a,
            |x| if x > T::zero() { x } else { slope * x },
            |ia| Op::LeakyRelu(ia, slope),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid)
    }

    /// Numerically stable `ln σ(x)`.
    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary("log_sigmoid", a, log_sigmoid, Op::LogSigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary("exp", a, T::exp, Op::Exp)
    }

    /// `ln(x + eps)`.
    pub fn log(&mut self, a: Var, eps: T) -> Result<Var, TensorError> {
        self.unary("log", a, |x| (x + eps).ln(), |ia| Op::Log(ia, eps))
    }

    // ----- reductions -----------------------------------------------------

    pub fn row_sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let ia = self.check(a)?;
        let av = &self.nodes[ia].value;
        let value = Tensor::from_fn(av.rows(), 1, |r, _| av.row(r).iter().copied().sum());
        self.push("row_sum", value, Op::RowSum(ia), &[ia])
    }

    pub fn row_mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let ia = self.check(a)?;
        let av = &self.nodes[ia].value;
        if av.cols() == 0 {
            return Err(TensorError::EmptyInput { op: "row_mean" });
        }
        let n = T::of(av.cols() as f64);
        let value =
            Tensor::from_fn(av.rows(), 1, |r, _| av.row(r).iter().copied().sum::<T>() / n);
        self.push("row_mean", value, Op::RowMean(ia), &[ia])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let ia = self.check(a)?;
        let value = Tensor::scalar(self.nodes[ia].value.sum());
        self.push("sum", value, Op::Sum(ia), &[ia])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let ia = self.check(a)?;
        let av = &self.nodes[ia].value;
        if av.is_empty() {
            return Err(TensorError::EmptyInput { op: "mean" });
        }
        let value = Tensor::scalar(av.sum() / T::of(av.len() as f64));
        self.push("mean", value, Op::Mean(ia), &[ia])
    }

    // ----- backward -------------------------------------------------------

    /// Backpropagates from a scalar `loss`.
    ///
    /// Every leaf recorded with [`Tape::param`] receives a gradient; leaves
    /// that did not contribute get zeros from [`Gradients::wrt`].
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        if loss.tape != self.id || loss.index >= self.nodes.len() {
            return Err(TensorError::DetachedVar);
        }
        let lv = &self.nodes[loss.index].value;
        if lv.shape() != (1, 1) {
            return Err(TensorError::NotScalar { shape: lv.shape() });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.index] = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.index).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        Ok(Gradients {
            tape: self.id,
            grads: grads
                .into_iter()
                .zip(&self.nodes)
                .map(|(g, n)| if matches!(n.op, Op::Leaf) { g } else { None })
                .collect(),
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let mut acc = |target: usize, delta: Tensor<T>| {
            if !self.nodes[target].requires_grad {
                return;
            }
            match &mut grads[target] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |k: usize| &self.nodes[k].value;
        let needs = |k: usize| self.nodes[k].requires_grad;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(*a) {
                    acc(*a, g.matmul_transposed(val(*b)).expect("matmul grad shape"));
                }
                if needs(*b) {
                    acc(*b, val(*a).transposed_matmul(g).expect("matmul grad shape"));
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::SparseMatMul(s, a) => {
                acc(*a, s.apply_transposed(g).expect("sparse grad shape"));
            }
            Op::Binary(kind, a, b, bc) => {
                let (a, b, bc) = (*a, *b, *bc);
                let cols = g.cols();
                match kind {
                    Elementwise::Add => {
                        acc(a, g.clone());
                        if needs(b) {
                            acc(b, bc.reduce(g));
                        }
                    }
                    Elementwise::Sub => {
                        acc(a, g.clone());
                        if needs(b) {
                            acc(b, bc.reduce(&g.scale(-T::one())));
                        }
                    }
                    Elementwise::Mul => {
                        let (av, bv) = (val(a), val(b));
                        if needs(a) {
                            let bd = bv.data();
                            acc(
                                a,
                                Tensor::from_fn(g.rows(), cols, |r, c| {
                                    g.get(r, c) * bd[bc.index(r, c, cols)]
                                }),
                            );
                        }
                        if needs(b) {
                            acc(b, bc.reduce(&g.zip_map(av, |x, y| x * y)));
                        }
                    }
                }
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s)),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if needs(p) {
                        acc(p, Tensor::from_fn(g.rows(), w, |r, c| g.get(r, offset + c)));
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let h = val(p).rows();
                    if needs(p) {
                        let cols = g.cols();
                        let slice = g.data()[offset * cols..(offset + h) * cols].to_vec();
                        acc(p, Tensor::from_vec(h, cols, slice).expect("concat_rows grad"));
                    }
                    offset += h;
                }
            }
            Op::GatherRows(a, indices) => {
                let mut out = Tensor::zeros(val(*a).rows(), g.cols());
                for (k, &src) in indices.iter().enumerate() {
                    for (o, &x) in out.row_mut(src).iter_mut().zip(g.row(k)) {
                        *o = *o + x;
                    }
                }
                acc(*a, out);
            }
            Op::GatherElements(a, positions) => {
                let (rows, cols) = val(*a).shape();
                let mut out = Tensor::zeros(rows, cols);
                for (k, &p) in positions.iter().enumerate() {
                    out.data_mut()[p] = out.data()[p] + g.data()[k];
                }
                acc(*a, out);
            }
            Op::RowSoftmax(a) => {
                let mut out = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    softmax_backward(y.row(r), g.row(r), out.row_mut(r));
                }
                acc(*a, out);
            }
            Op::SegmentSoftmax(a, seg) => {
                let mut out = Tensor::zeros(y.rows(), 1);
                for t in 0..seg.num_targets() {
                    let range = seg.range(t);
                    softmax_backward(
                        &y.data()[range.clone()],
                        &g.data()[range.clone()],
                        &mut out.data_mut()[range],
                    );
                }
                acc(*a, out);
            }
            Op::SegmentWeightedSum(w, v, seg) => {
                let (wv, vv) = (val(*w), val(*v));
                if needs(*w) {
                    let mut gw = Tensor::zeros(seg.num_edges(), 1);
                    for t in 0..seg.num_targets() {
                        let gt = g.row(t);
                        for k in seg.range(t) {
                            let dot: T = gt
                                .iter()
                                .zip(vv.row(seg.source(k)))
                                .map(|(&a, &b)| a * b)
                                .sum();
                            gw.data_mut()[k] = dot;
                        }
                    }
                    acc(*w, gw);
                }
                if needs(*v) {
                    let mut gv = Tensor::zeros(vv.rows(), vv.cols());
                    for t in 0..seg.num_targets() {
                        for k in seg.range(t) {
                            let wk = wv.data()[k];
                            let gt = g.row(t);
                            for (o, &x) in gv.row_mut(seg.source(k)).iter_mut().zip(gt) {
                                *o = *o + wk * x;
                            }
                        }
                    }
                    acc(*v, gv);
                }
            }
            Op::Elu(a) => {
                let x = val(*a);
                acc(
                    *a,
                    Tensor::from_fn(g.rows(), g.cols(), |r, c| {
                        let d = if x.get(r, c) > T::zero() {
                            T::one()
                        } else {
                            y.get(r, c) + T::one()
                        };
                        g.get(r, c) * d
                    }),
                );
            }
            Op::Tanh(a) => acc(*a, g.zip_map(y, |gi, yi| gi * (T::one() - yi * yi))),
            Op::LeakyRelu(a, slope) => {
                let x = val(*a);
                acc(
                    *a,
                    g.zip_map(x, |gi, xi| if xi > T::zero() { gi } else { gi * *slope }),
                );
            }
            Op::Sigmoid(a) => acc(*a, g.zip_map(y, |gi, yi| gi * yi * (T::one() - yi))),
            Op::LogSigmoid(a) => {
                let x = val(*a);
                acc(*a, g.zip_map(x, |gi, xi| gi * sigmoid(-xi)));
            }
            Op::Exp(a) => acc(*a, g.zip_map(y, |gi, yi| gi * yi)),
            Op::Log(a, eps) => {
                let x = val(*a);
                acc(*a, g.zip_map(x, |gi, xi| gi / (xi + *eps)));
            }
            Op::RowSum(a) => {
                let (rows, cols) = val(*a).shape();
                acc(*a, Tensor::from_fn(rows, cols, |r, _| g.get(r, 0)));
            }
            Op::RowMean(a) => {
                let (rows, cols) = val(*a).shape();
                let n = T::of(cols as f64);
                acc(*a, Tensor::from_fn(rows, cols, |r, _| g.get(r, 0) / n));
            }
            Op::Sum(a) => {
                let (rows, cols) = val(*a).shape();
                acc(*a, Tensor::full(rows, cols, g.item()));
            }
            Op::Mean(a) => {
                let (rows, cols) = val(*a).shape();
                let n = T::of((rows * cols) as f64);
                acc(*a, Tensor::full(rows, cols, g.item() / n));
            }
            Op::RowL2Normalize(a) => {
                let x = val(*a);
                let mut out = Tensor::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let norm = row_norm(x.row(r));
                    if norm == T::zero() {
                        continue;
                    }
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for ((o, &yi), &gi) in out.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = (gi - yi * dot) / norm;
                    }
                }
                acc(*a, out);
            }
        }
    }
}

fn softmax_into<T: Scalar>(input: &[T], out: &mut [T], keep: impl Fn(usize) -> bool) {
    let max = input
        .iter()
        .enumerate()
        .filter(|(c, _)| keep(*c))
        .map(|(_, &x)| x)
        .fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        out.iter_mut().for_each(|o| *o = T::zero());
        return;
    }
    let mut total = T::zero();
    for (c, (o, &x)) in out.iter_mut().zip(input).enumerate() {
        *o = if keep(c) { (x - max).exp() } else { T::zero() };
        total = total + *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

/// `dx = y ⊙ (g − ⟨g, y⟩)`; masked entries have `y = 0` and get zero.
fn softmax_backward<T: Scalar>(y: &[T], g: &[T], out: &mut [T]) {
    let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
    for ((o, &yi), &gi) in out.iter_mut().zip(y).zip(g) {
        *o = yi * (gi - dot);
    }
}

fn row_norm<T: Scalar>(row: &[T]) -> T {
    row.iter().map(|&x| x * x).sum::<T>().sqrt()
}

pub(crate) fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn log_sigmoid<T: Scalar>(x: T) -> T {
    // ln σ(x) = −softplus(−x)
    if x >= T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}
