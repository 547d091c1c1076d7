//! Compressed-row sparse structures.
//!
//! `CsrMatrix` is a binary pattern with sorted column indices, used for
//! graph adjacency. `SparseOperator` carries values and is applied to dense
//! tensors on the tape. `SegmentIndex` groups edge lists by target node for
//! attention over neighborhoods.

use std::ops::Range;

use crate::autodiff::{Tensor, TensorError};
use crate::scalar::Scalar;

/// Binary sparse matrix in compressed-row form. Column indices within a row
/// are strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl CsrMatrix {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
        }
    }

    /// Builds from `(row, col)` pairs; duplicates collapse. Panics when a
    /// pair falls outside the shape.
    pub fn from_pairs(rows: usize, cols: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); rows];
        for (r, c) in pairs {
            assert!(r < rows && c < cols, "pair ({r}, {c}) outside {rows}x{cols}");
            lists[r].push(c);
        }
        Self::from_row_lists(cols, lists)
    }

    fn from_row_lists(cols: usize, lists: Vec<Vec<usize>>) -> Self {
        let rows = lists.len();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for mut list in lists {
            list.sort_unstable();
            list.dedup();
            indices.extend(list);
            indptr.push(indices.len());
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.indices[self.indptr[r]..self.indptr[r + 1]]
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row(r).binary_search(&c).is_ok()
    }

    pub fn row_counts(&self) -> Vec<usize> {
        self.indptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).iter().map(move |&c| (r, c)))
    }

    pub fn transpose(&self) -> Self {
        let mut lists = vec![Vec::new(); self.cols];
        for (r, c) in self.iter() {
            lists[c].push(r);
        }
        Self::from_row_lists(self.rows, lists)
    }

    /// Boolean product: entry is set when at least one intermediate index
    /// links row and column.
    pub fn bool_product(&self, rhs: &CsrMatrix) -> Result<Self, (usize, usize)> {
        if self.cols != rhs.rows {
            return Err((self.cols, rhs.rows));
        }
        let mut marker = vec![usize::MAX; rhs.cols];
        let mut lists = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let mut list = Vec::new();
            for &k in self.row(r) {
                for &c in rhs.row(k) {
                    if marker[c] != r {
                        marker[c] = r;
                        list.push(c);
                    }
                }
            }
            lists.push(list);
        }
        Ok(Self::from_row_lists(rhs.cols, lists))
    }

    /// Union with the transpose. Square matrices only.
    pub fn symmetrize(&self) -> Self {
        debug_assert_eq!(self.rows, self.cols);
        let t = self.transpose();
        let lists = (0..self.rows)
            .map(|r| {
                let mut l = self.row(r).to_vec();
                l.extend_from_slice(t.row(r));
                l
            })
            .collect();
        Self::from_row_lists(self.cols, lists)
    }

    pub fn without_diagonal(&self) -> Self {
        let lists = (0..self.rows)
            .map(|r| self.row(r).iter().copied().filter(|&c| c != r).collect())
            .collect();
        Self::from_row_lists(self.cols, lists)
    }

    /// Entrywise AND of equally shaped patterns.
    pub fn intersect(&self, other: &CsrMatrix) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let lists = (0..self.rows)
            .map(|r| {
                let (a, b) = (self.row(r), other.row(r));
                let (mut i, mut j) = (0, 0);
                let mut out = Vec::new();
                while i < a.len() && j < b.len() {
                    match a[i].cmp(&b[j]) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            out.push(a[i]);
                            i += 1;
                            j += 1;
                        }
                    }
                }
                out
            })
            .collect();
        Self::from_row_lists(self.cols, lists)
    }

    pub fn with_diagonal(&self) -> Self {
        debug_assert_eq!(self.rows, self.cols);
        let lists = (0..self.rows)
            .map(|r| {
                let mut l = self.row(r).to_vec();
                l.push(r);
                l
            })
            .collect();
        Self::from_row_lists(self.cols, lists)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.iter().all(|(r, c)| self.contains(c, r))
    }

    pub fn to_dense<T: Scalar>(&self) -> Tensor<T> {
        let mut t = Tensor::zeros(self.rows, self.cols);
        for (r, c) in self.iter() {
            t.set(r, c, T::one());
        }
        t
    }
}

/// Weighted sparse matrix with a cached transpose, applied as a constant
/// left operand on the tape.
#[derive(Debug, Clone)]
pub struct SparseOperator<T> {
    rows: usize,
    cols: usize,
    forward: Vec<Vec<(usize, T)>>,
    backward: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SparseOperator<T> {
    pub fn from_triplets(rows: usize, cols: usize, triplets: impl IntoIterator<Item = (usize, usize, T)>) -> Self {
        let mut forward = vec![Vec::new(); rows];
        let mut backward = vec![Vec::new(); cols];
        for (r, c, v) in triplets {
            forward[r].push((c, v));
            backward[c].push((r, v));
        }
        for row in forward.iter_mut().chain(backward.iter_mut()) {
            row.sort_by_key(|&(c, _)| c);
        }
        Self {
            rows,
            cols,
            forward,
            backward,
        }
    }

    /// Symmetric degree normalization `D^{-1/2} A D^{-1/2}` of a binary
    /// adjacency. Zero-degree nodes keep a unit self-weight so their rows
    /// pass through unchanged.
    pub fn normalized_adjacency(adjacency: &CsrMatrix) -> Self {
        let degrees = adjacency.row_counts();
        let inv_sqrt: Vec<T> = degrees
            .iter()
            .map(|&d| if d == 0 { T::one() } else { T::one() / T::of(d as f64).sqrt() })
            .collect();
        let mut triplets: Vec<(usize, usize, T)> = adjacency
            .iter()
            .map(|(r, c)| (r, c, inv_sqrt[r] * inv_sqrt[c]))
            .collect();
        triplets.extend(
            degrees
                .iter()
                .enumerate()
                .filter(|(_, &d)| d == 0)
                .map(|(r, _)| (r, r, T::one())),
        );
        Self::from_triplets(adjacency.rows(), adjacency.cols(), triplets)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        Self::apply_lists(&self.forward, self.cols, x, "sparse_matmul")
    }

    pub fn apply_transposed(&self, x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        Self::apply_lists(&self.backward, self.rows, x, "sparse_matmul_transposed")
    }

    fn apply_lists(
        lists: &[Vec<(usize, T)>],
        inner: usize,
        x: &Tensor<T>,
        op: &'static str,
    ) -> Result<Tensor<T>, TensorError> {
        if x.rows() != inner {
            return Err(TensorError::ShapeMismatch {
                op,
                left: (lists.len(), inner),
                right: x.shape(),
            });
        }
        let d = x.cols();
        let mut out = Tensor::zeros(lists.len(), d);
        for (r, entries) in lists.iter().enumerate() {
            let row = out.row_mut(r);
            for &(c, w) in entries {
                for (o, &v) in row.iter_mut().zip(x.row(c)) {
                    *o = *o + w * v;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Tensor<T> {
        let mut t = Tensor::zeros(self.rows, self.cols);
        for (r, entries) in self.forward.iter().enumerate() {
            for &(c, w) in entries {
                t.set(r, c, t.get(r, c) + w);
            }
        }
        t
    }
}

/// Edge list grouped by target: edges of target `t` occupy
/// `offsets[t]..offsets[t + 1]`, and `sources[k]` is the row read by edge `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentIndex {
    offsets: Vec<usize>,
    sources: Vec<usize>,
    targets: Vec<usize>,
    num_sources: usize,
}

impl SegmentIndex {
    /// `neighbors[t]` lists the source rows aggregated into target `t`.
    pub fn from_neighbor_lists(neighbors: &[Vec<usize>], num_sources: usize) -> Self {
        let mut offsets = Vec::with_capacity(neighbors.len() + 1);
        let mut sources = Vec::new();
        let mut targets = Vec::new();
        offsets.push(0);
        for (t, list) in neighbors.iter().enumerate() {
            for &s in list {
                assert!(s < num_sources, "source {s} outside {num_sources}");
                sources.push(s);
                targets.push(t);
            }
            offsets.push(sources.len());
        }
        Self {
            offsets,
            sources,
            targets,
            num_sources,
        }
    }

    /// Square index over a symmetric adjacency pattern.
    pub fn from_adjacency(adjacency: &CsrMatrix) -> Self {
        let lists: Vec<Vec<usize>> = (0..adjacency.rows())
            .map(|r| adjacency.row(r).to_vec())
            .collect();
        Self::from_neighbor_lists(&lists, adjacency.cols())
    }

    pub fn num_targets(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.sources.len()
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn range(&self, target: usize) -> Range<usize> {
        self.offsets[target]..self.offsets[target + 1]
    }

    pub fn source(&self, edge: usize) -> usize {
        self.sources[edge]
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    /// Target of every edge, aligned with [`SegmentIndex::sources`].
    pub fn targets(&self) -> &[usize] {
        &self.targets
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_matches_dense_boolean() {
        let a = CsrMatrix::from_pairs(3, 2, [(0, 0), (1, 0), (1, 1), (2, 1)]);
        let at = a.transpose();
        let p = a.bool_product(&at).unwrap();
        let expected = [
            (0, 0),
            (0, 1),
            (1, 0),
            (1, 1),
            (1, 2),
            (2, 1),
            (2, 2),
        ];
        assert_eq!(p.iter().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn intersection_and_diagonal() {
        let a = CsrMatrix::from_pairs(3, 3, [(0, 1), (1, 0), (1, 2), (2, 1)]);
        let b = CsrMatrix::from_pairs(3, 3, [(0, 1), (1, 0)]);
        let i = a.intersect(&b).with_diagonal();
        assert_eq!(
            i.iter().collect::<Vec<_>>(),
            vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)]
        );
    }

    #[test]
    fn normalized_adjacency_two_nodes_is_swap() {
        let a = CsrMatrix::from_pairs(2, 2, [(0, 1), (1, 0)]);
        let s = SparseOperator::<f64>::normalized_adjacency(&a);
        assert_eq!(s.to_dense().data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn isolated_node_gets_self_weight() {
        let a = CsrMatrix::from_pairs(3, 3, [(0, 1), (1, 0)]);
        let s = SparseOperator::<f64>::normalized_adjacency(&a);
        assert_eq!(s.to_dense().get(2, 2), 1.0);
    }
}
