use crate::doc_model::Edge;
use crate::error::{GlamError, Result};

use super::{Scalar, Tensor};

/// Symmetrically normalized adjacency `D^-1/2 A D^-1/2` in CSR form.
///
/// `A` is the 0/1 adjacency obtained by collapsing every edge kind and
/// direction into an undirected link. Isolated nodes have empty rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseAdjacency<T> {
    /// Builds the normalized adjacency for `n` nodes from undirected pairs.
    /// Self-pairs and duplicates are ignored.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, v) in pairs {
            if u >= n || v >= n {
                return Err(GlamError::Shape { op: "adjacency", left: (n, n), right: (u, v) });
            }
            if u == v {
                continue;
            }
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        let degree: Vec<f64> = neighbors.iter().map(|l| l.len() as f64).collect();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, list) in neighbors.iter().enumerate() {
            for &j in list {
                col_idx.push(j);
                values.push(T::of_f64(1.0 / (degree[i] * degree[j]).sqrt()));
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseAdjacency { n, row_ptr, col_idx, values })
    }

    pub fn from_edges(n: usize, edges: &[Edge]) -> Result<Self> {
        Self::from_pairs(n, edges.iter().map(|e| (e.src, e.dst)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(column, value)` over row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// Coordinate triples `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> Tensor<T> {
        let mut d = Tensor::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            d.set(i, j, v);
        }
        d
    }

    pub fn cast<U: Scalar>(&self) -> SparseAdjacency<U> {
        SparseAdjacency {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        }
    }

    /// `out = A * x` for row-major `x` with `cols` columns.
    pub(crate) fn spmm_into(&self, x: &[T], cols: usize, out: &mut [T]) {
        debug_assert_eq!(x.len(), self.n * cols);
        debug_assert_eq!(out.len(), self.n * cols);
        for i in 0..self.n {
            let dst = &mut out[i * cols..(i + 1) * cols];
            dst.iter_mut().for_each(|v| *v = T::zero());
            for (j, a) in self.row(i) {
                let src = &x[j * cols..(j + 1) * cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
    }

    /// `out += A^T * g`.
    pub(crate) fn spmm_transpose_acc(&self, g: &[T], cols: usize, out: &mut [T]) {
        for i in 0..self.n {
            let src = &g[i * cols..(i + 1) * cols];
            for (j, a) in self.row(i) {
                let dst = &mut out[j * cols..(j + 1) * cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
    }

    /// Sparse-dense product `A * x` without recording.
    pub fn spmm(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rows() != self.n {
            return Err(GlamError::Shape { op: "spmm", left: (self.n, self.n), right: x.shape() });
        }
        let mut out = Tensor::zeros(x.rows(), x.cols());
        self.spmm_into(x.data(), x.cols(), out.data_mut());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_adjacency_gives_zero_rows() {
        let a = SparseAdjacency::<f64>::from_pairs(3, []).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert!(a.spmm(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_edge_swaps_rows() {
        let a = SparseAdjacency::<f64>::from_pairs(2, [(0, 1), (1, 0)]).unwrap();
        assert_eq!(a.to_dense().data(), &[0.0, 1.0, 1.0, 0.0]);
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(a.spmm(&x).unwrap().data(), &[3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn entries_are_symmetric_and_in_unit_interval() {
        let a = SparseAdjacency::<f64>::from_pairs(5, [(0, 1), (1, 2), (2, 0), (3, 4), (1, 3)]).unwrap();
        let d = a.to_dense();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(d.get(i, j), d.get(j, i));
                let v = d.get(i, j);
                assert!(v == 0.0 || (v > 0.0 && v <= 1.0));
            }
        }
    }

    #[test]
    fn mismatched_rows_error() {
        let a = SparseAdjacency::<f32>::from_pairs(2, [(0, 1)]).unwrap();
        assert!(a.spmm(&Tensor::zeros(3, 1)).is_err());
    }
}
