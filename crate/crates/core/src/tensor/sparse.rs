use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Compressed sparse row matrix with at most one entry per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets in any order. Duplicate cells
    /// and out-of-range indices are rejected.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut prev: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::InvalidArgument(format!(
                    "sparse entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if prev == Some((r, c)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate sparse entry ({r}, {c})"
                )));
            }
            prev = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `r` as `(col, value)` pairs in column order.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let swapped = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        SparseMatrix::from_triplets(self.cols, self.rows, swapped)
            .expect("transpose of a valid matrix is valid")
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(&[self.rows, self.cols]);
        for (r, c, v) in self.triplets() {
            out.set(r, c, v);
        }
        out
    }

    /// Sparse-dense product `self · x`.
    pub fn spmm(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 || x.rows() != self.cols {
            return Err(Error::shape("spmm", &[self.rows, self.cols], x.shape()));
        }
        let n = x.cols();
        let mut out = vec![0.0; self.rows * n];
        for r in 0..self.rows {
            let out_row = &mut out[r * n..(r + 1) * n];
            for (c, v) in self.row(r) {
                for (o, &xv) in out_row.iter_mut().zip(x.row(c)) {
                    *o += v * xv;
                }
            }
        }
        Tensor::matrix(self.rows, n, out)
    }

    /// `selfᵀ · x` without materializing the transpose.
    pub fn spmm_transposed(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 || x.rows() != self.rows {
            return Err(Error::shape("spmm_transposed", &[self.rows, self.cols], x.shape()));
        }
        let n = x.cols();
        let mut out = vec![0.0; self.cols * n];
        for r in 0..self.rows {
            let x_row = x.row(r);
            for (c, v) in self.row(r) {
                let out_row = &mut out[c * n..(c + 1) * n];
                for (o, &xv) in out_row.iter_mut().zip(x_row) {
                    *o += v * xv;
                }
            }
        }
        Tensor::matrix(self.cols, n, out)
    }
}
