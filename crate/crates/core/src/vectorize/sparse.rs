use std::io::Write;

use serde::{Deserialize, Serialize};

use super::VectorizeError;
use crate::scalar::Scalar;

/// Compressed sparse rows. Column indices are sorted within a row and no
/// stored value is zero or non-finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix { rows, cols, indptr: vec![0; rows + 1], indices: Vec::new(), values: Vec::new() }
    }

    /// Builds from per-row `(column, value)` lists. Duplicate columns are
    /// summed and zeros dropped.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self, VectorizeError> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (r, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let (c, mut v) = row[k];
                if c >= cols {
                    return Err(VectorizeError::IndexOutOfBounds { row: r, col: c, cols });
                }
                k += 1;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                if !v.is_finite() {
                    return Err(VectorizeError::NonFinite { row: r, col: c });
                }
                if v != T::zero() {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(SparseMatrix { rows: indptr.len() - 1, cols, indptr, indices, values })
    }

    pub fn from_dense(dense: &[Vec<T>]) -> Result<Self, VectorizeError> {
        let cols = dense.first().map_or(0, Vec::len);
        let rows = dense
            .iter()
            .map(|r| r.iter().copied().enumerate().filter(|&(_, v)| v != T::zero()).collect())
            .collect();
        Self::from_rows(cols, rows)
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

    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn row_iter(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (idx, vals) = self.row(r);
        idx.iter().copied().zip(vals.iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (idx, vals) = self.row(r);
        idx.binary_search(&c).map_or(T::zero(), |k| vals[k])
    }

    pub fn row_dot(&self, r: usize, dense: &[T]) -> T {
        self.row_iter(r).fold(T::zero(), |acc, (c, v)| acc + v * dense[c])
    }

    pub fn row_norm_sq(&self, r: usize) -> T {
        self.row(r).1.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    /// Dot product of two rows of this matrix.
    pub fn rows_dot(&self, a: usize, b: usize) -> T {
        let (ia, va) = self.row(a);
        let (ib, vb) = self.row(b);
        let (mut i, mut j) = (0, 0);
        let mut acc = T::zero();
        while i < ia.len() && j < ib.len() {
            match ia[i].cmp(&ib[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += va[i] * vb[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn mul_vec(&self, dense: &[T]) -> Result<Vec<T>, VectorizeError> {
        if dense.len() != self.cols {
            return Err(VectorizeError::DimensionMismatch { expected: self.cols, found: dense.len() });
        }
        Ok((0..self.rows).map(|r| self.row_dot(r, dense)).collect())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = SparseMatrix::zeros(0, self.cols);
        for &r in rows {
            let (idx, vals) = self.row(r);
            out.indices.extend_from_slice(idx);
            out.values.extend_from_slice(vals);
            out.indptr.push(out.indices.len());
        }
        out.rows = rows.len();
        out
    }

    /// Columns of `other` are appended after this matrix's columns.
    pub fn hstack(&self, other: &SparseMatrix<T>) -> Result<Self, VectorizeError> {
        if self.rows != other.rows {
            return Err(VectorizeError::RowMismatch { left: self.rows, right: other.rows });
        }
        let mut out = SparseMatrix::zeros(0, self.cols + other.cols);
        for r in 0..self.rows {
            let (idx, vals) = self.row(r);
            out.indices.extend_from_slice(idx);
            out.values.extend_from_slice(vals);
            let (idx, vals) = other.row(r);
            out.indices.extend(idx.iter().map(|c| c + self.cols));
            out.values.extend_from_slice(vals);
            out.indptr.push(out.indices.len());
        }
        out.rows = self.rows;
        Ok(out)
    }

    /// Scales each nonzero row to unit Euclidean norm.
    pub fn l2_normalize_rows(&mut self) {
        for r in 0..self.rows {
            let norm = self.row_norm_sq(r).sqrt();
            if norm > T::zero() {
                let (a, b) = (self.indptr[r], self.indptr[r + 1]);
                for v in &mut self.values[a..b] {
                    *v /= norm;
                }
            }
        }
    }

    pub(crate) fn map_values(&mut self, mut f: impl FnMut(usize, T) -> T) {
        for (c, v) in self.indices.iter().zip(self.values.iter_mut()) {
            *v = f(*c, *v);
        }
    }

    /// Per-column count of rows with a stored value.
    pub fn column_nnz(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        for &c in &self.indices {
            counts[c] += 1;
        }
        counts
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.rows)
            .map(|r| {
                let mut row = vec![T::zero(); self.cols];
                for (c, v) in self.row_iter(r) {
                    row[c] = v;
                }
                row
            })
            .collect()
    }

    /// Coordinate text: a `rows cols nnz` header, then `row col value` lines.
    pub fn write_coo<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        writeln!(sink, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for r in 0..self.rows {
            for (c, v) in self.row_iter(r) {
                writeln!(sink, "{r} {c} {v}")?;
            }
        }
        sink.flush()
    }
}
