//! Compressed-sparse-row complex matrices.
//!
//! Rows are stored with strictly increasing column indices and no explicit
//! zeros, so two matrices with the same entries have identical storage.

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use num_complex::Complex64 as C64;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![C64::new(1.0, 0.0); n])
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        Self::from_triplets(
            diag.len(),
            diag.len(),
            diag.iter().enumerate().map(|(i, &v)| (i, i, v)),
        )
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed in input order and entries that end up exactly zero are dropped.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, C64)>,
    {
        let mut per_row: Vec<Vec<(usize, C64)>> = vec![Vec::new(); nrows];
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            per_row[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in per_row {
            // stable sort keeps duplicate summation order deterministic
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != C64::new(0.0, 0.0) {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(dense: ArrayView2<'_, C64>) -> Self {
        let (nr, nc) = dense.dim();
        Self::from_triplets(
            nr,
            nc,
            dense
                .indexed_iter()
                .filter(|(_, v)| **v != C64::new(0.0, 0.0))
                .map(|((i, j), &v)| (i, j, v)),
        )
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(col, value)` over the stored entries of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Iterates every stored `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.triplets().map(|(i, j, v)| (j, i, v)),
        )
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.triplets().map(|(i, j, v)| (j, i, v.conj())),
        )
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.conj());
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        if s == C64::new(0.0, 0.0) {
            return Self::zeros(self.nrows, self.ncols);
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: C64, other: &Self, b: C64) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in sum");
        Self::from_triplets(
            self.nrows,
            self.ncols,
            self.triplets()
                .map(|(i, j, v)| (i, j, a * v))
                .chain(other.triplets().map(|(i, j, v)| (i, j, b * v))),
        )
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "shape mismatch in product");
        let mut trips = Vec::new();
        let mut acc = vec![C64::new(0.0, 0.0); other.ncols];
        let mut touched = Vec::new();
        let mut seen = vec![false; other.ncols];
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                trips.push((i, j, acc[j]));
                acc[j] = C64::new(0.0, 0.0);
                seen[j] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, trips)
    }

    /// Kronecker product `self ⊗ other`; `self` is the slow (outer) factor.
    pub fn kron(&self, other: &Self) -> Self {
        let (pr, pc) = other.shape();
        let mut trips = Vec::with_capacity(self.nnz() * other.nnz());
        for (i, j, a) in self.triplets() {
            for (k, l, b) in other.triplets() {
                trips.push((i * pr + k, j * pc + l, a * b));
            }
        }
        Self::from_triplets(self.nrows * pr, self.ncols * pc, trips)
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for (i, j, v) in self.triplets() {
            out[[i, j]] = v;
        }
        out
    }

    /// Largest absolute row sum (the induced infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest absolute column sum (the induced 1-norm).
    pub fn norm_one(&self) -> f64 {
        let mut cols = vec![0.0; self.ncols];
        for (_, j, v) in self.triplets() {
            cols[j] += v.norm();
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    /// Largest elementwise deviation `max |self - other|`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.lincomb(C64::new(1.0, 0.0), other, C64::new(-1.0, 0.0))
            .values
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// `out = self · x`.
    pub fn matvec_into(&self, x: &[C64], out: &mut [C64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.nrows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out += alpha · self · m` for a dense row-major `m`.
    pub fn mul_dense_acc(&self, m: ArrayView2<'_, C64>, alpha: C64, mut out: ArrayViewMut2<'_, C64>) {
        debug_assert_eq!(m.nrows(), self.ncols);
        let nc = m.ncols();
        for i in 0..self.nrows {
            let mut orow = out.row_mut(i);
            let orow = orow.as_slice_mut().expect("contiguous output row");
            for (k, v) in self.row(i) {
                let s = alpha * v;
                let mrow = m.row(k);
                let mrow = mrow.as_slice().expect("contiguous input row");
                for j in 0..nc {
                    orow[j] += s * mrow[j];
                }
            }
        }
    }

    /// `out += alpha · m · self` for a dense row-major `m`.
    pub fn dense_mul_acc(&self, m: ArrayView2<'_, C64>, alpha: C64, mut out: ArrayViewMut2<'_, C64>) {
        debug_assert_eq!(m.ncols(), self.nrows);
        for i in 0..m.nrows() {
            let mrow = m.row(i);
            let mrow = mrow.as_slice().expect("contiguous input row");
            let mut orow = out.row_mut(i);
            let orow = orow.as_slice_mut().expect("contiguous output row");
            for (k, &mik) in mrow.iter().enumerate() {
                if mik == C64::new(0.0, 0.0) {
                    continue;
                }
                let s = alpha * mik;
                for p in self.row_ptr[k]..self.row_ptr[k + 1] {
                    orow[self.col_idx[p]] += s * self.values[p];
                }
            }
        }
    }

    pub fn mul_dense(&self, m: ArrayView2<'_, C64>) -> Array2<C64> {
        let mut out = Array2::zeros((self.nrows, m.ncols()));
        self.mul_dense_acc(m, C64::new(1.0, 0.0), out.view_mut());
        out
    }

    pub fn dense_mul(&self, m: ArrayView2<'_, C64>) -> Array2<C64> {
        let mut out = Array2::zeros((m.nrows(), self.ncols));
        self.dense_mul_acc(m, C64::new(1.0, 0.0), out.view_mut());
        out
    }

    /// Raw little-endian bytes of the structure and values, used for hashing.
    pub fn hash_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.row_ptr.len() + 24 * self.nnz());
        out.extend((self.nrows as u64).to_le_bytes());
        out.extend((self.ncols as u64).to_le_bytes());
        for &p in &self.row_ptr {
            out.extend((p as u64).to_le_bytes());
        }
        for (&c, v) in self.col_idx.iter().zip(&self.values) {
            out.extend((c as u64).to_le_bytes());
            out.extend(v.re.to_le_bytes());
            out.extend(v.im.to_le_bytes());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn triplets_sum_and_drop_zeros() {
        let m = CsrMatrix::from_triplets(2, 2, [(0, 1, c(1.0)), (0, 1, c(-1.0)), (1, 0, c(2.0))]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(1, 0), c(2.0));
        assert_eq!(m.get(0, 1), c(0.0));
    }

    #[test]
    fn kron_is_block_structured() {
        let a = CsrMatrix::from_triplets(2, 2, [(0, 1, c(1.0))]);
        let i2 = CsrMatrix::identity(2);
        let k = a.kron(&i2);
        assert_eq!(k.shape(), (4, 4));
        assert_eq!(k.get(0, 2), c(1.0));
        assert_eq!(k.get(1, 3), c(1.0));
        assert_eq!(k.nnz(), 2);
    }

    #[test]
    fn dense_products_match_dense_reference() {
        let s = CsrMatrix::from_triplets(
            3,
            3,
            [(0, 0, C64::new(1.0, 1.0)), (1, 2, c(2.0)), (2, 1, C64::new(0.0, -3.0))],
        );
        let m = Array2::from_shape_fn((3, 3), |(i, j)| C64::new(i as f64 + 1.0, j as f64 - 1.0));
        let sd = s.to_dense();
        assert_eq!(s.mul_dense(m.view()), sd.dot(&m));
        assert_eq!(s.dense_mul(m.view()), m.dot(&sd));
    }
}
