//! Small sparse/banded kernels and a row-major dense buffer that interoperates with faer.
//!
//! Dense products and small LU factorizations go through faer; the band solver is local
//! because it operates on row-major right-hand sides with thousands of columns, which is the
//! hot loop of the structured Riccati step.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Solve;
use faer::{Accum, Mat, MatMut, MatRef, Par};

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets; duplicates are summed, explicit zeros kept.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|p| (cols[p], vals[p])));
            row.sort_by_key(|e| e.0);
            for &(j, v) in &row {
                if indices.len() > indptr[i] && *indices.last().unwrap() == j {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Csr {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        Csr {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Csr {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: vec![],
            data: vec![],
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(p) => self.data[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn transpose(&self) -> Csr {
        let t: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (j, i, v))
            .collect();
        Csr::from_triplets(self.ncols, self.nrows, &t)
    }

    /// `alpha * x + beta * y`.
    pub fn lin_comb(alpha: f64, x: &Csr, beta: f64, y: &Csr) -> Csr {
        assert_eq!((x.nrows, x.ncols), (y.nrows, y.ncols));
        let mut t: Vec<_> = x
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (i, j, alpha * v))
            .collect();
        t.extend(y.triplets().into_iter().map(|(i, j, v)| (i, j, beta * v)));
        Csr::from_triplets(x.nrows, x.ncols, &t)
    }

    /// `diag(d) * self * diag(d)`.
    pub fn sym_scale(&self, d: &[f64]) -> Csr {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out.data[p] *= d[i] * d[self.indices[p]];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Csr {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `self * x` for a row-major dense `x`.
    pub fn mul_rows(&self, x: &RowMat) -> RowMat {
        assert_eq!(x.rows, self.ncols);
        let c = x.cols;
        let mut out = RowMat::zeros(self.nrows, c);
        for i in 0..self.nrows {
            let dst = &mut out.data[i * c..(i + 1) * c];
            for (j, v) in self.row(i) {
                for (d, s) in dst.iter_mut().zip(&x.data[j * c..(j + 1) * c]) {
                    *d += v * s;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn to_rowmat(&self) -> RowMat {
        let mut m = RowMat::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m.data[i * self.ncols + j] += v;
        }
        m
    }

    /// Dense principal submatrix on `idx`.
    pub fn principal(&self, idx: &[usize]) -> Mat<f64> {
        Mat::from_fn(idx.len(), idx.len(), |a, b| self.get(idx[a], idx[b]))
    }

    /// (lower, upper) bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }
}

/// Dense row-major matrix. Row `i` is contiguous, which is what the band solver sweeps over.
#[derive(Clone, Debug, PartialEq)]
pub struct RowMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl RowMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RowMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        RowMat { rows, cols, data }
    }

    pub fn from_mat(m: MatRef<'_, f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    pub fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j])
    }

    pub fn as_ref(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.rows, self.cols)
    }

    pub fn as_mut(&mut self) -> MatMut<'_, f64> {
        MatMut::from_row_major_slice_mut(&mut self.data, self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> RowMat {
        let mut t = RowMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Rows `idx` as a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> RowMat {
        let mut out = RowMat::zeros(idx.len(), self.cols);
        for (a, &i) in idx.iter().enumerate() {
            out.data[a * self.cols..(a + 1) * self.cols].copy_from_slice(self.row(i));
        }
        out
    }

    /// Replaces `self` by `(self + selfᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `dst = beta*dst + alpha * lhs * rhs` (beta is 0 for `Accum::Replace`, 1 for `Accum::Add`).
pub fn gemm(
    dst: MatMut<'_, f64>,
    acc: Accum,
    lhs: MatRef<'_, f64>,
    rhs: MatRef<'_, f64>,
    alpha: f64,
) {
    matmul(dst, acc, lhs, rhs, alpha, Par::Seq);
}

/// Solves the small dense system `a x = b` with partial pivoting; `b` is row-major.
pub fn dense_solve(a: MatRef<'_, f64>, b: &RowMat) -> Result<RowMat> {
    let lu = a.partial_piv_lu();
    let x = lu.solve(b.as_ref());
    let out = RowMat::from_mat(x.as_ref());
    if !out.is_finite() {
        return Err(Error::Singular(format!(
            "dense {}x{} system",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(out)
}

const CHUNK: usize = 256;

/// LU factorization of a banded matrix without pivoting.
///
/// The systems factored here are mass-dominated (`M ± h/2 S`), so pivoting is not needed;
/// a pivot that is tiny relative to its row is reported as [`Error::Singular`].
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    a: Vec<f64>,
}

impl BandedLu {
    pub fn factor(m: &Csr) -> Result<Self> {
        if m.nrows != m.ncols {
            return Err(Error::Dimension(format!(
                "band LU of {}x{}",
                m.nrows, m.ncols
            )));
        }
        let n = m.nrows;
        let (kl, ku) = m.bandwidth();
        // Without pivoting, fill stays inside the original band.
        let w = kl + ku + 1;
        let mut a = vec![0.0; n * w];
        let mut scale = vec![0.0f64; n];
        for i in 0..n {
            for (j, v) in m.row(i) {
                a[i * w + (j + kl - i)] = v;
                scale[i] = scale[i].max(v.abs());
            }
        }
        for k in 0..n {
            let piv = a[k * w + kl];
            if !(piv.abs() > 1e-13 * scale[k]) {
                return Err(Error::Singular(format!(
                    "zero pivot {piv:e} at row {k} of {n}"
                )));
            }
            let hi = (k + kl + 1).min(n);
            let jhi = (k + ku + 1).min(n);
            for i in k + 1..hi {
                let l = a[i * w + (k + kl - i)] / piv;
                a[i * w + (k + kl - i)] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..jhi {
                    let ukj = a[k * w + (j + kl - k)];
                    a[i * w + (j + kl - i)] -= l * ukj;
                }
            }
        }
        Ok(BandedLu { n, kl, ku, w, a })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.w + (j + self.kl - i)]
    }

    pub fn solve_vec(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let mut s = x[i];
            for k in i.saturating_sub(self.kl)..i {
                s -= self.at(i, k) * x[k];
            }
            x[i] = s;
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + self.ku + 1).min(self.n) {
                s -= self.at(i, k) * x[k];
            }
            x[i] = s / self.at(i, i);
        }
    }

    /// Overwrites the row-major `x` (n × c) with `A⁻¹ x`.
    pub fn solve_rows(&self, x: &mut RowMat) {
        assert_eq!(x.rows, self.n);
        let c = x.cols;
        for c0 in (0..c).step_by(CHUNK) {
            let c1 = (c0 + CHUNK).min(c);
            for i in 0..self.n {
                let (head, tail) = x.data.split_at_mut(i * c);
                let xi = &mut tail[c0..c1];
                for k in i.saturating_sub(self.kl)..i {
                    let l = self.at(i, k);
                    if l == 0.0 {
                        continue;
                    }
                    for (u, v) in xi.iter_mut().zip(&head[k * c + c0..k * c + c1]) {
                        *u -= l * v;
                    }
                }
            }
            for i in (0..self.n).rev() {
                let (head, tail) = x.data.split_at_mut((i + 1) * c);
                let xi = &mut head[i * c + c0..i * c + c1];
                for k in i + 1..(i + self.ku + 1).min(self.n) {
                    let u_ik = self.at(i, k);
                    if u_ik == 0.0 {
                        continue;
                    }
                    let off = (k - i - 1) * c;
                    for (u, v) in xi.iter_mut().zip(&tail[off + c0..off + c1]) {
                        *u -= u_ik * v;
                    }
                }
                let d = 1.0 / self.at(i, i);
                xi.iter_mut().for_each(|u| *u *= d);
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> Csr {
        let mut t = vec![];
        for i in 0..n {
            t.push((i, i, 4.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -0.5));
            }
        }
        Csr::from_triplets(n, n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = Csr::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 5.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 5.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn band_solve_matches_dense() {
        let a = tridiag(300);
        let lu = BandedLu::factor(&a).unwrap();
        let b = RowMat::from_fn(300, 600, |i, j| ((i * 31 + j * 7) % 13) as f64 - 6.0);
        let mut x = b.clone();
        lu.solve_rows(&mut x);
        let r = a.mul_rows(&x);
        let err = r
            .data
            .iter()
            .zip(&b.data)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "residual {err}");

        let mut v: Vec<f64> = b.data[..300].to_vec();
        let want: Vec<f64> = (0..300).map(|i| b.get(i, 0)).collect();
        v.copy_from_slice(&want);
        lu.solve_vec(&mut v);
        for i in 0..300 {
            assert!((v[i] - x.get(i, 0)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let a = Csr::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]);
        assert!(matches!(BandedLu::factor(&a), Err(Error::Singular(_))));
    }

    #[test]
    fn rowmat_views_agree_with_faer() {
        let a = RowMat::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let b = RowMat::from_fn(4, 2, |i, j| (i + 2 * j) as f64);
        let mut c = RowMat::zeros(3, 2);
        gemm(c.as_mut(), Accum::Replace, a.as_ref(), b.as_ref(), 1.0);
        let want = &a.to_mat() * &b.to_mat();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(c.get(i, j), want[(i, j)]);
            }
        }
    }
}
