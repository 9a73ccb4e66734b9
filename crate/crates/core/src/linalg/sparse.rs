//! Compressed sparse row storage and a thin wrapper around faer's sparse LU.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::MatMut;
use num_complex::Complex64 as C64;
use std::ops::{Add, AddAssign, Mul};

use crate::error::{Error, Result};

/// Field types the sparse kernels run on.
pub trait Scalar:
    Copy + Default + Send + Sync + PartialEq + Add<Output = Self> + AddAssign + Mul<Output = Self> + 'static
{
    fn from_f64(v: f64) -> Self;
    fn conj(self) -> Self;
    fn abs2(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn conj(self) -> Self {
        self
    }
    fn abs2(self) -> f64 {
        self * self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for C64 {
    fn from_f64(v: f64) -> Self {
        C64::new(v, 0.0)
    }
    fn conj(self) -> Self {
        C64::conj(&self)
    }
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Row-compressed matrix. Duplicate triplets are summed on assembly.
#[derive(Clone, Debug)]
pub struct Csr<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Csr {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, T::from_f64(1.0))).collect())
    }

    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, T)>) -> Self {
        trip.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut data: Vec<T> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            debug_assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of {nrows}x{ncols}");
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Csr {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.push((r, self.indices[k], self.data[k]));
            }
        }
        out
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::default(); self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = T::default();
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yr = acc;
        }
    }

    /// `y += A x`
    pub fn matvec_add(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let mut acc = T::default();
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yr += acc;
        }
    }

    /// `y = A^T x` (no conjugation).
    pub fn tmatvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![T::default(); self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.data[k] * xr;
            }
        }
        y
    }

    pub fn transpose(&self) -> Csr<T> {
        let trip = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Csr::from_triplets(self.ncols, self.nrows, trip)
    }

    pub fn scale(&self, s: T) -> Csr<T> {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = *v * s;
        }
        out
    }

    /// `alpha A + beta B`
    pub fn lin_comb(alpha: T, a: &Csr<T>, beta: T, b: &Csr<T>) -> Csr<T> {
        assert_eq!((a.nrows, a.ncols), (b.nrows, b.ncols));
        let mut trip = Vec::with_capacity(a.nnz() + b.nnz());
        trip.extend(a.triplets().into_iter().map(|(r, c, v)| (r, c, alpha * v)));
        trip.extend(b.triplets().into_iter().map(|(r, c, v)| (r, c, beta * v)));
        Csr::from_triplets(a.nrows, a.ncols, trip)
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, b: &Csr<T>) -> Csr<T> {
        assert_eq!(self.ncols, b.nrows);
        let mut trip = Vec::new();
        let mut acc: Vec<T> = vec![T::default(); b.ncols];
        let mut mark: Vec<usize> = vec![usize::MAX; b.ncols];
        let mut touched = Vec::new();
        for r in 0..self.nrows {
            touched.clear();
            for (k, av) in self.row(r) {
                for (c, bv) in b.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = T::default();
                        touched.push(c);
                    }
                    acc[c] += av * bv;
                }
            }
            for &c in &touched {
                trip.push((r, c, acc[c]));
            }
        }
        Csr::from_triplets(self.nrows, b.ncols, trip)
    }

    /// Rows `rows` and columns `cols` (each given as index lists).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Csr<T> {
        let mut cmap = vec![usize::MAX; self.ncols];
        for (j, &c) in cols.iter().enumerate() {
            cmap[c] = j;
        }
        let mut trip = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if cmap[c] != usize::MAX {
                    trip.push((i, cmap[c], v));
                }
            }
        }
        Csr::from_triplets(rows.len(), cols.len(), trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::default(); self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            out[r][c] += v;
        }
        out
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, T>>
    where
        T: faer::traits::ComplexField,
    {
        let trip: Vec<Triplet<usize, usize, T>> = self
            .triplets()
            .into_iter()
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip)
            .map_err(|e| Error::validation(format!("sparse assembly failed: {e:?}")))
    }
}

impl Csr<f64> {
    pub fn to_complex(&self) -> Csr<C64> {
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            data: self.data.iter().map(|&v| C64::new(v, 0.0)).collect(),
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let t = self.transpose();
        let d = Csr::lin_comb(1.0, self, -1.0, &t);
        d.data.iter().all(|v| v.abs() <= tol)
    }
}

/// Block assembly helper: places `m` at offset `(r0, c0)` into a triplet list.
pub fn push_block<T: Scalar>(trip: &mut Vec<(usize, usize, T)>, m: &Csr<T>, r0: usize, c0: usize, s: T) {
    for (r, c, v) in m.triplets() {
        trip.push((r0 + r, c0 + c, s * v));
    }
}

/// Factorised square sparse matrix.
pub struct SparseLu<T: faer::traits::ComplexField> {
    lu: faer::sparse::linalg::solvers::Lu<usize, T>,
    n: usize,
    mat: Csr<T>,
}

impl<T: Scalar + faer::traits::ComplexField> SparseLu<T> {
    pub fn new(a: &Csr<T>) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::validation("LU of a non-square matrix"));
        }
        let fa = a.to_faer()?;
        let lu = fa
            .sp_lu()
            .map_err(|e| Error::solver(format!("sparse LU failed: {e:?}"), f64::INFINITY))?;
        Ok(SparseLu {
            lu,
            n: a.nrows,
            mat: a.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &Csr<T> {
        &self.mat
    }

    fn run(&self, rhs: &[T], mode: u8) -> Result<Vec<T>> {
        assert_eq!(rhs.len(), self.n);
        let mut x = rhs.to_vec();
        {
            let xm = MatMut::from_column_major_slice_mut(&mut x, self.n, 1);
            match mode {
                0 => self.lu.solve_in_place(xm),
                1 => self.lu.solve_transpose_in_place(xm),
                _ => self.lu.solve_adjoint_in_place(xm),
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::solver("sparse solve produced non-finite values", f64::INFINITY));
        }
        Ok(x)
    }

    /// Solves `A x = b`.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        self.run(rhs, 0)
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, rhs: &[T]) -> Result<Vec<T>> {
        self.run(rhs, 1)
    }

    /// Solves `A^H x = b`.
    pub fn solve_adjoint(&self, rhs: &[T]) -> Result<Vec<T>> {
        self.run(rhs, 2)
    }

    /// Solve followed by one step of iterative refinement; returns the
    /// solution and the relative residual.
    pub fn solve_refined(&self, rhs: &[T]) -> Result<(Vec<T>, f64)>
    where
        T: std::ops::Sub<Output = T>,
    {
        let mut x = self.solve(rhs)?;
        let r: Vec<T> = {
            let ax = self.mat.matvec(&x);
            rhs.iter().zip(ax).map(|(&b, a)| b - a).collect()
        };
        let dx = self.solve(&r)?;
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
        let ax = self.mat.matvec(&x);
        let rn: f64 = rhs.iter().zip(ax).map(|(&b, a)| (b - a).abs2()).sum::<f64>().sqrt();
        let bn: f64 = rhs.iter().map(|v| v.abs2()).sum::<f64>().sqrt();
        Ok((x, rn / bn.max(1e-300)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let a = Csr::from_triplets(2, 2, vec![(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.matvec(&[1.0, 1.0]), vec![3.0, 4.0]);
        assert_eq!(a.tmatvec(&[1.0, 1.0]), vec![4.0, 3.0]);
    }

    #[test]
    fn lu_roundtrip_real_and_complex() {
        let a = Csr::from_triplets(3, 3, vec![(0, 0, 0.0), (0, 1, 2.0), (1, 0, 1.0), (1, 2, 1.0), (2, 2, 3.0), (2, 0, 1.0)]);
        let lu = SparseLu::new(&a).unwrap();
        let b = vec![1.0, 2.0, 3.0];
        let x = lu.solve(&b).unwrap();
        let ax = a.matvec(&x);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        let xt = lu.solve_transpose(&b).unwrap();
        let atx = a.tmatvec(&xt);
        for (u, v) in atx.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        let ac = Csr::from_triplets(2, 2, vec![(0, 0, C64::new(1.0, 1.0)), (0, 1, C64::new(0.0, 2.0)), (1, 1, C64::new(3.0, 0.0))]);
        let luc = SparseLu::new(&ac).unwrap();
        let bc = vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let y = luc.solve_adjoint(&bc).unwrap();
        // A^H y = b
        let aht = ac.transpose();
        let mut r = vec![C64::default(); 2];
        for (row, c, v) in aht.triplets() {
            r[row] += v.conj() * y[c];
        }
        for (u, v) in r.iter().zip(&bc) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn matmul_matches_dense() {
        let a = Csr::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]);
        let b = Csr::from_triplets(3, 2, vec![(0, 0, 1.0), (1, 1, 1.0), (2, 0, 1.0), (2, 1, 5.0)]);
        let c = a.matmul(&b).to_dense();
        assert_eq!(c, vec![vec![3.0, 10.0], vec![0.0, 3.0]]);
    }
}
