//! Small dense helpers on top of faer plus vector arithmetic used by the
//! iterative solvers.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `sum conj(a_i) b_i`
pub fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `sum conj(a_i) w_i b_i`
pub fn wdotc(a: &[C64], b: &[C64], w: &[f64]) -> C64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| x.conj() * y * *w).sum()
}

pub fn normc(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn axpyc(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn to_complex(x: &[f64]) -> Vec<C64> {
    x.iter().map(|&v| C64::new(v, 0.0)).collect()
}

pub fn re(x: &[C64]) -> Vec<f64> {
    x.iter().map(|v| v.re).collect()
}

pub fn im(x: &[C64]) -> Vec<f64> {
    x.iter().map(|v| v.im).collect()
}

pub fn mat_from_rows(rows: &[Vec<f64>]) -> Mat<f64> {
    let n = rows.len();
    let m = if n == 0 { 0 } else { rows[0].len() };
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

/// Columns of `m` as vectors.
pub fn columns<T: Copy>(m: &Mat<T>) -> Vec<Vec<T>> {
    (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| m[(i, j)]).collect()).collect()
}

/// Eigenvalues and right eigenvectors of a complex matrix.
pub fn eig(m: &Mat<C64>) -> Result<(Vec<C64>, Mat<C64>)> {
    let e = m
        .eigen()
        .map_err(|e| Error::solver(format!("dense eigensolver failed: {e:?}"), f64::NAN))?;
    let vals = (0..m.nrows()).map(|i| e.S().column_vector()[i]).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn eigenvalues_real(m: &Mat<f64>) -> Result<Vec<C64>> {
    m.eigenvalues()
        .map_err(|e| Error::solver(format!("dense eigensolver failed: {e:?}"), f64::NAN))
}

/// Symmetric eigen decomposition, eigenvalues ascending.
pub fn sym_eig(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::solver(format!("symmetric eigensolver failed: {e:?}"), f64::NAN))?;
    let vals = (0..a.nrows()).map(|i| e.S().column_vector()[i]).collect();
    Ok((vals, e.U().to_owned()))
}

/// `A x = theta B x` with `A` symmetric and `B` symmetric positive
/// definite. Eigenvalues ascending, eigenvectors `B`-orthonormal.
pub fn sym_gen_eig(a: &Mat<f64>, b: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let (lb, qb) = sym_eig(b)?;
    let lmax = lb.iter().cloned().fold(0.0, f64::max);
    if lb.iter().any(|&l| l <= 1e-14 * lmax) {
        return Err(Error::solver("generalized eigenproblem: metric not positive definite", lb[0]));
    }
    let n = a.nrows();
    // B^{-1/2} = Q diag(l^{-1/2}) Q^T
    let s = Mat::from_fn(n, n, |i, j| qb[(i, j)] / lb[j].sqrt());
    let isqrt = &s * qb.transpose();
    let c = &isqrt * a * &isqrt;
    let c = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let (th, v) = sym_eig(&c)?;
    Ok((th, &isqrt * &v))
}

/// Orthonormal basis of the null space of `b` (rows are constraints).
pub fn null_space(b: &Mat<f64>, rel_tol: f64) -> Result<Mat<f64>> {
    let n = b.ncols();
    let svd = b
        .svd()
        .map_err(|e| Error::solver(format!("svd failed: {e:?}"), f64::NAN))?;
    let s = svd.S().column_vector();
    let smax = if s.nrows() > 0 { s[0] } else { 0.0 };
    let rank = (0..s.nrows()).filter(|&i| s[i] > rel_tol * smax).count();
    let v = svd.V();
    Ok(Mat::from_fn(n, n - rank, |i, j| v[(i, rank + j)]))
}

pub fn singular_values(m: &Mat<f64>) -> Result<Vec<f64>> {
    m.singular_values()
        .map_err(|e| Error::solver(format!("svd failed: {e:?}"), f64::NAN))
}

pub fn singular_values_c(m: &Mat<C64>) -> Result<Vec<f64>> {
    m.singular_values()
        .map_err(|e| Error::solver(format!("svd failed: {e:?}"), f64::NAN))
}

/// Solves a small dense complex system.
pub fn solve_c(a: &Mat<C64>, b: &[C64]) -> Vec<C64> {
    let lu = a.partial_piv_lu();
    let mut x = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    lu.solve_in_place(x.as_mut());
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}

pub fn solve_r(a: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    let lu = a.partial_piv_lu();
    let mut x = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    lu.solve_in_place(x.as_mut());
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}

pub fn inverse_c(a: &Mat<C64>) -> Mat<C64> {
    a.partial_piv_lu().inverse()
}

/// Least-squares polynomial fit `y ~ sum c_k x^{p_k}` for the given powers.
pub fn fit_powers(x: &[f64], y: &[f64], powers: &[i32]) -> (Vec<f64>, f64) {
    let n = x.len();
    let m = powers.len();
    let a = Mat::from_fn(n, m, |i, j| x[i].powi(powers[j]));
    let ata = a.transpose() * &a;
    let aty: Vec<f64> = (0..m).map(|j| (0..n).map(|i| a[(i, j)] * y[i]).sum()).collect();
    let c = solve_r(&ata, &aty);
    let res: f64 = (0..n)
        .map(|i| {
            let f: f64 = (0..m).map(|j| c[j] * a[(i, j)]).sum();
            (f - y[i]).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    (c, res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalized_symmetric() {
        let a = mat_from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let b = mat_from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        let (th, v) = sym_gen_eig(&a, &b).unwrap();
        for k in 0..2 {
            let x: Vec<f64> = (0..2).map(|i| v[(i, k)]).collect();
            for i in 0..2 {
                let ax: f64 = (0..2).map(|j| a[(i, j)] * x[j]).sum();
                let bx: f64 = (0..2).map(|j| b[(i, j)] * x[j]).sum();
                assert!((ax - th[k] * bx).abs() < 1e-12);
            }
        }
        let g = v.transpose() * &b * &v;
        assert!((g[(0, 0)] - 1.0).abs() < 1e-12 && g[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn null_space_of_row() {
        let b = mat_from_rows(&[vec![1.0, 1.0, 0.0]]);
        let z = null_space(&b, 1e-12).unwrap();
        assert_eq!(z.ncols(), 2);
        let bz = &b * &z;
        assert!(bz[(0, 0)].abs() < 1e-14 && bz[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn power_fit() {
        let x = [1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v * v).collect();
        let (c, r) = fit_powers(&x, &y, &[2]);
        assert!((c[0] - 2.0).abs() < 1e-12 && r < 1e-12);
    }
}
