//! Restarted Krylov eigensolver for an operator given as a closure.
//!
//! The basis `V` and its image `T V` are both stored, so the Rayleigh-Ritz
//! matrix `V^H G T V` is formed explicitly in the caller's inner product
//! `G`. Restarts keep the wanted Ritz vectors and one residual direction;
//! this is the thick-restart idea without the Schur bookkeeping.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::dense::{axpyc, eig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Want {
    LargestMagnitude,
    LargestReal,
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    pub nev: usize,
    pub ncv: usize,
    pub tol: f64,
    pub max_restarts: usize,
}

impl KrylovOptions {
    pub fn new(nev: usize) -> Self {
        KrylovOptions {
            nev,
            ncv: (2 * nev + 16).max(24),
            tol: 1e-12,
            max_restarts: 60,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RitzPair {
    pub theta: C64,
    pub vector: Vec<C64>,
    /// `|T x - theta x| / |theta|` in the caller's norm.
    pub residual: f64,
}

type Ip<'a> = &'a dyn Fn(&[C64], &[C64]) -> C64;

fn orthonormalize_pair(v: &mut Vec<Vec<C64>>, av: &mut Vec<Vec<C64>>, ip: Ip) {
    let mut out_v: Vec<Vec<C64>> = Vec::new();
    let mut out_av: Vec<Vec<C64>> = Vec::new();
    for (mut x, mut ax) in v.drain(..).zip(av.drain(..)) {
        for _ in 0..2 {
            for (q, aq) in out_v.iter().zip(&out_av) {
                let c = ip(q, &x);
                axpyc(-c, q, &mut x);
                axpyc(-c, aq, &mut ax);
            }
        }
        let nrm = ip(&x, &x).re.max(0.0).sqrt();
        if nrm > 1e-10 {
            for (a, b) in x.iter_mut().zip(ax.iter_mut()) {
                *a /= nrm;
                *b /= nrm;
            }
            out_v.push(x);
            out_av.push(ax);
        }
    }
    *v = out_v;
    *av = out_av;
}

/// Orthogonalises `x` against `basis` twice and normalises; `None` on
/// breakdown.
fn extend_basis(basis: &[Vec<C64>], mut x: Vec<C64>, ip: Ip) -> Option<Vec<C64>> {
    let n0 = ip(&x, &x).re.max(0.0).sqrt();
    for _ in 0..2 {
        for q in basis {
            let c = ip(q, &x);
            axpyc(-c, q, &mut x);
        }
    }
    let nrm = ip(&x, &x).re.max(0.0).sqrt();
    if nrm <= 1e-12 * n0.max(1e-300) || nrm == 0.0 {
        return None;
    }
    for a in x.iter_mut() {
        *a /= nrm;
    }
    Some(x)
}

fn rank(theta: C64, want: Want) -> f64 {
    match want {
        Want::LargestMagnitude => theta.norm(),
        Want::LargestReal => theta.re,
    }
}

/// Finds `opts.nev` eigenpairs of `op` with the largest `want` key.
pub fn krylov_eigs(
    op: &dyn Fn(&[C64]) -> Result<Vec<C64>>,
    ip: Ip,
    start: Vec<C64>,
    want: Want,
    opts: KrylovOptions,
) -> Result<Vec<RitzPair>> {
    let n = start.len();
    let ncv = opts.ncv.min(n);
    let nev = opts.nev.min(ncv.saturating_sub(2)).max(1);
    let mut v: Vec<Vec<C64>> = Vec::new();
    let mut av: Vec<Vec<C64>> = Vec::new();
    let Some(v0) = extend_basis(&[], start, ip) else {
        return Err(Error::validation("zero start vector"));
    };
    let mut next = Some(v0);
    let mut best: Vec<RitzPair> = Vec::new();
    for _restart in 0..=opts.max_restarts {
        // expand
        while v.len() < ncv {
            let Some(x) = next.take() else { break };
            let ax = op(&x)?;
            v.push(x);
            av.push(ax.clone());
            if v.len() < ncv {
                next = extend_basis(&v, ax, ip);
            }
        }
        let k = v.len();
        let h = Mat::from_fn(k, k, |i, j| ip(&v[i], &av[j]));
        let (vals, vecs) = eig(&h)?;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| rank(vals[b], want).total_cmp(&rank(vals[a], want)));
        let keep = (nev + 2).min(k.saturating_sub(1)).max(nev.min(k));
        let mut pairs = Vec::with_capacity(keep);
        let mut resid_dirs = Vec::with_capacity(keep);
        for &j in order.iter().take(keep) {
            let th = vals[j];
            let mut x = vec![C64::default(); n];
            let mut ax = vec![C64::default(); n];
            for i in 0..k {
                let y = vecs[(i, j)];
                axpyc(y, &v[i], &mut x);
                axpyc(y, &av[i], &mut ax);
            }
            let nx = ip(&x, &x).re.max(0.0).sqrt();
            let mut r = ax.clone();
            axpyc(-th, &x, &mut r);
            let nr = ip(&r, &r).re.max(0.0).sqrt();
            let res = nr / (nx * th.norm()).max(1e-300);
            pairs.push((RitzPair { theta: th, vector: x, residual: res }, ax));
            resid_dirs.push(r);
        }
        let converged = pairs.iter().take(nev).all(|(p, _)| p.residual < opts.tol);
        best = pairs.iter().take(nev).map(|(p, _)| p.clone()).collect();
        if converged {
            for p in best.iter_mut() {
                let nx = ip(&p.vector, &p.vector).re.sqrt();
                for a in p.vector.iter_mut() {
                    *a /= nx;
                }
            }
            return Ok(best);
        }
        // restart with the kept Ritz vectors plus the worst residual
        let worst = (0..nev.min(pairs.len()))
            .max_by(|&a, &b| pairs[a].0.residual.total_cmp(&pairs[b].0.residual))
            .unwrap_or(0);
        let r = resid_dirs.swap_remove(worst);
        let mut nv = Vec::with_capacity(keep);
        let mut nav = Vec::with_capacity(keep);
        for (p, ax) in pairs {
            nv.push(p.vector);
            nav.push(ax);
        }
        orthonormalize_pair(&mut nv, &mut nav, ip);
        v = nv;
        av = nav;
        next = extend_basis(&v, r, ip);
        if next.is_none() {
            // invariant subspace; accept what is there
            return Ok(best);
        }
    }
    let worst = best.iter().map(|p| p.residual).fold(0.0, f64::max);
    Err(Error::solver("Krylov eigensolver did not converge", worst))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_operator() {
        let d: Vec<f64> = (1..=60).map(|k| 1.0 / k as f64).collect();
        let op = |x: &[C64]| Ok(x.iter().zip(&d).map(|(a, b)| a * b).collect());
        let ip = |a: &[C64], b: &[C64]| crate::linalg::dense::dotc(a, b);
        let start: Vec<C64> = (0..60).map(|k| C64::new(1.0 + (k as f64).sin(), 0.3)).collect();
        let r = krylov_eigs(&op, &ip, start, Want::LargestMagnitude, KrylovOptions::new(4)).unwrap();
        let mut got: Vec<f64> = r.iter().map(|p| p.theta.re).collect();
        got.sort_by(|a, b| b.total_cmp(a));
        for (k, g) in got.iter().enumerate() {
            assert!((g - 1.0 / (k + 1) as f64).abs() < 1e-10, "{got:?}");
        }
    }

    #[test]
    fn rotation_block_gives_conjugate_pair() {
        // block diag of a 2x2 rotation-scaling and a decaying diagonal
        let n = 40;
        let op = move |x: &[C64]| {
            let mut y = vec![C64::default(); n];
            y[0] = 0.5 * x[0] - 2.0 * x[1];
            y[1] = 2.0 * x[0] + 0.5 * x[1];
            for k in 2..n {
                y[k] = x[k] * (0.1 / k as f64);
            }
            Ok(y)
        };
        let ip = |a: &[C64], b: &[C64]| crate::linalg::dense::dotc(a, b);
        let start: Vec<C64> = (0..n).map(|k| C64::new(1.0, k as f64 * 0.01)).collect();
        let r = krylov_eigs(&op, &ip, start, Want::LargestMagnitude, KrylovOptions::new(2)).unwrap();
        for p in &r {
            assert!((p.theta.re - 0.5).abs() < 1e-10 && (p.theta.im.abs() - 2.0).abs() < 1e-10);
        }
    }
}
