//! Restarted GMRES with right preconditioning, real arithmetic.

use crate::error::{Error, Result};
use crate::linalg::dense::{axpy, dot, norm};

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iter: usize,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            restart: 40,
            max_iter: 400,
            rtol: 1e-10,
            atol: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresInfo {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `A x = b` given `apply = A` and `precond ~ A^{-1}`.
pub fn gmres(
    apply: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    precond: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: GmresOptions,
) -> Result<(Vec<f64>, GmresInfo)> {
    let n = b.len();
    let bn = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    if bn == 0.0 {
        return Ok((vec![0.0; n], GmresInfo { iterations: 0, residual: 0.0 }));
    }
    let target = (opts.rtol * bn).max(opts.atol);
    let mut total = 0usize;
    loop {
        let ax = apply(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        if beta <= target {
            return Ok((x, GmresInfo { iterations: total, residual: beta / bn }));
        }
        if total >= opts.max_iter {
            return Err(Error::solver("GMRES did not converge", beta / bn));
        }
        let m = opts.restart;
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for j in 0..m {
            let zj = precond(&v[j])?;
            let mut w = apply(&zj)?;
            z.push(zj);
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let c = dot(vi, &w);
                    h[i][j] += c;
                    axpy(-c, vi, &mut w);
                }
            }
            let wn = norm(&w);
            h[j + 1][j] = wn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let den = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if den == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = h[j][j] / den;
                sn[j] = h[j + 1][j] / den;
            }
            h[j][j] = cs[j] * h[j][j] + sn[j] * h[j + 1][j];
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            total += 1;
            k_used = j + 1;
            if g[j + 1].abs() <= target || wn == 0.0 || total >= opts.max_iter {
                break;
            }
            v.push(w.iter().map(|x| x / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in (i + 1)..k_used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            axpy(*yi, &z[i], &mut x);
        }
    }
}
