//! Orthogonal projection onto discretely solenoidal coupled fields.
//!
//! The complement of the range is spanned by weak gradients: a fluid
//! pressure gradient whose body part is the pressure resultant scaled by
//! `varpi`. Solving
//!
//! ```text
//! [ W  B^T ] [ x   ]   [ W f ]
//! [ B  0   ] [ phi ] = [ 0   ]
//! ```
//!
//! gives `x = f - W^{-1} B^T phi`, so `<x, f - x> = phi^T B x = 0` exactly.

use crate::error::{Error, Result};
use crate::linalg::sparse::{push_block, Csr, Scalar, SparseLu};
use crate::ops::Operators;

/// `[[top, B^T], [B, 0]]` with optional extra trailing unknowns left to the
/// caller.
pub fn saddle<T: Scalar>(top: &Csr<T>, div: &Csr<T>) -> Csr<T> {
    let nc = top.nrows;
    let np = div.nrows;
    let mut t = Vec::with_capacity(top.nnz() + 2 * div.nnz());
    push_block(&mut t, top, 0, 0, T::from_f64(1.0));
    push_block(&mut t, &div.transpose(), 0, nc, T::from_f64(1.0));
    push_block(&mut t, div, nc, 0, T::from_f64(1.0));
    Csr::from_triplets(nc + np, nc + np, t)
}

pub struct Projector {
    lu: SparseLu<f64>,
    weights: Vec<f64>,
    nc: usize,
}

impl Projector {
    pub fn new(ops: &Operators, varpi: f64) -> Result<Projector> {
        let weights = ops.weights(varpi)?;
        let n = weights.len();
        let w = Csr::from_triplets(n, n, weights.iter().enumerate().map(|(i, &v)| (i, i, v)).collect());
        let lu = SparseLu::new(&saddle(&w, &ops.div))?;
        Ok(Projector { lu, weights, nc: n })
    }

    /// Projection and the potential `phi` of the removed part.
    pub fn project_with_potential(&self, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if f.len() != self.nc {
            return Err(Error::validation("field length does not match the mesh"));
        }
        let mut rhs: Vec<f64> = f.iter().zip(&self.weights).map(|(a, w)| a * w).collect();
        rhs.resize(self.lu.dim(), 0.0);
        let (x, res) = self.lu.solve_refined(&rhs)?;
        if !(res < 1e-9) {
            return Err(Error::solver("projection solve", res));
        }
        Ok((x[..self.nc].to_vec(), x[self.nc..].to_vec()))
    }

    pub fn project(&self, f: &[f64]) -> Result<Vec<f64>> {
        Ok(self.project_with_potential(f)?.0)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}
