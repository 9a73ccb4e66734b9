//! Time-periodic problems in Fourier form.
//!
//! Linear part: for a mode `e^{i k tau}` the fluid solves the Oseen-type
//! resolvent
//!
//! ```text
//! i k zeta0 W w + (A - lambda0 S1) w + B^T q = W f,   B w = g,   w|body = b
//! ```
//!
//! (`S1` the skew streamwise derivative). With boundary data `e_i` and no
//! forcing this gives the basis `h^(i)`, whose tractions form `K`, and the
//! body equation reduces to the `dim x dim` system with
//! `M = (omega^2 - k^2 zeta0^2) I + i k varpi K`.
//!
//! Nonlinear part: [`HarmonicBalance`] solves the full periodic
//! perturbation system about a steady state by Newton-GMRES on the
//! truncated Fourier series, the quadratic term evaluated on time samples.

use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dense;
use crate::linalg::gmres::{gmres, GmresOptions};
use crate::linalg::sparse::{Csr, SparseLu};
use crate::model::Params;
use crate::ops::Operators;
use crate::projection::saddle;
use crate::spectral::LinearizedOperator;
use crate::C64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Angular frequency of a `T`-periodic motion: `zeta = 2 pi / T`.
pub fn frequency_from_period(t: f64) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::validation(format!("period must be positive (got {t})")));
    }
    Ok(2.0 * std::f64::consts::PI / t)
}

/// Mode resolvent for fixed `(k, zeta0, lambda0)`, factorised once.
pub struct ModeResolvent<'a> {
    ops: &'a Operators,
    pub k: i32,
    pub zeta0: f64,
    pub lambda0: f64,
    /// `i k zeta0 W + A - lambda0 S1` on the coupled space (no body inertia).
    op: Csr<C64>,
    lu: SparseLu<C64>,
}

impl<'a> ModeResolvent<'a> {
    pub fn new(ops: &'a Operators, k: i32, zeta0: f64, lambda0: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::validation("mode index must be nonzero"));
        }
        if zeta0 == 0.0 {
            return Err(Error::validation("frequency must be nonzero"));
        }
        let nc = ops.n_coupled();
        let nf = ops.mesh.n_free();
        let s1 = ops.streamwise();
        let real = Csr::lin_comb(1.0, &ops.stiffness, -lambda0, &s1);
        let mut t: Vec<(usize, usize, C64)> = real.triplets().into_iter().map(|(r, c, v)| (r, c, C64::new(v, 0.0))).collect();
        let s = I * (k as f64 * zeta0);
        for i in 0..nf {
            t.push((i, i, s * ops.free_w[i]));
        }
        let op = Csr::from_triplets(nc, nc, t);
        let free: Vec<usize> = (0..nf).collect();
        let allp: Vec<usize> = (0..ops.n_pressure()).collect();
        let k_mat = saddle(&op.submatrix(&free, &free), &ops.div.to_complex().submatrix(&allp, &free));
        let lu = SparseLu::new(&k_mat)?;
        Ok(ModeResolvent {
            ops,
            k,
            zeta0,
            lambda0,
            op,
            lu,
        })
    }

    /// Solves with forcing field `f` (free entries used), constraint data
    /// `g` and body value `bdata`. Returns `(w, q)` with `w` coupled.
    pub fn solve(&self, f: Option<&[C64]>, g: Option<&[C64]>, bdata: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        let ops = self.ops;
        let nf = ops.mesh.n_free();
        let nc = ops.n_coupled();
        let np = ops.n_pressure();
        let mut wb = vec![C64::default(); nc];
        wb[nf..].copy_from_slice(bdata);
        let tb = self.op.matvec(&wb);
        let db = ops.div.to_complex().matvec(&wb);
        let mut rhs = vec![C64::default(); nf + np];
        for i in 0..nf {
            rhs[i] = -tb[i] + f.map_or(C64::default(), |f| f[i] * ops.free_w[i]);
        }
        for j in 0..np {
            rhs[nf + j] = -db[j] + g.map_or(C64::default(), |g| g[j]);
        }
        let x = self.lu.solve(&rhs)?;
        let mut w = x[..nf].to_vec();
        w.extend_from_slice(bdata);
        Ok((w, x[nf..].to_vec()))
    }

    /// Body rows of `(A - lambda0 S1) w + B^T q`.
    pub fn traction(&self, w: &[C64], q: &[C64]) -> Vec<C64> {
        let ops = self.ops;
        let nf = ops.mesh.n_free();
        let mut r: Vec<C64> = self.op.matvec(w);
        // the op carries i k zeta0 W only on free rows, so body rows are clean
        let bq = ops.div.to_complex().tmatvec(q);
        r.iter_mut().zip(&bq).for_each(|(a, b)| *a += b);
        r[nf..].to_vec()
    }

    /// Residual of the resolvent equations, relative to the data.
    pub fn residual(&self, w: &[C64], q: &[C64], f: Option<&[C64]>, g: Option<&[C64]>, bdata: &[C64]) -> f64 {
        let ops = self.ops;
        let nf = ops.mesh.n_free();
        let tw = self.op.matvec(w);
        let bq = ops.div.to_complex().tmatvec(q);
        let dw = ops.div.to_complex().matvec(w);
        let mut r2 = 0.0;
        let mut s2 = 0.0;
        for i in 0..nf {
            let fi = f.map_or(C64::default(), |f| f[i] * ops.free_w[i]);
            r2 += (tw[i] + bq[i] - fi).norm_sqr() / ops.free_w[i];
            s2 += (tw[i].norm_sqr() + bq[i].norm_sqr() + fi.norm_sqr()) / ops.free_w[i];
        }
        for (j, d) in dw.iter().enumerate() {
            let gj = g.map_or(C64::default(), |g| g[j]);
            r2 += (d - gj).norm_sqr();
            s2 += gj.norm_sqr();
        }
        for (i, b) in bdata.iter().enumerate() {
            r2 += (w[nf + i] - b).norm_sqr();
            s2 += b.norm_sqr();
        }
        (r2 / s2.max(1e-300)).sqrt()
    }
}

/// Convenience wrapper: one resolvent solve.
pub fn mode_resolvent(
    ops: &Operators,
    k: i32,
    zeta0: f64,
    lambda0: f64,
    rhs: Option<&[C64]>,
    bdata: &[C64],
) -> Result<(Vec<C64>, Vec<C64>)> {
    ModeResolvent::new(ops, k, zeta0, lambda0)?.solve(rhs, None, bdata)
}

/// `K` and the basis `(h^(i), p^(i))`.
pub struct TractionBasis {
    pub k_mat: Mat<C64>,
    pub h: Vec<Vec<C64>>,
    pub p: Vec<Vec<C64>>,
}

pub fn traction_basis(res: &ModeResolvent) -> Result<TractionBasis> {
    let d = res.ops.dim();
    let mut k_mat = Mat::<C64>::zeros(d, d);
    let mut h = Vec::with_capacity(d);
    let mut p = Vec::with_capacity(d);
    for i in 0..d {
        let mut e = vec![C64::default(); d];
        e[i] = C64::new(1.0, 0.0);
        let (w, q) = res.solve(None, None, &e)?;
        let t = res.traction(&w, &q);
        for j in 0..d {
            k_mat[(j, i)] = t[j];
        }
        h.push(w);
        p.push(q);
    }
    Ok(TractionBasis { k_mat, h, p })
}

pub fn traction_matrix(ops: &Operators, k: i32, zeta0: f64, lambda0: f64) -> Result<Mat<C64>> {
    Ok(traction_basis(&ModeResolvent::new(ops, k, zeta0, lambda0)?)?.k_mat)
}

#[derive(Clone, Debug)]
pub struct ResonanceMatrices {
    pub k: i32,
    pub k_mat: Mat<C64>,
    pub m_mat: Mat<C64>,
    pub sigma_min: f64,
    pub cond: f64,
}

/// `M = (omega^2 - k^2 zeta0^2) I + i k varpi K`. `varpi = 0` is allowed
/// here (the decoupled limit).
pub fn resonance_matrix(k: i32, zeta0: f64, params: &Params, k_mat: &Mat<C64>) -> Result<ResonanceMatrices> {
    let d = k_mat.nrows();
    let diag = params.omega_n_sq - (k as f64 * zeta0).powi(2);
    let c = I * (k as f64 * params.varpi);
    let m_mat = Mat::from_fn(d, d, |i, j| c * k_mat[(i, j)] + if i == j { C64::new(diag, 0.0) } else { C64::default() });
    let sv = dense::singular_values_c(&m_mat)?;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ResonanceMatrices {
        k,
        k_mat: k_mat.clone(),
        m_mat,
        sigma_min: smin,
        cond: if smin > 0.0 { smax / smin } else { f64::INFINITY },
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResonanceRow {
    pub k: i32,
    pub varpi: f64,
    pub sigma_min: f64,
    pub cond: f64,
}

/// Table over `ks x varpis`, `K` computed once per `k` (it does not
/// depend on `varpi`). Rows in `(k, varpi)` order.
pub fn resonance_scan(ops: &Operators, ks: &[i32], varpis: &[f64], zeta0: f64, params: &Params) -> Result<Vec<ResonanceRow>> {
    if ks.is_empty() || varpis.is_empty() {
        return Err(Error::validation("resonance scan needs nonempty k and varpi ranges"));
    }
    let ks_mat: Vec<Result<Mat<C64>>> = ks.par_iter().map(|&k| traction_matrix(ops, k, zeta0, params.lambda)).collect();
    let mut rows = Vec::with_capacity(ks.len() * varpis.len());
    for (&k, km) in ks.iter().zip(ks_mat) {
        let km = km?;
        for &vp in varpis {
            let p = Params { varpi: vp, ..*params };
            let r = resonance_matrix(k, zeta0, &p, &km)?;
            rows.push(ResonanceRow {
                k,
                varpi: vp,
                sigma_min: r.sigma_min,
                cond: r.cond,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// linear periodic solve

/// Data of one forced mode `k >= 1`: momentum forcing field `f`, constraint
/// data `g` (right side of `B w = g`) and body forcing `big_f`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ModeForcing {
    pub k: i32,
    pub f: Option<Vec<C64>>,
    pub g: Option<Vec<C64>>,
    pub big_f: Vec<C64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeSolution {
    pub k: i32,
    pub w: Vec<C64>,
    pub q: Vec<C64>,
    pub xi: Vec<C64>,
    pub residual: f64,
}

/// Modes `k = 1..K` of a real zero-mean signal; `-k` is the conjugate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeSet {
    pub zeta0: f64,
    pub modes: Vec<ModeSolution>,
}

/// Solves the linear periodic system mode by mode. Only modes listed in
/// `forcing` with `1 <= k <= k_trunc` carry data; all others are zero.
pub fn solve_periodic_linear(ops: &Operators, params: &Params, zeta0: f64, forcing: &[ModeForcing], k_trunc: usize) -> Result<ModeSet> {
    params.require_positive_varpi()?;
    let d = ops.dim();
    for m in forcing {
        if m.k == 0 {
            return Err(Error::validation("forcing must have zero mean (k = 0 present)"));
        }
        if m.k < 0 {
            return Err(Error::validation("give forcing for k >= 1 only; negative modes are conjugates"));
        }
        if m.big_f.len() != d {
            return Err(Error::validation("body forcing has the wrong dimension"));
        }
    }
    let modes: Vec<Result<ModeSolution>> = (1..=k_trunc as i32)
        .into_par_iter()
        .map(|k| {
            let data = forcing.iter().find(|m| m.k == k);
            match data {
                None => Ok(ModeSolution {
                    k,
                    w: vec![C64::default(); ops.n_coupled()],
                    q: vec![C64::default(); ops.n_pressure()],
                    xi: vec![C64::default(); d],
                    residual: 0.0,
                }),
                Some(m) => solve_mode(ops, params, zeta0, m),
            }
        })
        .collect();
    Ok(ModeSet {
        zeta0,
        modes: modes.into_iter().collect::<Result<_>>()?,
    })
}

fn solve_mode(ops: &Operators, params: &Params, zeta0: f64, m: &ModeForcing) -> Result<ModeSolution> {
    let d = ops.dim();
    let k = m.k;
    let res = ModeResolvent::new(ops, k, zeta0, params.lambda)?;
    let basis = traction_basis(&res)?;
    let zero = vec![C64::default(); d];
    let (wf, qf) = res.solve(m.f.as_deref(), m.g.as_deref(), &zero)?;
    let tf = res.traction(&wf, &qf);
    let rm = resonance_matrix(k, zeta0, params, &basis.k_mat)?;
    let rhs: Vec<C64> = (0..d).map(|i| m.big_f[i] - params.varpi * tf[i]).collect();
    let xi = dense::solve_c(&rm.m_mat, &rhs);
    let mut w = wf;
    let mut q = qf;
    for i in 0..d {
        let c = I * k as f64 * xi[i];
        dense::axpyc(c, &basis.h[i], &mut w);
        dense::axpyc(c, &basis.p[i], &mut q);
    }
    let bdata: Vec<C64> = xi.iter().map(|x| I * k as f64 * x).collect();
    let mut residual = res.residual(&w, &q, m.f.as_deref(), m.g.as_deref(), &bdata);
    // body row
    let t = res.traction(&w, &q);
    let diag = params.omega_n_sq - (k as f64 * zeta0).powi(2);
    let mut br = 0.0;
    let mut bs = 0.0;
    for i in 0..d {
        br += (diag * xi[i] + params.varpi * t[i] - m.big_f[i]).norm_sqr();
        bs += m.big_f[i].norm_sqr() + (diag * xi[i]).norm_sqr();
    }
    residual = residual.max((br / bs.max(1e-300)).sqrt());
    Ok(ModeSolution { k, w, q, xi, residual })
}

/// `sum_k c_k e^{i k tau} + conj`, sampled at `n` equispaced points, for
/// coefficient vectors `c_k` (`k = 1..`), each of length `len`.
fn synthesize(coef: &[(i32, &[C64])], len: usize, n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; len]; n];
    for (j, row) in out.iter_mut().enumerate() {
        let tau = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        for &(k, c) in coef {
            let e = C64::new(0.0, k as f64 * tau).exp();
            for (r, v) in row.iter_mut().zip(c) {
                *r += 2.0 * (v * e).re;
            }
        }
    }
    out
}

/// Residual of the time-domain linear system at `n` sample times:
/// `zeta0 W w_tau + (A - lambda0 S1) w + B^T q = W f`, `B w = g`,
/// `w|body = xi_tau`, `zeta0^2 xi_tautau + omega^2 xi + varpi T = F`.
/// Derivatives are taken of the Fourier series. Returns the largest
/// relative residual over the samples.
pub fn time_domain_residual(ops: &Operators, params: &Params, sol: &ModeSet, forcing: &[ModeForcing], n: usize) -> f64 {
    let nc = ops.n_coupled();
    let np = ops.n_pressure();
    let nf = ops.mesh.n_free();
    let d = ops.dim();
    let z = sol.zeta0;
    let dw: Vec<Vec<C64>> = sol.modes.iter().map(|m| m.w.iter().map(|v| I * m.k as f64 * v).collect()).collect();
    let xi_t: Vec<Vec<C64>> = sol.modes.iter().map(|m| m.xi.iter().map(|v| I * m.k as f64 * v).collect()).collect();
    let xi_tt: Vec<Vec<C64>> = sol.modes.iter().map(|m| m.xi.iter().map(|v| -((m.k * m.k) as f64) * v).collect()).collect();
    let w_s = synthesize(&sol.modes.iter().map(|m| (m.k, m.w.as_slice())).collect::<Vec<_>>(), nc, n);
    let q_s = synthesize(&sol.modes.iter().map(|m| (m.k, m.q.as_slice())).collect::<Vec<_>>(), np, n);
    let dw_s = synthesize(&sol.modes.iter().zip(&dw).map(|(m, v)| (m.k, v.as_slice())).collect::<Vec<_>>(), nc, n);
    let xi_s = synthesize(&sol.modes.iter().map(|m| (m.k, m.xi.as_slice())).collect::<Vec<_>>(), d, n);
    let xit_s = synthesize(&sol.modes.iter().zip(&xi_t).map(|(m, v)| (m.k, v.as_slice())).collect::<Vec<_>>(), d, n);
    let xitt_s = synthesize(&sol.modes.iter().zip(&xi_tt).map(|(m, v)| (m.k, v.as_slice())).collect::<Vec<_>>(), d, n);
    let zeros_c = vec![C64::default(); nc];
    let zeros_p = vec![C64::default(); np];
    let zeros_d = vec![C64::default(); d];
    let f_s = synthesize(&forcing.iter().map(|m| (m.k, m.f.as_deref().unwrap_or(&zeros_c))).collect::<Vec<_>>(), nc, n);
    let g_s = synthesize(&forcing.iter().map(|m| (m.k, m.g.as_deref().unwrap_or(&zeros_p))).collect::<Vec<_>>(), np, n);
    let bf_s = synthesize(&forcing.iter().map(|m| (m.k, if m.big_f.is_empty() { &zeros_d[..] } else { &m.big_f[..] })).collect::<Vec<_>>(), d, n);
    let op = Csr::lin_comb(1.0, &ops.stiffness, -params.lambda, &ops.streamwise());
    let mut worst = 0.0_f64;
    for j in 0..n {
        let aw = op.matvec(&w_s[j]);
        let bq = ops.div.tmatvec(&q_s[j]);
        let bw = ops.div.matvec(&w_s[j]);
        let (mut r2, mut s2) = (0.0, 0.0);
        for i in 0..nf {
            let wi = ops.free_w[i];
            let terms = [z * wi * dw_s[j][i], aw[i], bq[i], -wi * f_s[j][i]];
            let r: f64 = terms.iter().sum();
            r2 += r * r / wi;
            s2 += terms.iter().map(|t| t * t).sum::<f64>() / wi;
        }
        for p in 0..np {
            r2 += (bw[p] - g_s[j][p]).powi(2);
            s2 += g_s[j][p].powi(2);
        }
        for c in 0..d {
            let b = nf + c;
            let t = aw[b] + bq[b];
            let terms = [z * z * xitt_s[j][c], params.omega_n_sq * xi_s[j][c], params.varpi * t, -bf_s[j][c]];
            let r: f64 = terms.iter().sum();
            r2 += r * r;
            s2 += terms.iter().map(|t| t * t).sum::<f64>();
            let rb = w_s[j][b] - xit_s[j][c];
            r2 += rb * rb;
            s2 += xit_s[j][c].powi(2);
        }
        worst = worst.max((r2 / s2.max(1e-300)).sqrt());
    }
    worst
}

/// Least-squares slope of `log |xi_k| / |F_k|` against `log k`.
pub fn xi_decay_slope(sol: &ModeSet, forcing: &[ModeForcing]) -> Option<f64> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for m in &sol.modes {
        let Some(f) = forcing.iter().find(|f| f.k == m.k) else { continue };
        let fn_ = dense::normc(&f.big_f);
        let xn = dense::normc(&m.xi);
        if fn_ > 0.0 && xn > 0.0 {
            x.push((m.k as f64).ln());
            y.push((xn / fn_).ln());
        }
    }
    if x.len() < 2 {
        return None;
    }
    Some(dense::fit_powers(&x, &y, &[0, 1]).0[1])
}

// ---------------------------------------------------------------------------
// harmonic balance

/// Extra unknowns and equations beyond the Fourier modes.
#[derive(Clone, Debug)]
pub enum Closure {
    /// `mu = 0` and `zeta` fixed.
    Fixed,
    /// `zeta` free with the phase condition `Im sum_i m_i y_i W1_i = 0`.
    Phase { y: Vec<C64> },
    /// `mu` and `zeta` free with `2 pi sum_i m_i y_i W1_i = eps`, i.e. the
    /// two real side conditions of the bifurcation problem.
    Branch { y: Vec<C64>, eps: f64 },
}

impl Closure {
    /// Number of scalar unknowns (and equations) the closure adds.
    pub fn extra_unknowns(&self) -> usize {
        match self {
            Closure::Fixed => 0,
            Closure::Phase { .. } => 1,
            Closure::Branch { .. } => 2,
        }
    }
}

/// Unknowns of the periodic problem: modes `X_k = (V_k, P_k, chi_k)` for
/// `k = 0..=K` (k = 0 real), `mu` and `zeta`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HbState {
    pub modes: Vec<Vec<C64>>,
    pub mu: f64,
    pub zeta: f64,
}

impl HbState {
    pub fn zeros(n: usize, k_trunc: usize, zeta: f64) -> Self {
        HbState {
            modes: vec![vec![C64::default(); n]; k_trunc + 1],
            mu: 0.0,
            zeta,
        }
    }

    pub fn k_trunc(&self) -> usize {
        self.modes.len() - 1
    }

    /// `sqrt(sum_k |X_k|_M^2)` over the velocity and displacement.
    pub fn norm(&self, m_diag: &[f64]) -> f64 {
        self.modes.iter().map(|x| dense::wdotc(x, x, m_diag).re).sum::<f64>().sqrt()
    }

    /// `X(tau) = X_0 + 2 Re sum_k X_k e^{i k tau}`.
    pub fn at(&self, tau: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self.modes[0].iter().map(|v| v.re).collect();
        for (k, x) in self.modes.iter().enumerate().skip(1) {
            let e = C64::new(0.0, k as f64 * tau).exp();
            out.iter_mut().zip(x).for_each(|(o, v)| *o += 2.0 * (v * e).re);
        }
        out
    }

    /// Time shift by `s` in tau: `X_k -> X_k e^{i k s}`.
    pub fn shifted(&self, s: f64) -> Self {
        let mut out = self.clone();
        for (k, x) in out.modes.iter_mut().enumerate() {
            let e = C64::new(0.0, k as f64 * s).exp();
            x.iter_mut().for_each(|v| *v *= e);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HbOptions {
    pub samples: usize,
    pub newton_tol: f64,
    pub newton_abs: f64,
    pub max_newton: usize,
    pub gmres_rtol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
}

impl Default for HbOptions {
    fn default() -> Self {
        HbOptions {
            samples: 64,
            newton_tol: 1e-11,
            newton_abs: 1e-13,
            max_newton: 20,
            gmres_rtol: 1e-9,
            gmres_restart: 60,
            gmres_max_iter: 600,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HbReport {
    pub iterations: usize,
    /// Norm of the Fourier residual, relative to the size of its terms.
    pub residual: f64,
    pub residual_abs: f64,
    pub gmres_iterations: Vec<usize>,
}

/// Periodic perturbation system about a steady state `(u0, lambda0)`:
///
/// ```text
/// zeta M d_tau X + A0 X + mu S X + lambda N(V) + mu Q(u0, u0) = 0
/// ```
///
/// with `A0` the linearised block operator at `lambda0`, `S` its
/// lambda-derivative at frozen `u0`, `lambda = lambda0 + mu` and
/// `N(V) = Q(V, V)` the quadratic transport.
pub struct HarmonicBalance<'a> {
    pub ops: &'a Operators,
    pub lin: &'a LinearizedOperator,
    pub k_trunc: usize,
    pub opts: HbOptions,
    s_block: Csr<f64>,
    q00: Vec<f64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    precond: Vec<SparseLu<C64>>,
}

impl<'a> HarmonicBalance<'a> {
    /// Factorises the mode blocks at `(lambda0, zeta_pre)`. The block at
    /// `k = 1` is shifted by `pre_shift M` so it stays regular at a Hopf
    /// point.
    pub fn new(ops: &'a Operators, lin: &'a LinearizedOperator, k_trunc: usize, zeta_pre: f64, pre_shift: f64, opts: HbOptions) -> Result<Self> {
        if k_trunc == 0 {
            return Err(Error::validation("at least one Fourier mode is required"));
        }
        if opts.samples < 3 * k_trunc + 1 {
            return Err(Error::validation(format!(
                "{} time samples alias the quadratic term for {k_trunc} modes (need >= {})",
                opts.samples,
                3 * k_trunc + 1
            )));
        }
        let n = lin.size();
        let nc = lin.nc;
        let tj = ops.transport_jacobian(&lin.u0);
        let s_block = Csr::from_triplets(n, n, tj.triplets());
        let _ = nc;
        let q00 = ops.advection(&lin.u0);
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(opts.samples);
        let fft_inv = planner.plan_fft_inverse(opts.samples);
        let precond: Vec<Result<SparseLu<C64>>> = (0..=k_trunc)
            .into_par_iter()
            .map(|k| {
                let s = C64::new(if k == 1 { pre_shift } else { 0.0 }, k as f64 * zeta_pre);
                SparseLu::new(&block(lin, s))
            })
            .collect();
        Ok(HarmonicBalance {
            ops,
            lin,
            k_trunc,
            opts,
            s_block,
            q00,
            fft_fwd,
            fft_inv,
            precond: precond.into_iter().collect::<Result<_>>()?,
        })
    }

    pub fn block_size(&self) -> usize {
        self.lin.size()
    }

    /// For a base field held steady by a manufactured force at every
    /// lambda: the `mu Q(u0, u0)` forcing disappears.
    pub fn with_frozen_base(mut self) -> Self {
        self.q00.iter_mut().for_each(|v| *v = 0.0);
        self
    }

    /// Solve with the factorised mode block `k` (used by predictors).
    pub fn block_solve(&self, k: usize, rhs: &[C64]) -> Result<Vec<C64>> {
        self.precond[k].solve(rhs)
    }

    /// `Q(u0, u0)` as used in the mean-mode forcing.
    pub fn base_forcing(&self) -> &[f64] {
        &self.q00
    }

    /// Velocity samples `V(tau_j)` of the state.
    pub fn samples(&self, modes: &[Vec<C64>]) -> Vec<Vec<f64>> {
        let nc = self.lin.nc;
        let ns = self.opts.samples;
        let mut out = vec![vec![0.0; nc]; ns];
        let mut buf = vec![C64::default(); ns];
        for i in 0..nc {
            buf.iter_mut().for_each(|b| *b = C64::default());
            buf[0] = C64::new(modes[0][i].re, 0.0);
            for k in 1..modes.len() {
                buf[k] = modes[k][i];
                buf[ns - k] = modes[k][i].conj();
            }
            self.fft_inv.process(&mut buf);
            for j in 0..ns {
                out[j][i] = buf[j].re;
            }
        }
        out
    }

    /// Fourier coefficients `k = 0..=K` of sampled coupled vectors.
    fn analyse(&self, samples: &[Vec<f64>]) -> Vec<Vec<C64>> {
        let len = samples[0].len();
        let ns = self.opts.samples;
        let mut out = vec![vec![C64::default(); len]; self.k_trunc + 1];
        let mut buf = vec![C64::default(); ns];
        for i in 0..len {
            for j in 0..ns {
                buf[j] = C64::new(samples[j][i], 0.0);
            }
            self.fft_fwd.process(&mut buf);
            for k in 0..=self.k_trunc {
                out[k][i] = buf[k] / ns as f64;
            }
        }
        out
    }

    /// Fourier coefficients of `Q(a(tau), b(tau))` from samples.
    fn quad(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<C64>> {
        let ops = self.ops;
        let q: Vec<Vec<f64>> = a.par_iter().zip(b.par_iter()).map(|(a, b)| ops.transport(&ops.relative(a), &ops.extend(b))).collect();
        self.analyse(&q)
    }

    fn apply_block(&self, k: usize, zeta: f64, mu: f64, x: &[C64]) -> Vec<C64> {
        let l = self.lin;
        let mut y: Vec<C64> = vec![C64::default(); x.len()];
        crate_matvec_c(&l.a, x, &mut y);
        if mu != 0.0 {
            let mut sy = vec![C64::default(); x.len()];
            crate_matvec_c(&self.s_block, x, &mut sy);
            y.iter_mut().zip(&sy).for_each(|(a, b)| *a += mu * b);
        }
        let s = I * (k as f64 * zeta);
        for i in 0..x.len() {
            if l.m_diag[i] != 0.0 {
                y[i] += s * l.m_diag[i] * x[i];
            }
        }
        y
    }

    /// Fourier residual of the modes (without closure equations).
    pub fn residual_modes(&self, st: &HbState) -> Vec<Vec<C64>> {
        let nc = self.lin.nc;
        let lambda = self.lin.lambda0 + st.mu;
        let vs = self.samples(&st.modes);
        let qh = self.quad(&vs, &vs);
        (0..=self.k_trunc)
            .map(|k| {
                let mut r = self.apply_block(k, st.zeta, st.mu, &st.modes[k]);
                for i in 0..nc {
                    r[i] += lambda * qh[k][i];
                }
                if k == 0 && st.mu != 0.0 {
                    for i in 0..nc {
                        r[i] += st.mu * self.q00[i];
                    }
                }
                r
            })
            .collect()
    }

    /// Scale of the residual terms, for relative measures.
    fn term_scale(&self, st: &HbState) -> f64 {
        let md = &self.lin.m_diag;
        let mut s = 0.0;
        for (k, x) in st.modes.iter().enumerate() {
            let ax = self.apply_block(k, 0.0, 0.0, x);
            s += dual_norm_sq(&ax, md);
            let kx: Vec<C64> = x.iter().zip(md).map(|(v, m)| v * m * (k as f64 * st.zeta)).collect();
            s += dual_norm_sq(&kx, md);
        }
        s.sqrt()
    }

    fn closure_rows(&self, closure: &Closure, st: &HbState) -> Vec<f64> {
        let md = &self.lin.m_diag;
        let z = |y: &[C64]| -> C64 { y.iter().zip(&st.modes[1]).zip(md).map(|((a, b), m)| a * b * m).sum() };
        match closure {
            Closure::Fixed => vec![],
            Closure::Phase { y } => vec![z(y).im],
            Closure::Branch { y, eps } => {
                let v = 2.0 * std::f64::consts::PI * z(y);
                vec![v.re - eps, v.im]
            }
        }
    }

    fn pack(&self, modes: &[Vec<C64>], extra: &[f64]) -> Vec<f64> {
        let n = self.block_size();
        let mut out = Vec::with_capacity(n * (2 * self.k_trunc + 1) + extra.len());
        out.extend(modes[0].iter().map(|v| v.re));
        for m in &modes[1..] {
            out.extend(m.iter().map(|v| v.re));
            out.extend(m.iter().map(|v| v.im));
        }
        out.extend_from_slice(extra);
        out
    }

    fn unpack(&self, x: &[f64]) -> (Vec<Vec<C64>>, Vec<f64>) {
        let n = self.block_size();
        let mut modes = Vec::with_capacity(self.k_trunc + 1);
        modes.push(x[..n].iter().map(|v| C64::new(*v, 0.0)).collect());
        for k in 1..=self.k_trunc {
            let o = n + 2 * (k - 1) * n;
            modes.push((0..n).map(|i| C64::new(x[o + i], x[o + n + i])).collect());
        }
        let used = n * (2 * self.k_trunc + 1);
        (modes, x[used..].to_vec())
    }

    /// Jacobian action at `st` on a packed direction.
    fn jacobian(&self, st: &HbState, vs: &[Vec<f64>], closure: &Closure, dx: &[f64]) -> Vec<f64> {
        let nc = self.lin.nc;
        let (dm, dextra) = self.unpack(dx);
        let (dmu, dzeta) = match closure {
            Closure::Fixed => (0.0, 0.0),
            Closure::Phase { .. } => (0.0, dextra[0]),
            Closure::Branch { .. } => (dextra[0], dextra[1]),
        };
        let lambda = self.lin.lambda0 + st.mu;
        let dvs = self.samples(&dm);
        let ops = self.ops;
        let q: Vec<Vec<f64>> = (0..vs.len())
            .into_par_iter()
            .map(|j| {
                let mut out = ops.transport(&ops.relative(&vs[j]), &ops.extend(&dvs[j]));
                ops.transport_add(&ops.relative(&dvs[j]), &ops.extend(&vs[j]), 1.0, &mut out);
                out
            })
            .collect();
        let qh = self.analyse(&q);
        let need_q = dmu != 0.0;
        let q_base = if need_q { Some(self.quad(vs, vs)) } else { None };
        let mut res = Vec::with_capacity(self.k_trunc + 1);
        for k in 0..=self.k_trunc {
            let mut r = self.apply_block(k, st.zeta, st.mu, &dm[k]);
            for i in 0..nc {
                r[i] += lambda * qh[k][i];
            }
            if dzeta != 0.0 {
                let s = I * (k as f64 * dzeta);
                for i in 0..r.len() {
                    if self.lin.m_diag[i] != 0.0 {
                        r[i] += s * self.lin.m_diag[i] * st.modes[k][i];
                    }
                }
            }
            if dmu != 0.0 {
                let mut sx = vec![C64::default(); r.len()];
                crate_matvec_c(&self.s_block, &st.modes[k], &mut sx);
                let qb = q_base.as_ref().unwrap();
                for i in 0..r.len() {
                    r[i] += dmu * sx[i];
                }
                for i in 0..nc {
                    r[i] += dmu * qb[k][i];
                    if k == 0 {
                        r[i] += dmu * self.q00[i];
                    }
                }
            }
            res.push(r);
        }
        let md = &self.lin.m_diag;
        let dz = |y: &[C64]| -> C64 { y.iter().zip(&dm[1]).zip(md).map(|((a, b), m)| a * b * m).sum() };
        let extra = match closure {
            Closure::Fixed => vec![],
            Closure::Phase { y } => vec![dz(y).im],
            Closure::Branch { y, .. } => {
                let v = 2.0 * std::f64::consts::PI * dz(y);
                vec![v.re, v.im]
            }
        };
        self.pack(&res, &extra)
    }

    fn precondition(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (m, extra) = self.unpack(x);
        let out: Vec<Result<Vec<C64>>> = m.par_iter().enumerate().map(|(k, r)| self.precond[k].solve(r)).collect();
        let mut out: Vec<Vec<C64>> = out.into_iter().collect::<Result<_>>()?;
        // the k = 0 block is real: drop round-off in the imaginary part
        out[0].iter_mut().for_each(|v| v.im = 0.0);
        Ok(self.pack(&out, &extra))
    }

    /// Newton iteration from `init`.
    pub fn solve(&self, init: HbState, closure: &Closure) -> Result<(HbState, HbReport)> {
        if init.k_trunc() != self.k_trunc || init.modes.iter().any(|m| m.len() != self.block_size()) {
            return Err(Error::validation("initial state does not match the truncation"));
        }
        let mut st = init;
        st.modes[0].iter_mut().for_each(|v| v.im = 0.0);
        let mut gm_its = Vec::new();
        let mut last = f64::INFINITY;
        let mut stalls = 0;
        for it in 0..=self.opts.max_newton {
            let rm = self.residual_modes(&st);
            let rc = self.closure_rows(closure, &st);
            let r = self.pack(&rm, &rc);
            let rn = dense::norm(&r);
            let rabs = residual_norm(&rm, &self.lin.m_diag) + dense::norm(&rc);
            let scale = self.term_scale(&st);
            let rel = rabs / scale.max(1e-300);
            if rabs <= self.opts.newton_abs || rel <= self.opts.newton_tol {
                return Ok((
                    st,
                    HbReport {
                        iterations: it,
                        residual: if scale > 0.0 { rel } else { 0.0 },
                        residual_abs: rabs,
                        gmres_iterations: gm_its,
                    },
                ));
            }
            if it == self.opts.max_newton {
                break;
            }
            if rn >= 0.9 * last {
                stalls += 1;
                if stalls >= 3 {
                    return Err(Error::solver("harmonic-balance Newton stagnated", rel));
                }
            } else {
                stalls = 0;
            }
            last = rn;
            let vs = self.samples(&st.modes);
            let apply = |d: &[f64]| Ok(self.jacobian(&st, &vs, closure, d));
            let pre = |d: &[f64]| self.precondition(d);
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let (dx, info) = gmres(
                &apply,
                &pre,
                &rhs,
                None,
                GmresOptions {
                    restart: self.opts.gmres_restart,
                    max_iter: self.opts.gmres_max_iter,
                    rtol: self.opts.gmres_rtol,
                    atol: 0.0,
                },
            )?;
            gm_its.push(info.iterations);
            let (dm, dextra) = self.unpack(&dx);
            for (x, d) in st.modes.iter_mut().zip(&dm) {
                x.iter_mut().zip(d).for_each(|(a, b)| *a += b);
            }
            st.modes[0].iter_mut().for_each(|v| v.im = 0.0);
            match closure {
                Closure::Fixed => {}
                Closure::Phase { .. } => st.zeta += dextra[0],
                Closure::Branch { .. } => {
                    st.mu += dextra[0];
                    st.zeta += dextra[1];
                }
            }
        }
        let rm = self.residual_modes(&st);
        Err(Error::solver("harmonic-balance Newton did not converge", residual_norm(&rm, &self.lin.m_diag)))
    }

    /// Largest residual of the full periodic system over the time samples,
    /// relative to the size of its terms; the quadratic term is evaluated
    /// pointwise on the reconstructed signal.
    pub fn time_residual(&self, st: &HbState) -> f64 {
        let l = self.lin;
        let ns = self.opts.samples;
        let n = l.size();
        let lambda = l.lambda0 + st.mu;
        // full-vector samples of X and d_tau X
        let dmodes: Vec<Vec<C64>> = st.modes.iter().enumerate().map(|(k, x)| x.iter().map(|v| I * k as f64 * v).collect()).collect();
        let xs = sample_full(&st.modes, n, ns);
        let dxs = sample_full(&dmodes, n, ns);
        let ops = self.ops;
        let md = &l.m_diag;
        (0..ns)
            .into_par_iter()
            .map(|j| {
                let x = &xs[j];
                let ax = l.a.matvec(x);
                let sx = self.s_block.matvec(x);
                let v = &x[..l.nc];
                let q = ops.advection(v);
                let mut r2 = 0.0;
                let mut s2 = 0.0;
                for i in 0..n {
                    let mut terms = [st.zeta * md[i] * dxs[j][i], ax[i], st.mu * sx[i], 0.0, 0.0];
                    if i < l.nc {
                        terms[3] = lambda * q[i];
                        terms[4] = st.mu * self.q00[i];
                    }
                    let r: f64 = terms.iter().sum();
                    let s: f64 = terms.iter().map(|t| t * t).sum();
                    let w = if md[i] > 0.0 { 1.0 / md[i] } else { 1.0 };
                    r2 += w * r * r;
                    s2 += w * s;
                }
                if s2 == 0.0 {
                    0.0
                } else {
                    (r2 / s2).sqrt()
                }
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Per-mode norms `|X_k|_M`, `k = 0..=K`.
    pub fn mode_norms(&self, st: &HbState) -> Vec<f64> {
        st.modes.iter().map(|x| dense::wdotc(x, x, &self.lin.m_diag).re.sqrt()).collect()
    }
}

fn sample_full(modes: &[Vec<C64>], n: usize, ns: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n]; ns];
    for (j, row) in out.iter_mut().enumerate() {
        let tau = 2.0 * std::f64::consts::PI * j as f64 / ns as f64;
        for (k, x) in modes.iter().enumerate() {
            let e = C64::new(0.0, k as f64 * tau).exp();
            let f = if k == 0 { 1.0 } else { 2.0 };
            for (r, v) in row.iter_mut().zip(x) {
                *r += f * (v * e).re;
            }
        }
    }
    out
}

fn crate_matvec_c(a: &Csr<f64>, x: &[C64], y: &mut [C64]) {
    for r in 0..a.nrows {
        let mut s = C64::default();
        for p in a.indptr[r]..a.indptr[r + 1] {
            s += a.data[p] * x[a.indices[p]];
        }
        y[r] = s;
    }
}

fn dual_norm_sq(r: &[C64], md: &[f64]) -> f64 {
    r.iter().zip(md).map(|(v, m)| if *m > 0.0 { v.norm_sqr() / m } else { v.norm_sqr() }).sum()
}

fn residual_norm(rm: &[Vec<C64>], md: &[f64]) -> f64 {
    rm.iter().map(|r| dual_norm_sq(r, md)).sum::<f64>().sqrt()
}

/// `A + s M` as a complex sparse matrix.
pub(crate) fn block(l: &LinearizedOperator, s: C64) -> Csr<C64> {
    let mut t: Vec<(usize, usize, C64)> = l.a.triplets().into_iter().map(|(r, c, v)| (r, c, C64::new(v, 0.0))).collect();
    for (i, &m) in l.m_diag.iter().enumerate() {
        if m != 0.0 {
            t.push((i, i, s * m));
        }
    }
    let n = l.size();
    Csr::from_triplets(n, n, t)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicOutcome {
    pub state: HbState,
    pub report: HbReport,
    pub time_residual: f64,
    /// `|X|_M` of the converged state.
    pub norm: f64,
    pub trivial: bool,
}

/// Harmonic-balance solve of the periodic perturbation problem about the
/// steady state behind `lin`, at fixed `zeta` (`closure = Fixed`) or with
/// free frequency and a phase condition. The zero solution counts as
/// trivial when its norm is below `1e-8`.
pub fn solve_periodic_nonlinear(
    ops: &Operators,
    lin: &LinearizedOperator,
    init: HbState,
    closure: Closure,
    opts: HbOptions,
) -> Result<PeriodicOutcome> {
    if lin.lambda0 < 0.0 {
        return Err(Error::validation("lambda must be nonnegative"));
    }
    let k = init.k_trunc();
    let hb = HarmonicBalance::new(ops, lin, k, init.zeta, 0.0, opts)?;
    let (state, report) = hb.solve(init, &closure)?;
    let time_residual = hb.time_residual(&state);
    let norm = state.norm(&lin.m_diag);
    Ok(PeriodicOutcome {
        trivial: norm < 1e-8,
        state,
        report,
        time_residual,
        norm,
    })
}

/// Random small initial modes `k = 1..=K` with `|X|_M = amp` (pressure
/// entries zero, velocity solenoidal not enforced: Newton restores it).
pub fn random_modes(lin: &LinearizedOperator, k_trunc: usize, zeta: f64, amp: f64, rng: &mut impl rand::Rng) -> HbState {
    let n = lin.size();
    let mut st = HbState::zeros(n, k_trunc, zeta);
    for (k, x) in st.modes.iter_mut().enumerate() {
        for (i, v) in x.iter_mut().enumerate() {
            if lin.m_diag[i] == 0.0 {
                continue;
            }
            let decay = 1.0 / (1.0 + k as f64).powi(2);
            *v = C64::new(rng.random_range(-1.0..1.0), if k == 0 { 0.0 } else { rng.random_range(-1.0..1.0) }) * decay;
        }
    }
    let nrm = st.norm(&lin.m_diag);
    for x in st.modes.iter_mut() {
        x.iter_mut().for_each(|v| *v *= amp / nrm);
    }
    st
}
