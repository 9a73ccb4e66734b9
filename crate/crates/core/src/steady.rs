//! Steady flow past the held body, its parameter sensitivity, the two
//! energy thresholds and the null-space check of the steady linearisation.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{CoupledField, PressureField};
use crate::linalg::dense::{self, norm};
use crate::linalg::eigen::{krylov_eigs, KrylovOptions, Want};
use crate::linalg::sparse::{push_block, Csr, SparseLu};
use crate::model::Params;
use crate::ops::Operators;
use crate::projection::saddle;
use crate::C64;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SteadyState {
    pub lambda: f64,
    /// Total velocity; the body slots hold `e_1`.
    pub u0: CoupledField,
    pub p0: PressureField,
    pub chi0: Vec<f64>,
    /// Hydrodynamic reaction on the body (stress plus transport remainder).
    pub reaction: Vec<f64>,
    /// Transport part of `reaction`.
    pub convective_reaction: Vec<f64>,
    pub residual: f64,
    pub newton_iterations: usize,
    /// `d u0 / d lambda`, zero on the body.
    pub du0_dlambda: Option<CoupledField>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 30 }
    }
}

fn free_cols(ops: &Operators) -> Vec<usize> {
    (0..ops.mesh.n_free()).collect()
}

/// Weak steady residual on the free rows and the continuity rows.
pub fn steady_residual(ops: &Operators, lambda: f64, u: &[f64], p: &[f64]) -> Vec<f64> {
    let nf = ops.mesh.n_free();
    let mut r = ops.stiffness.matvec(u);
    ops.div.tmatvec(p).iter().zip(r.iter_mut()).for_each(|(b, r)| *r += b);
    if lambda != 0.0 {
        let adv = ops.advection(u);
        r.iter_mut().zip(&adv).for_each(|(r, a)| *r += lambda * a);
    }
    r.truncate(nf);
    r.extend(ops.div.matvec(u));
    r
}

/// Jacobian of [`steady_residual`] with respect to (free velocity, pressure).
pub fn steady_jacobian(ops: &Operators, lambda: f64, u: &[f64]) -> Csr<f64> {
    let top = linear_operator(ops, lambda, u);
    let free = free_cols(ops);
    let top_f = top.submatrix(&free, &free);
    let div_f = ops.div.submatrix(&(0..ops.n_pressure()).collect::<Vec<_>>(), &free);
    saddle(&top_f, &div_f)
}

/// `A + lambda * d(advection)/du` at `u0` on the coupled space.
pub fn linear_operator(ops: &Operators, lambda: f64, u0: &[f64]) -> Csr<f64> {
    if lambda == 0.0 {
        return ops.stiffness.clone();
    }
    Csr::lin_comb(1.0, &ops.stiffness, lambda, &ops.transport_jacobian(u0))
}

fn assemble_state(ops: &Operators, params: &Params, u: Vec<f64>, p: Vec<f64>, residual: f64, it: usize) -> SteadyState {
    let (reaction, conv) = ops.reaction(&u, &p, params.lambda);
    let chi0 = reaction.iter().map(|r| -params.varpi / params.omega_n_sq * r).collect();
    SteadyState {
        lambda: params.lambda,
        u0: CoupledField { values: u, dim: ops.dim() },
        p0: PressureField { values: p },
        chi0,
        reaction,
        convective_reaction: conv,
        residual,
        newton_iterations: it,
        du0_dlambda: None,
    }
}

/// Linearised (Oseen) flow about the undisturbed stream.
pub fn oseen(ops: &Operators, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let nf = ops.mesh.n_free();
    let ub = ops.body_stream();
    let mut a = vec![0.0; ops.n_faces()];
    for v in &mut a[ops.mesh.face_offset[0]..ops.mesh.face_offset[1]] {
        *v = -1.0;
    }
    let top = Csr::lin_comb(1.0, &ops.stiffness, lambda, &ops.transport_matrix(&a));
    let free = free_cols(ops);
    let allp: Vec<usize> = (0..ops.n_pressure()).collect();
    let k = saddle(&top.submatrix(&free, &free), &ops.div.submatrix(&allp, &free));
    let lu = SparseLu::new(&k)?;
    let tb = top.matvec(&ub);
    let db = ops.div.matvec(&ub);
    let mut rhs: Vec<f64> = tb[..nf].iter().map(|v| -v).collect();
    rhs.extend(db.iter().map(|v| -v));
    let x = lu.solve(&rhs)?;
    let mut u = x[..nf].to_vec();
    u.extend_from_slice(&ub[nf..]);
    Ok((u, x[nf..].to_vec()))
}

/// Newton solve of the steady problem. `guess` is (velocity, pressure).
pub fn solve_steady(
    params: &Params,
    ops: &Operators,
    guess: Option<(&[f64], &[f64])>,
    opts: NewtonOptions,
) -> Result<SteadyState> {
    params.require_positive_varpi()?;
    if params.dim != ops.dim() {
        return Err(Error::validation("params.dim does not match the mesh"));
    }
    let lambda = params.lambda;
    let nf = ops.mesh.n_free();
    let (mut u, mut p) = match guess {
        Some((u, p)) => {
            if u.len() != ops.n_coupled() || p.len() != ops.n_pressure() {
                return Err(Error::validation("initial guess does not match the mesh"));
            }
            let mut u = u.to_vec();
            u[nf..].copy_from_slice(&ops.body_stream()[nf..]);
            (u, p.to_vec())
        }
        None => oseen(ops, lambda)?,
    };
    let mut res = norm(&steady_residual(ops, lambda, &u, &p));
    let mut it = 0;
    while res > opts.tol {
        if it >= opts.max_iter {
            return Err(Error::solver("steady Newton stagnated", res));
        }
        let j = steady_jacobian(ops, lambda, &u);
        let lu = SparseLu::new(&j)?;
        let r = steady_residual(ops, lambda, &u, &p);
        let dx = lu.solve(&r)?;
        for i in 0..nf {
            u[i] -= dx[i];
        }
        for (pi, d) in p.iter_mut().zip(&dx[nf..]) {
            *pi -= d;
        }
        it += 1;
        let new = norm(&steady_residual(ops, lambda, &u, &p));
        if !new.is_finite() {
            return Err(Error::solver("steady Newton diverged", new));
        }
        res = new;
    }
    Ok(assemble_state(ops, params, u, p, res, it))
}

/// `d(u0, p0)/d lambda` at a converged state.
pub fn sensitivity(ops: &Operators, s: &SteadyState) -> Result<(Vec<f64>, Vec<f64>)> {
    let nf = ops.mesh.n_free();
    let u = &s.u0.values;
    let j = steady_jacobian(ops, s.lambda, u);
    let lu = SparseLu::new(&j)?;
    let g = ops.advection(u);
    let mut rhs: Vec<f64> = g[..nf].iter().map(|v| -v).collect();
    rhs.resize(nf + ops.n_pressure(), 0.0);
    let x = lu.solve(&rhs)?;
    let mut du = x[..nf].to_vec();
    du.resize(ops.n_coupled(), 0.0);
    Ok((du, x[nf..].to_vec()))
}

/// Predictor-corrector continuation over an increasing grid of `lambda`.
pub fn continue_steady(params: &Params, ops: &Operators, lambdas: &[f64], opts: NewtonOptions) -> Result<Vec<SteadyState>> {
    if lambdas.is_empty() {
        return Err(Error::validation("empty lambda grid"));
    }
    if lambdas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::validation("lambda grid must be nondecreasing"));
    }
    let mut out: Vec<SteadyState> = Vec::with_capacity(lambdas.len());
    let mut prev: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    for &lam in lambdas {
        let pl = params.with_lambda(lam);
        let guess = prev.as_ref().map(|(l0, u, p, du, dp)| {
            let d = lam - l0;
            let ug: Vec<f64> = u.iter().zip(du).map(|(a, b)| a + d * b).collect();
            let pg: Vec<f64> = p.iter().zip(dp).map(|(a, b)| a + d * b).collect();
            (ug, pg)
        });
        let st = match &guess {
            Some((u, p)) => solve_steady(&pl, ops, Some((u, p)), opts),
            None => solve_steady(&pl, ops, None, opts),
        };
        let mut st = st.map_err(|e| {
            let last = out.last().map(|s| s.lambda);
            Error::solver(
                format!("continuation failed at lambda = {lam} (last good: {last:?}): {e}"),
                f64::NAN,
            )
        })?;
        let (du, dp) = sensitivity(ops, &st)?;
        prev = Some((lam, st.u0.values.clone(), st.p0.values.clone(), du.clone(), dp));
        st.du0_dlambda = Some(CoupledField { values: du, dim: ops.dim() });
        out.push(st);
    }
    Ok(out)
}

/// `omega^2 chi0 + varpi * reaction`, zero for a consistent state.
pub fn closure_defect(ops: &Operators, params: &Params, s: &SteadyState) -> Vec<f64> {
    let (r, _) = ops.reaction(&s.u0.values, &s.p0.values, s.lambda);
    s.chi0.iter().zip(&r).map(|(c, r)| params.omega_n_sq * c + params.varpi * r).collect()
}

// ---------------------------------------------------------------------------
// thresholds

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Finite(f64),
    /// The quadratic form never helps the instability: no restriction.
    Unbounded,
}

impl Threshold {
    pub fn value(&self) -> f64 {
        match self {
            Threshold::Finite(v) => *v,
            Threshold::Unbounded => f64::INFINITY,
        }
    }

    fn from_theta(theta: f64) -> Threshold {
        if theta > 0.0 {
            Threshold::Finite(1.0 / theta)
        } else {
            Threshold::Unbounded
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Thresholds {
    pub lambda1: Threshold,
    pub lambda2: Threshold,
    /// Largest Rayleigh quotients, `1/lambda` when positive.
    pub theta1: f64,
    pub theta2: f64,
}

impl Thresholds {
    pub fn gamma(&self, lambda: f64) -> f64 {
        1.0 - lambda / self.lambda2.value()
    }
}

/// Symmetric part of `-(w - sigma) . grad u0` tested with `w`.
pub fn threshold_form(ops: &Operators, u0: &[f64]) -> Csr<f64> {
    let c = ops.transport_jacobian(u0);
    let ct = c.transpose();
    Csr::lin_comb(-0.5, &c, -0.5, &ct)
}

/// Largest `theta` with `F x = theta A x` on the discretely solenoidal
/// subspace of the columns `cols`.
fn max_rayleigh(ops: &Operators, form: &Csr<f64>, cols: &[usize], dense_limit: usize) -> Result<f64> {
    let a = ops.stiffness.submatrix(cols, cols);
    let f = form.submatrix(cols, cols);
    let allp: Vec<usize> = (0..ops.n_pressure()).collect();
    let b = ops.div.submatrix(&allp, cols);
    if f.data.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    if cols.len() <= dense_limit {
        let (th, _) = reduced_pencil(&a, &f, &b)?;
        return Ok(*th.last().unwrap());
    }
    let k = saddle(&a, &b);
    let lu = SparseLu::new(&k)?;
    let n = cols.len();
    let np = b.nrows;
    let op = |x: &[C64]| -> Result<Vec<C64>> {
        let xr = dense::re(x);
        let xi = dense::im(x);
        let mut out = Vec::with_capacity(n);
        let mut parts = Vec::new();
        for v in [xr, xi] {
            let mut rhs = f.matvec(&v);
            rhs.resize(n + np, 0.0);
            parts.push(lu.solve(&rhs)?);
        }
        for i in 0..n {
            out.push(C64::new(parts[0][i], parts[1][i]));
        }
        Ok(out)
    };
    let ip = |x: &[C64], y: &[C64]| -> C64 {
        let ay_r = a.matvec(&dense::re(y));
        let ay_i = a.matvec(&dense::im(y));
        x.iter()
            .enumerate()
            .map(|(i, xi)| xi.conj() * C64::new(ay_r[i], ay_i[i]))
            .sum()
    };
    // start inside the constraint set
    let seed: Vec<f64> = (0..n).map(|i| ((i * 7919 % 101) as f64 / 101.0) - 0.5).collect();
    let mut rhs = f.matvec(&seed);
    rhs.resize(n + np, 0.0);
    let s0 = lu.solve(&rhs)?;
    let start = dense::to_complex(&s0[..n]);
    let mut opts = KrylovOptions::new(3);
    opts.tol = 1e-11;
    let pairs = krylov_eigs(&op, &ip, start, Want::LargestReal, opts)?;
    Ok(pairs.iter().map(|p| p.theta.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Dense reduction of `F x = theta A x` to the null space of `B`.
pub fn reduced_pencil(a: &Csr<f64>, f: &Csr<f64>, b: &Csr<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let bd = dense::mat_from_rows(&b.to_dense());
    let z = dense::null_space(&bd, 1e-11)?;
    let ad = dense::mat_from_rows(&a.to_dense());
    let fd = dense::mat_from_rows(&f.to_dense());
    let ar = z.transpose() * &ad * &z;
    let fr = z.transpose() * &fd * &z;
    let ar = Mat::from_fn(ar.nrows(), ar.ncols(), |i, j| 0.5 * (ar[(i, j)] + ar[(j, i)]));
    let fr = Mat::from_fn(fr.nrows(), fr.ncols(), |i, j| 0.5 * (fr[(i, j)] + fr[(j, i)]));
    let (th, y) = dense::sym_gen_eig(&fr, &ar)?;
    Ok((th, &z * &y))
}

/// Thresholds for an arbitrary base field `u0` (total velocity).
/// `dense_limit` switches to the dense path for small problems.
pub fn thresholds_for_field(ops: &Operators, u0: &[f64], dense_limit: usize) -> Result<Thresholds> {
    let form = threshold_form(ops, u0);
    let all: Vec<usize> = (0..ops.n_coupled()).collect();
    let free: Vec<usize> = (0..ops.mesh.n_free()).collect();
    let (t1, t2) = rayon::join(
        || max_rayleigh(ops, &form, &free, dense_limit),
        || max_rayleigh(ops, &form, &all, dense_limit),
    );
    let (t1, t2) = (t1?, t2?);
    Ok(Thresholds {
        lambda1: Threshold::from_theta(t1),
        lambda2: Threshold::from_theta(t2),
        theta1: t1,
        theta2: t2,
    })
}

pub fn compute_thresholds(ops: &Operators, s: &SteadyState) -> Result<Thresholds> {
    thresholds_for_field(ops, &s.u0.values, 1500)
}

// ---------------------------------------------------------------------------
// null-space check of the steady linearisation

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NullSpaceReport {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub threshold: f64,
    pub invertible: bool,
}

/// Steady linearisation with the spring: unknowns are the free velocity,
/// the pressure and the body displacement; the body velocity is zero.
pub fn steady_linearization(ops: &Operators, params: &Params, s: &SteadyState) -> Result<Csr<f64>> {
    params.require_positive_varpi()?;
    let lin = linear_operator(ops, s.lambda, &s.u0.values);
    let nf = ops.mesh.n_free();
    let np = ops.n_pressure();
    let d = ops.dim();
    let free: Vec<usize> = (0..nf).collect();
    let allp: Vec<usize> = (0..np).collect();
    let rows: Vec<usize> = (0..ops.n_coupled()).collect();
    let lf = lin.submatrix(&rows, &free);
    let bt = ops.div.transpose();
    let bf = ops.div.submatrix(&allp, &free);
    let c = params.spring_weight();
    let mut t = Vec::new();
    // momentum rows (free and body) then continuity
    push_block(&mut t, &lf.submatrix(&free, &free.iter().copied().collect::<Vec<_>>()), 0, 0, 1.0);
    push_block(&mut t, &bt.submatrix(&free, &allp), 0, nf, 1.0);
    push_block(&mut t, &bf, nf, 0, 1.0);
    let body_rows: Vec<usize> = (nf..nf + d).collect();
    push_block(&mut t, &lf.submatrix(&body_rows, &free), nf + np, 0, 1.0);
    push_block(&mut t, &bt.submatrix(&body_rows, &allp), nf + np, nf, 1.0);
    for k in 0..d {
        t.push((nf + np + k, nf + np + k, c));
    }
    let n = nf + np + d;
    Ok(Csr::from_triplets(n, n, t))
}

/// Extreme singular values of a square sparse matrix: inverse iteration
/// on `H^T H` for the smallest, power iteration for the largest.
pub fn extreme_singular_values(h: &Csr<f64>) -> Result<(f64, f64)> {
    let n = h.nrows;
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 31 % 17) as f64) / 17.0).collect();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut smax = 0.0;
    for _ in 0..500 {
        let y = h.tmatvec(&h.matvec(&x));
        let ny = norm(&y);
        if ny == 0.0 {
            break;
        }
        let new = ny.sqrt();
        x = y.iter().map(|v| v / ny).collect();
        if (new - smax).abs() <= 1e-12 * new {
            smax = new;
            break;
        }
        smax = new;
    }
    let lu = match SparseLu::new(h) {
        Ok(lu) => lu,
        Err(_) => return Ok((0.0, smax)),
    };
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 - ((i * 13 % 7) as f64) / 7.0).collect();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut smin = f64::INFINITY;
    for _ in 0..500 {
        let y = match lu.solve_transpose(&x).and_then(|z| lu.solve(&z)) {
            Ok(y) => y,
            Err(_) => return Ok((0.0, smax)),
        };
        // y = (H^T H)^{-1} x
        let ny = norm(&y);
        let new = (1.0 / ny).sqrt();
        x = y.iter().map(|v| v / ny).collect();
        if (new - smin).abs() <= 1e-14 * new {
            smin = new;
            break;
        }
        smin = new;
    }
    Ok((smin, smax))
}

pub fn check_h1prime(ops: &Operators, params: &Params, s: &SteadyState, rel_threshold: f64) -> Result<NullSpaceReport> {
    let h = steady_linearization(ops, params, s)?;
    let (smin, smax) = extreme_singular_values(&h)?;
    Ok(NullSpaceReport {
        sigma_min: smin,
        sigma_max: smax,
        threshold: rel_threshold,
        invertible: smin > rel_threshold * smax,
    })
}

/// The `lambda` at which `lambda = frac * lambda2(u0(lambda))`, by
/// regula falsi on `g(lambda) = lambda - frac * lambda2`. Returns the
/// steady state there and its thresholds.
pub fn threshold_fraction(params: &Params, ops: &Operators, frac: f64, opts: NewtonOptions) -> Result<(SteadyState, Thresholds)> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::validation("fraction of lambda2 must lie in (0, 1)"));
    }
    let eval = |lam: f64, guess: Option<&SteadyState>| -> Result<(SteadyState, Thresholds, f64)> {
        let pl = params.with_lambda(lam);
        let s = match guess {
            Some(g) => solve_steady(&pl, ops, Some((&g.u0.values, &g.p0.values)), opts)?,
            None => solve_steady(&pl, ops, None, opts)?,
        };
        let t = compute_thresholds(ops, &s)?;
        let g = lam - frac * t.lambda2.value();
        Ok((s, t, g))
    };
    let (s0, t0, g0) = eval(0.0, None)?;
    if !t0.lambda2.value().is_finite() {
        return Err(Error::solver("lambda2 is unbounded at lambda = 0", f64::NAN));
    }
    let mut a = (0.0, g0);
    let mut hi = frac * t0.lambda2.value();
    let mut best = (s0, t0, g0);
    let mut b = loop {
        let (s, t, g) = eval(hi, Some(&best.0))?;
        if !g.is_finite() {
            return Err(Error::solver("lambda2 is unbounded along the branch", f64::NAN));
        }
        let done = g >= 0.0;
        best = (s, t, g);
        if done {
            break (hi, g);
        }
        a = (hi, g);
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::solver("no lambda below 1e6 reaches the requested fraction", g));
        }
    };
    for _ in 0..60 {
        if best.2.abs() <= 1e-9 * best.0.lambda.max(1.0) {
            break;
        }
        let c = (a.0 * b.1 - b.0 * a.1) / (b.1 - a.1);
        let (s, t, g) = eval(c, Some(&best.0))?;
        if g * b.1 < 0.0 {
            a = b;
        } else {
            a.1 *= 0.5;
        }
        b = (c, g);
        best = (s, t, g);
    }
    Ok((best.0, best.1))
}
