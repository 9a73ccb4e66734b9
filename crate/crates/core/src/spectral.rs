//! Linearisation about a steady state, its spectrum, adjoint frame and the
//! speed at which a simple eigenvalue crosses the imaginary axis.
//!
//! Unknowns are `x = (w, p, eta)`: coupled velocity, pressure and body
//! displacement. Perturbations obey `M x' + A x = 0` with
//!
//! ```text
//!     [ Lin  B^T  c P^T ]         [ W       ]
//! A = [ B    0    0     ],    M = [    0    ],   c = omega^2 / varpi
//!     [ -P   0    0     ]         [       I ]
//! ```
//!
//! where `Lin = A_visc + lambda0 Clin(u0)` and `P` picks the body slots.
//! An eigenvalue `nu` of `A x = nu M x` corresponds to `e^{-nu t}`, so
//! stability means `Re nu > 0` and a Hopf point has `nu = i zeta0`.

use faer::Mat;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::dense::{self, axpyc};
use crate::linalg::eigen::{krylov_eigs, KrylovOptions, Want};
use crate::linalg::sparse::{push_block, Csr, SparseLu};
use crate::model::Params;
use crate::ops::Operators;
use crate::steady::{linear_operator, SteadyState};
use crate::C64;

#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    pub lambda0: f64,
    pub params: Params,
    /// Base total velocity.
    pub u0: Vec<f64>,
    pub lin: Csr<f64>,
    pub a: Csr<f64>,
    pub m_diag: Vec<f64>,
    pub nc: usize,
    pub np: usize,
    pub dim: usize,
}

impl LinearizedOperator {
    pub fn size(&self) -> usize {
        self.nc + self.np + self.dim
    }

    pub fn mass_matrix(&self) -> Csr<f64> {
        let n = self.size();
        Csr::from_triplets(n, n, self.m_diag.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, i, *v)).collect())
    }

    /// `<x, y>` in the metric `M` (conjugate linear in `x`).
    pub fn inner(&self, x: &[C64], y: &[C64]) -> C64 {
        dense::wdotc(x, y, &self.m_diag)
    }

    pub fn velocity<'a, T>(&self, x: &'a [T]) -> &'a [T] {
        &x[..self.nc]
    }

    pub fn displacement<'a, T>(&self, x: &'a [T]) -> &'a [T] {
        &x[self.nc + self.np..]
    }

    /// `A x` evaluated without the assembled matrix.
    pub fn apply_matrix_free(&self, ops: &Operators, x: &[f64]) -> Vec<f64> {
        let (nc, np) = (self.nc, self.np);
        let w = &x[..nc];
        let p = &x[nc..nc + np];
        let eta = &x[nc + np..];
        let mut top = ops.stiffness.matvec(w);
        if self.lambda0 != 0.0 {
            let a0 = ops.relative(&self.u0);
            let b0 = ops.extend(&self.u0);
            ops.transport_add(&a0, &ops.extend(w), self.lambda0, &mut top);
            ops.transport_add(&ops.relative(w), &b0, self.lambda0, &mut top);
        }
        let bt = ops.div.tmatvec(p);
        top.iter_mut().zip(&bt).for_each(|(t, b)| *t += b);
        let c = self.params.spring_weight();
        for k in 0..self.dim {
            top[nc - self.dim + k] += c * eta[k];
        }
        let mut out = top;
        out.extend(ops.div.matvec(w));
        for k in 0..self.dim {
            out.push(-w[nc - self.dim + k]);
        }
        out
    }
}

fn block_operator(ops: &Operators, params: &Params, lin: &Csr<f64>) -> Result<(Csr<f64>, Vec<f64>)> {
    let nc = ops.n_coupled();
    let np = ops.n_pressure();
    let d = ops.dim();
    let c = params.spring_weight();
    let mut t = Vec::with_capacity(lin.nnz() + 2 * ops.div.nnz() + 2 * d);
    push_block(&mut t, lin, 0, 0, 1.0);
    push_block(&mut t, &ops.div.transpose(), 0, nc, 1.0);
    push_block(&mut t, &ops.div, nc, 0, 1.0);
    for k in 0..d {
        let b = ops.mesh.body_dof(k);
        t.push((b, nc + np + k, c));
        t.push((nc + np + k, b, -1.0));
    }
    let n = nc + np + d;
    let mut m = ops.weights(params.varpi)?;
    m.resize(nc + np, 0.0);
    m.resize(n, 1.0);
    Ok((Csr::from_triplets(n, n, t), m))
}

/// Linearisation about an arbitrary base field `u0` at `lambda0`.
pub fn linearize_about(ops: &Operators, params: &Params, lambda0: f64, u0: &[f64]) -> Result<LinearizedOperator> {
    params.require_positive_varpi()?;
    let lin = linear_operator(ops, lambda0, u0);
    let (a, m_diag) = block_operator(ops, params, &lin)?;
    Ok(LinearizedOperator {
        lambda0,
        params: params.with_lambda(lambda0),
        u0: u0.to_vec(),
        lin,
        a,
        m_diag,
        nc: ops.n_coupled(),
        np: ops.n_pressure(),
        dim: ops.dim(),
    })
}

pub fn assemble_linearization(ops: &Operators, params: &Params, s: &SteadyState) -> Result<LinearizedOperator> {
    linearize_about(ops, params, s.lambda, &s.u0.values)
}

/// Same block structure around a caller-supplied `Lin`.
pub fn from_lin(ops: &Operators, params: &Params, lambda0: f64, u0: &[f64], lin: Csr<f64>) -> Result<LinearizedOperator> {
    params.require_positive_varpi()?;
    let (a, m_diag) = block_operator(ops, params, &lin)?;
    Ok(LinearizedOperator {
        lambda0,
        params: params.with_lambda(lambda0),
        u0: u0.to_vec(),
        lin,
        a,
        m_diag,
        nc: ops.n_coupled(),
        np: ops.n_pressure(),
        dim: ops.dim(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenPair {
    pub nu: C64,
    /// `(w, p, eta)`, unit length in the metric `M`.
    pub vector: Vec<C64>,
    pub residual: f64,
}

/// `|A x - nu M x|` measured as a field (dual rows scaled by `M^{-1}`,
/// continuity rows as they are), relative to `|x|_M`.
pub fn residual_norm(l: &LinearizedOperator, nu: C64, x: &[C64]) -> f64 {
    let ac = l.a.to_complex();
    let ax = ac.matvec(x);
    let mut s = 0.0;
    for i in 0..x.len() {
        let r = ax[i] - nu * l.m_diag[i] * x[i];
        s += if l.m_diag[i] > 0.0 { r.norm_sqr() / l.m_diag[i] } else { r.norm_sqr() };
    }
    s.sqrt() / l.inner(x, x).re.sqrt()
}

fn shifted(l: &LinearizedOperator, shift: C64) -> Csr<C64> {
    let mut t: Vec<(usize, usize, C64)> = l.a.triplets().into_iter().map(|(r, c, v)| (r, c, C64::new(v, 0.0))).collect();
    for (i, &m) in l.m_diag.iter().enumerate() {
        if m != 0.0 {
            t.push((i, i, -shift * m));
        }
    }
    let n = l.size();
    Csr::from_triplets(n, n, t)
}

fn start_vector(n: usize) -> Vec<C64> {
    (0..n)
        .map(|i| {
            let t = i as f64;
            C64::new((0.37 * t).sin() + 0.1, (0.11 * t).cos())
        })
        .collect()
}

/// `n` eigenvalues nearest `shift`, sorted by distance, each with an
/// independently recomputed residual.
pub fn eigs(l: &LinearizedOperator, shift: C64, n: usize) -> Result<Vec<EigenPair>> {
    let mut s = shift;
    let mut lu = None;
    for attempt in 0..3 {
        match SparseLu::new(&shifted(l, s)) {
            Ok(f) => {
                lu = Some(f);
                break;
            }
            Err(_) => {
                // shift sits on an eigenvalue: jitter
                s += C64::new(1e-7, 1e-7) * (1.0 + s.norm()) * (attempt + 1) as f64;
            }
        }
    }
    let lu = lu.ok_or_else(|| Error::solver("shifted factorisation failed", f64::NAN))?;
    let md = &l.m_diag;
    let op = |x: &[C64]| -> Result<Vec<C64>> {
        let mx: Vec<C64> = x.iter().zip(md).map(|(a, m)| a * m).collect();
        lu.solve(&mx)
    };
    let ip = |a: &[C64], b: &[C64]| dense::wdotc(a, b, md);
    let first = op(&start_vector(l.size()))?;
    let mut opts = KrylovOptions::new(n);
    opts.tol = 1e-11;
    opts.max_restarts = 200;
    // a slow trailing Ritz value usually needs a wider subspace, not more restarts
    let mut ritz = Err(Error::solver("Krylov eigensolver not run", f64::NAN));
    for _ in 0..3 {
        ritz = krylov_eigs(&op, &ip, first.clone(), Want::LargestMagnitude, opts);
        if ritz.is_ok() {
            break;
        }
        opts.ncv *= 2;
    }
    let ritz = ritz?;
    let mut out: Vec<EigenPair> = ritz
        .into_iter()
        .map(|r| {
            let nu = s + 1.0 / r.theta;
            let residual = residual_norm(l, nu, &r.vector);
            EigenPair { nu, vector: r.vector, residual }
        })
        .collect();
    out.sort_by(|a, b| (a.nu - shift).norm().total_cmp(&(b.nu - shift).norm()));
    out.truncate(n);
    Ok(out)
}

/// Rightmost-in-the-unstable-sense eigenvalue: smallest `Re nu` among the
/// eigenvalues found near a set of imaginary shifts.
pub fn leading_eigenvalue(l: &LinearizedOperator, shifts: &[C64], per_shift: usize) -> Result<EigenPair> {
    let mut best: Option<EigenPair> = None;
    for &s in shifts {
        for p in eigs(l, s, per_shift)? {
            if best.as_ref().is_none_or(|b| p.nu.re < b.nu.re) {
                best = Some(p);
            }
        }
    }
    best.ok_or_else(|| Error::solver("no eigenvalues found", f64::NAN))
}

/// For each eigenvalue, how many of the list lie within `rel |nu|` of
/// it (itself included). A count above one only hints at a multiple
/// eigenvalue; nothing is certified.
pub fn multiplicity_hints(nus: &[C64], rel: f64) -> Vec<usize> {
    nus.iter()
        .map(|a| nus.iter().filter(|b| (*a - **b).norm() <= rel * a.norm().max(1.0)).count())
        .collect()
}

/// Eigenvalues near several shifts, merged: values closer than `1e-9`
/// relative are the same eigenvalue and the smaller residual is kept.
pub fn eigs_near(l: &LinearizedOperator, shifts: &[C64], per_shift: usize) -> Result<Vec<EigenPair>> {
    let mut out: Vec<EigenPair> = Vec::new();
    for &s in shifts {
        for p in eigs(l, s, per_shift)? {
            match out.iter_mut().find(|q| (q.nu - p.nu).norm() <= 1e-9 * p.nu.norm().max(1.0)) {
                Some(q) if q.residual > p.residual => *q = p,
                Some(_) => {}
                None => out.push(p),
            }
        }
    }
    out.sort_by(|a, b| a.nu.re.total_cmp(&b.nu.re).then(a.nu.im.total_cmp(&b.nu.im)));
    Ok(out)
}

/// Dense spectrum of a small operator, through a null-space basis of `B`.
pub fn dense_spectrum(l: &LinearizedOperator, ops: &Operators) -> Result<Vec<C64>> {
    let (ar, mr) = reduced_dense(l, ops)?;
    let minv = dense::inverse_c(&mr.as_ref().map(|v| C64::new(*v, 0.0)));
    let ac = ar.as_ref().map(|v| C64::new(*v, 0.0));
    let (vals, _) = dense::eig(&(&minv * &ac))?;
    Ok(vals)
}

/// Reduced `(A_r, M_r)` on `ker B x R^dim` plus the basis `Z` embedded.
fn reduced_dense(l: &LinearizedOperator, ops: &Operators) -> Result<(Mat<f64>, Mat<f64>)> {
    let (ar, mr, _) = reduced_dense_with_basis(l, ops)?;
    Ok((ar, mr))
}

pub(crate) fn reduced_dense_with_basis(l: &LinearizedOperator, ops: &Operators) -> Result<(Mat<f64>, Mat<f64>, Mat<f64>)> {
    let bd = dense::mat_from_rows(&ops.div.to_dense());
    let z = dense::null_space(&bd, 1e-11)?;
    let nz = z.ncols();
    let d = l.dim;
    let nc = l.nc;
    let lin = dense::mat_from_rows(&l.lin.to_dense());
    let c = l.params.spring_weight();
    let w = &l.m_diag[..nc];
    let zl = z.transpose() * &lin * &z;
    let n = nz + d;
    let mut ar = Mat::<f64>::zeros(n, n);
    let mut mr = Mat::<f64>::zeros(n, n);
    for i in 0..nz {
        for j in 0..nz {
            ar[(i, j)] = zl[(i, j)];
            mr[(i, j)] = (0..nc).map(|r| z[(r, i)] * w[r] * z[(r, j)]).sum();
        }
        for k in 0..d {
            let b = nc - d + k;
            ar[(i, nz + k)] = c * z[(b, i)];
            ar[(nz + k, i)] = -z[(b, i)];
        }
    }
    for k in 0..d {
        mr[(nz + k, nz + k)] = 1.0;
    }
    Ok((ar, mr, z))
}

/// Left eigenvector `y` with `A^H y = conj(nu) M y`, by inverse iteration.
pub fn left_eigenvector(l: &LinearizedOperator, nu: C64) -> Result<Vec<C64>> {
    let s = nu + C64::new(1e-8, 1e-8) * nu.norm().max(1.0);
    let lu = SparseLu::new(&shifted(l, s))?;
    let md = &l.m_diag;
    let mut y = start_vector(l.size());
    let mut prev = C64::default();
    for _ in 0..30 {
        let my: Vec<C64> = y.iter().zip(md).map(|(a, m)| a * m).collect();
        let mut z = lu.solve_adjoint(&my)?;
        let nz = dense::wdotc(&z, &z, md).re.sqrt();
        z.iter_mut().for_each(|v| *v /= nz);
        // fix the phase so successive iterates can be compared
        let k = (0..z.len()).max_by(|&a, &b| (z[a].norm() * md[a]).total_cmp(&(z[b].norm() * md[b]))).unwrap();
        let ph = z[k] / z[k].norm();
        z.iter_mut().for_each(|v| *v /= ph);
        let rq = rayleigh_left(l, &z);
        y = z;
        if (rq - prev).norm() < 1e-14 * rq.norm().max(1.0) {
            break;
        }
        prev = rq;
    }
    Ok(y)
}

fn rayleigh_left(l: &LinearizedOperator, y: &[C64]) -> C64 {
    let ac = l.a.to_complex();
    let ahy = ac.transpose().matvec(&y.iter().map(|v| v.conj()).collect::<Vec<_>>());
    // y^H A = conj(A^T conj(y))^T ... scalar y^H A y / y^H M y as a proxy
    let num: C64 = ahy.iter().zip(y).map(|(a, b)| a * b).sum();
    num / l.inner(y, y)
}

/// Real periodic frame built from a right/left pair at `nu0 = i zeta0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdjointFrame {
    pub nu0: C64,
    pub v0: Vec<C64>,
    pub v0_dag: Vec<C64>,
    pub m_diag: Vec<f64>,
    /// Distance to the nearest other eigenvalue found.
    pub separation: f64,
}

pub const FRAME_SAMPLES: usize = 64;

impl AdjointFrame {
    /// `<v0_dag, v0>`, set to `1/pi`.
    pub fn normalization(&self) -> C64 {
        dense::wdotc(&self.v0_dag, &self.v0, &self.m_diag)
    }

    /// `Re[a e^{-i tau}]`.
    pub fn sample(a: &[C64], tau: f64, imag: bool) -> Vec<f64> {
        let e = C64::new(tau.cos(), -tau.sin());
        a.iter().map(|v| if imag { (v * e).im } else { (v * e).re }).collect()
    }

    pub fn v1(&self, tau: f64) -> Vec<f64> {
        Self::sample(&self.v0, tau, false)
    }
    pub fn v2(&self, tau: f64) -> Vec<f64> {
        Self::sample(&self.v0, tau, true)
    }
    pub fn v1_dag(&self, tau: f64) -> Vec<f64> {
        Self::sample(&self.v0_dag, tau, false)
    }
    pub fn v2_dag(&self, tau: f64) -> Vec<f64> {
        Self::sample(&self.v0_dag, tau, true)
    }

    /// `(f|g) = int_0^{2 pi} <f, g>_M d tau` by the trapezoid rule, exact
    /// for trigonometric polynomials of degree below the sample count.
    pub fn pairing(&self, f: &dyn Fn(f64) -> Vec<f64>, g: &dyn Fn(f64) -> Vec<f64>) -> f64 {
        let n = FRAME_SAMPLES;
        let dt = 2.0 * PI / n as f64;
        (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                let (a, b) = (f(t), g(t));
                a.iter().zip(&b).zip(&self.m_diag).map(|((x, y), m)| x * y * m).sum::<f64>()
            })
            .sum::<f64>()
            * dt
    }

    /// The four pairings `(v_i | v_j_dag)` as `[[11, 12], [21, 22]]`.
    pub fn biorthogonality(&self) -> [[f64; 2]; 2] {
        let v1 = |t| self.v1(t);
        let v2 = |t| self.v2(t);
        let d1 = |t| self.v1_dag(t);
        let d2 = |t| self.v2_dag(t);
        [
            [self.pairing(&v1, &d1), self.pairing(&v1, &d2)],
            [self.pairing(&v2, &d1), self.pairing(&v2, &d2)],
        ]
    }

    /// `((v1)_tau | v1_dag)` and `((v1)_tau | v2_dag)`.
    pub fn derivative_pairings(&self) -> [f64; 2] {
        // d/dtau Re[v0 e^{-i tau}] = Re[-i v0 e^{-i tau}]
        let dv0: Vec<C64> = self.v0.iter().map(|v| v * C64::new(0.0, -1.0)).collect();
        let dv1 = |t| Self::sample(&dv0, t, false);
        let d1 = |t| self.v1_dag(t);
        let d2 = |t| self.v2_dag(t);
        [self.pairing(&dv1, &d1), self.pairing(&dv1, &d2)]
    }
}

/// Builds the frame for a simple eigenvalue. `spectrum` is used for the
/// simplicity check (eigenvalues other than `pair.nu`).
pub fn adjoint_frame(l: &LinearizedOperator, pair: &EigenPair, spectrum: &[C64], min_separation: f64) -> Result<AdjointFrame> {
    let separation = spectrum
        .iter()
        .filter(|z| (**z - pair.nu).norm() > 1e-12 * pair.nu.norm().max(1.0))
        .map(|z| (z - pair.nu).norm())
        .fold(f64::INFINITY, f64::min);
    if separation <= min_separation {
        return Err(Error::validation(format!(
            "eigenvalue {} is not simple (separation {separation:.2e})",
            pair.nu
        )));
    }
    let mut y = left_eigenvector(l, pair.nu)?;
    let c = dense::wdotc(&y, &pair.vector, &l.m_diag);
    if c.norm() < 1e-10 {
        return Err(Error::solver("left and right eigenvectors nearly orthogonal (defective?)", c.norm()));
    }
    let alpha = (1.0 / (PI * c)).conj();
    y.iter_mut().for_each(|v| *v *= alpha);
    Ok(AdjointFrame {
        nu0: pair.nu,
        v0: pair.vector.clone(),
        v0_dag: y,
        m_diag: l.m_diag.clone(),
        separation,
    })
}

// ---------------------------------------------------------------------------
// parameter derivative

/// `d Lin / d lambda` along the steady branch:
/// `Clin(u0) + lambda0 Clin'(u0')`, both through the transport linearisation.
pub fn assemble_s011(ops: &Operators, lambda0: f64, u0: &[f64], du0: Option<&[f64]>) -> Result<Csr<f64>> {
    let mut s = ops.transport_jacobian(u0);
    match du0 {
        Some(d) => {
            if d.len() != u0.len() {
                return Err(Error::validation("sensitivity length mismatch"));
            }
            if lambda0 != 0.0 {
                s = Csr::lin_comb(1.0, &s, lambda0, &ops.transport_jacobian(d));
            }
        }
        None => return Err(Error::validation("steady state carries no sensitivity")),
    }
    Ok(s)
}

pub fn assemble_s011_from_state(ops: &Operators, s: &SteadyState) -> Result<Csr<f64>> {
    let du = s.du0_dlambda.as_ref().map(|f| f.values.as_slice());
    assemble_s011(ops, s.lambda, &s.u0.values, du)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CrossingSpeed {
    /// `d nu / d mu` of the eigenvalue: `<v0_dag, S v0> / <v0_dag, v0>`.
    pub nu_prime: C64,
    /// The pairing `<v0_dag, S v0>` as it stands.
    pub raw: C64,
    /// `pi^{-1} (S v1 | v1_dag)`, the real-part formula in the frame.
    pub frame_real_part: f64,
}

pub fn crossing_speed(frame: &AdjointFrame, s011: &Csr<f64>) -> CrossingSpeed {
    let nc = s011.nrows;
    let v = &frame.v0[..nc];
    let sv = s011.to_complex().matvec(v);
    let raw = dense::dotc(&frame.v0_dag[..nc], &sv);
    let nu_prime = raw / frame.normalization();
    // (S v1 | v1_dag) with S acting on the velocity block
    let n = FRAME_SAMPLES;
    let dt = 2.0 * PI / n as f64;
    let mut acc = 0.0;
    for k in 0..n {
        let t = k as f64 * dt;
        let v1 = AdjointFrame::sample(v, t, false);
        let d1 = AdjointFrame::sample(&frame.v0_dag[..nc], t, false);
        let s1 = s011.matvec(&v1);
        acc += s1.iter().zip(&d1).map(|(a, b)| a * b).sum::<f64>();
    }
    CrossingSpeed {
        nu_prime,
        raw,
        frame_real_part: acc * dt / PI,
    }
}

// ---------------------------------------------------------------------------
// non-resonance of the harmonics

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct H2Report {
    pub zeta0: f64,
    pub simplicity_margin: f64,
    /// `(k, distance from i k zeta0 to the nearest eigenvalue)`.
    pub harmonic_distances: Vec<(usize, f64)>,
    pub tol: f64,
    pub pass: bool,
}

pub fn h2_report_from_spectrum(spectrum: &[C64], nu0: C64, k_max: usize, tol: f64) -> H2Report {
    let zeta0 = nu0.im;
    let simplicity_margin = spectrum
        .iter()
        .filter(|z| (**z - nu0).norm() > 1e-12 * nu0.norm().max(1.0))
        .map(|z| (z - nu0).norm())
        .fold(f64::INFINITY, f64::min);
    let harmonic_distances: Vec<(usize, f64)> = (2..=k_max)
        .map(|k| {
            let target = C64::new(0.0, k as f64 * zeta0);
            let d = spectrum.iter().map(|z| (z - target).norm()).fold(f64::INFINITY, f64::min);
            (k, d)
        })
        .collect();
    let pass = simplicity_margin > tol && harmonic_distances.iter().all(|(_, d)| *d > tol);
    H2Report {
        zeta0,
        simplicity_margin,
        harmonic_distances,
        tol,
        pass,
    }
}

/// Computes eigenvalues around `i k zeta0` for `k = 1..k_max` and reports.
pub fn check_h2prime(l: &LinearizedOperator, nu0: C64, k_max: usize, tol: f64) -> Result<H2Report> {
    let mut spec = Vec::new();
    for k in 1..=k_max {
        // off the axis: at k = 1 the shift would sit on nu0 itself
        let s = C64::new(-0.5, k as f64 * nu0.im);
        for p in eigs(l, s, 3)? {
            if !spec.iter().any(|z: &C64| (z - p.nu).norm() < 1e-9 * p.nu.norm().max(1.0)) {
                spec.push(p.nu);
            }
        }
    }
    Ok(h2_report_from_spectrum(&spec, nu0, k_max, tol))
}

/// Adds `alpha * y` to `x` (complex).
pub fn axpy_c(alpha: C64, y: &[C64], x: &mut [C64]) {
    axpyc(alpha, y, x)
}
