//! Hopf point location, periodic branch tracing and classification.
//!
//! The eigenvalue convention is `e^{-nu t}`: the steady state is stable
//! while every eigenvalue has `Re nu > 0`, and a Hopf point is a simple
//! pair `nu = +- i zeta0` reaching the imaginary axis.
//!
//! Branch points are solved in unscaled variables by harmonic balance about
//! the steady state at `lambda0`, with the two side conditions
//! `(w|v1_dag) = eps`, `(w|v2_dag) = 0` appended as equations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::CoupledField;
use crate::model::Params;
use crate::ops::Operators;
use crate::periodic::{Closure, HarmonicBalance, HbOptions, HbReport, HbState};
use crate::spectral::{
    adjoint_frame, assemble_s011, check_h2prime, crossing_speed, eigs, linearize_about, AdjointFrame, CrossingSpeed, EigenPair, H2Report,
    LinearizedOperator,
};
use crate::steady::{check_h1prime, continue_steady, sensitivity, solve_steady, NewtonOptions, NullSpaceReport, SteadyState};
use crate::C64;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossingOptions {
    /// Imaginary parts of the shifts used to find the critical pair at
    /// the ends of the interval.
    pub search_shifts: Vec<f64>,
    pub per_shift: usize,
    /// Stop once `|Re nu| <= re_tol`.
    pub re_tol: f64,
    pub max_iter: usize,
    pub newton: NewtonOptions,
    /// Largest lambda step of the steady continuation.
    pub max_step: f64,
    /// Harmonics checked for non-resonance.
    pub h2_kmax: usize,
    pub h2_tol: f64,
    pub h1_rel: f64,
    /// Half-width of the centered difference of the eigenvalue path.
    pub fd_delta: f64,
    pub min_separation: f64,
}

impl Default for CrossingOptions {
    fn default() -> Self {
        CrossingOptions {
            search_shifts: vec![5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
            per_shift: 4,
            re_tol: 1e-10,
            max_iter: 40,
            newton: NewtonOptions::default(),
            max_step: 5.0,
            h2_kmax: 4,
            h2_tol: 1e-6,
            h1_rel: 1e-8,
            fd_delta: 1e-3,
            min_separation: 1e-6,
        }
    }
}

/// Where the base flow comes from.
#[derive(Clone, Debug)]
pub enum BaseFlow {
    /// The steady solution, re-solved at every lambda.
    Steady,
    /// A fixed field held steady by a manufactured force; `Lin` is then
    /// affine in lambda and `S011` is the transport linearisation at `u0`.
    Frozen(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct HopfPoint {
    pub lambda0: f64,
    pub zeta0: f64,
    pub params: Params,
    pub u0: Vec<f64>,
    pub frozen: bool,
    pub eigpair: EigenPair,
    pub crossing: CrossingSpeed,
    pub frame: AdjointFrame,
    /// `(nu(lambda0 + d) - nu(lambda0 - d)) / 2d`.
    pub fd_derivative: C64,
    /// Slope of `Re nu` between the ends of the original interval.
    pub secant_slope: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
    pub h2: H2Report,
    pub h1: Option<NullSpaceReport>,
    pub steady: Option<SteadyState>,
}

/// Steady states keyed by lambda, extended by first-order continuation.
struct SteadyTrack<'a> {
    ops: &'a Operators,
    params: Params,
    newton: NewtonOptions,
    max_step: f64,
    known: Vec<(SteadyState, Vec<f64>)>,
}

impl<'a> SteadyTrack<'a> {
    fn new(ops: &'a Operators, params: &Params, newton: NewtonOptions, max_step: f64, lo: f64) -> Result<Self> {
        let n = (lo / max_step).ceil().max(1.0) as usize;
        let grid: Vec<f64> = (0..=n).map(|i| lo * i as f64 / n as f64).collect();
        let states = continue_steady(params, ops, &grid, newton)?;
        let mut t = SteadyTrack {
            ops,
            params: *params,
            newton,
            max_step,
            known: Vec::new(),
        };
        let last = states.into_iter().last().unwrap();
        t.insert(last)?;
        Ok(t)
    }

    fn insert(&mut self, mut s: SteadyState) -> Result<()> {
        let (du, dp) = sensitivity(self.ops, &s)?;
        s.du0_dlambda = Some(CoupledField {
            values: du,
            dim: self.ops.dim(),
        });
        self.known.push((s, dp));
        Ok(())
    }

    fn at(&mut self, lambda: f64) -> Result<SteadyState> {
        loop {
            let (i, d) = self
                .known
                .iter()
                .enumerate()
                .map(|(i, (s, _))| (i, lambda - s.lambda))
                .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap();
            if d == 0.0 {
                return Ok(self.known[i].0.clone());
            }
            let step = d.clamp(-self.max_step, self.max_step);
            let (s, dp) = &self.known[i];
            let target = s.lambda + step;
            let du = &s.du0_dlambda.as_ref().unwrap().values;
            let ug: Vec<f64> = s.u0.values.iter().zip(du).map(|(a, b)| a + step * b).collect();
            let pg: Vec<f64> = s.p0.values.iter().zip(dp).map(|(a, b)| a + step * b).collect();
            let next = solve_steady(&self.params.with_lambda(target), self.ops, Some((&ug, &pg)), self.newton)?;
            self.insert(next)?;
        }
    }
}

struct Tracker<'a> {
    ops: &'a Operators,
    params: Params,
    base: BaseFlow,
    steady: Option<SteadyTrack<'a>>,
}

impl Tracker<'_> {
    fn operator(&mut self, lambda: f64) -> Result<(LinearizedOperator, Option<SteadyState>)> {
        match &self.base {
            BaseFlow::Frozen(u0) => Ok((linearize_about(self.ops, &self.params, lambda, u0)?, None)),
            BaseFlow::Steady => {
                let s = self.steady.as_mut().unwrap().at(lambda)?;
                let l = linearize_about(self.ops, &self.params, lambda, &s.u0.values)?;
                Ok((l, Some(s)))
            }
        }
    }
}

fn is_oscillatory(nu: C64) -> bool {
    nu.im > 1e-6 * nu.norm().max(1.0)
}

/// Oscillatory eigenvalue with the smallest real part near the shifts.
fn critical_pair(l: &LinearizedOperator, shifts: &[f64], per_shift: usize) -> Result<EigenPair> {
    let mut best: Option<EigenPair> = None;
    for &z in shifts {
        for p in eigs(l, C64::new(0.0, z), per_shift)? {
            if is_oscillatory(p.nu) && best.as_ref().is_none_or(|b| p.nu.re < b.nu.re) {
                best = Some(p);
            }
        }
    }
    best.ok_or_else(|| Error::solver("no oscillatory eigenvalue near the search shifts", f64::NAN))
}

const TRACK_OFFSET: C64 = C64 { re: -1.0, im: 0.0 };

/// Eigenvalue of the tracked pair nearest a prediction.
fn tracked_pair(l: &LinearizedOperator, guess: C64) -> Result<EigenPair> {
    // a shift right on the eigenvalue makes the inner solves ill-conditioned
    eigs(l, guess + TRACK_OFFSET, 4)?
        .into_iter()
        .find(|p| is_oscillatory(p.nu))
        .ok_or_else(|| Error::solver("lost the tracked eigenvalue", f64::NAN))
}

/// Bracketed search for `Re nu(lambda) = 0` along the critical pair
/// (Illinois variant of regula falsi), then the frame, crossing speed and
/// assumption checks at the crossing.
pub fn locate_crossing(
    ops: &Operators,
    params: &Params,
    interval: (f64, f64),
    base: BaseFlow,
    opts: &CrossingOptions,
) -> Result<HopfPoint> {
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi) {
        return Err(Error::validation(format!("invalid lambda interval [{lo}, {hi}]")));
    }
    params.require_positive_varpi()?;
    let steady = match base {
        BaseFlow::Steady => Some(SteadyTrack::new(ops, params, opts.newton, opts.max_step, lo)?),
        BaseFlow::Frozen(ref u) => {
            if u.len() != ops.n_coupled() {
                return Err(Error::validation("frozen base field does not match the mesh"));
            }
            None
        }
    };
    let frozen = matches!(base, BaseFlow::Frozen(_));
    let mut tr = Tracker {
        ops,
        params: *params,
        base,
        steady,
    };

    let (l_lo, _) = tr.operator(lo)?;
    let p_lo = critical_pair(&l_lo, &opts.search_shifts, opts.per_shift)?;
    drop(l_lo);
    let (l_hi, _) = tr.operator(hi)?;
    let p_hi = critical_pair(&l_hi, &opts.search_shifts, opts.per_shift)?;
    drop(l_hi);
    let (f_lo, f_hi) = (p_lo.nu.re, p_hi.nu.re);
    if f_lo * f_hi > 0.0 {
        return Err(Error::validation(format!(
            "no sign change of Re nu on [{lo}, {hi}]: {f_lo:.3e} and {f_hi:.3e}"
        )));
    }
    let secant_slope = (f_hi - f_lo) / (hi - lo);

    // Illinois: `fa` is halved whenever the same end is retained twice
    let (mut a, mut fa, mut na) = (lo, f_lo, p_lo.nu);
    let (mut b, mut fb, mut nb) = (hi, f_hi, p_hi.nu);
    let mut iterations = 0;
    let lambda0 = if f_lo.abs() <= opts.re_tol {
        lo
    } else if f_hi.abs() <= opts.re_tol {
        hi
    } else {
        loop {
            if iterations >= opts.max_iter {
                return Err(Error::solver("crossing search did not converge", fb.abs()));
            }
            iterations += 1;
            let mut c = (a * fb - b * fa) / (fb - fa);
            if !(c > a.min(b) && c < a.max(b)) {
                c = 0.5 * (a + b);
            }
            let guess = na + (nb - na) * ((c - a) / (b - a));
            let (l, _) = tr.operator(c)?;
            let p = tracked_pair(&l, guess)?;
            let fc = p.nu.re;
            if fc.abs() <= opts.re_tol || (b - a).abs() < 1e-13 * c.abs().max(1.0) {
                break c;
            }
            if fc * fb < 0.0 {
                a = b;
                fa = fb;
                na = nb;
            } else {
                fa *= 0.5;
            }
            b = c;
            fb = fc;
            nb = p.nu;
        }
    };
    let guess = if lambda0 == lo { p_lo.nu } else if lambda0 == hi { p_hi.nu } else { nb };

    let (l0, s0) = tr.operator(lambda0)?;
    // re-verify with a fresh solve at the crossing
    let pair = tracked_pair(&l0, guess)?;
    if pair.nu.im <= 0.0 {
        return Err(Error::solver("crossing eigenvalue is not oscillatory", pair.nu.im));
    }
    let neighbours: Vec<C64> = eigs(&l0, pair.nu + TRACK_OFFSET, 6)?.into_iter().map(|p| p.nu).collect();
    let frame = adjoint_frame(&l0, &pair, &neighbours, opts.min_separation)?;
    let s011 = match &s0 {
        Some(s) => {
            let du = s.du0_dlambda.as_ref().map(|f| f.values.as_slice());
            assemble_s011(ops, lambda0, &s.u0.values, du)?
        }
        None => ops.transport_jacobian(&l0.u0),
    };
    let crossing = crossing_speed(&frame, &s011);

    let d = opts.fd_delta;
    let (lp, _) = tr.operator(lambda0 + d)?;
    let np = tracked_pair(&lp, pair.nu)?.nu;
    drop(lp);
    let (lm, _) = tr.operator(lambda0 - d)?;
    let nm = tracked_pair(&lm, pair.nu)?.nu;
    drop(lm);
    let fd_derivative = (np - nm) / (2.0 * d);

    let h2 = check_h2prime(&l0, pair.nu, opts.h2_kmax, opts.h2_tol)?;
    let h1 = match &s0 {
        Some(s) => Some(check_h1prime(ops, params, s, opts.h1_rel)?),
        None => None,
    };
    Ok(HopfPoint {
        lambda0,
        zeta0: pair.nu.im,
        params: params.with_lambda(lambda0),
        u0: l0.u0.clone(),
        frozen,
        eigpair: pair,
        crossing,
        frame,
        fd_derivative,
        secant_slope,
        bracket: interval,
        iterations,
        h2,
        h1,
        steady: s0,
    })
}

// ---------------------------------------------------------------------------
// branch

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchOptions {
    pub k_trunc: usize,
    pub hb: HbOptions,
    /// Real shift of the `k = 1` preconditioner block.
    pub pre_shift: f64,
    /// Fixed-point passes of the first-order predictor.
    pub predictor_passes: usize,
}

impl Default for BranchOptions {
    fn default() -> Self {
        BranchOptions {
            k_trunc: 8,
            hb: HbOptions::default(),
            pre_shift: 0.5,
            predictor_passes: 2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchPoint {
    pub epsilon: f64,
    pub mu: f64,
    pub zeta: f64,
    /// Averaged velocity correction.
    pub v: CoupledField,
    /// Averaged displacement.
    pub eta_bar: Vec<f64>,
    pub state: HbState,
    pub mode_norms: Vec<f64>,
    /// `(w|v1_dag)` and `(w|v2_dag)` by quadrature in time.
    pub side: [f64; 2],
    pub side_residual: f64,
    /// Newton residual of the Fourier system (relative).
    pub residual: f64,
    /// Full residual on the time samples (relative).
    pub time_residual: f64,
    pub newton_iterations: usize,
    /// `|w(eps) - eps v1| / |eps|` in the time-integrated metric.
    pub limit_defect: f64,
}

/// Mode blocks and frame for the branch around one Hopf point.
pub struct BranchSolver<'a> {
    pub hopf: &'a HopfPoint,
    pub hb: HarmonicBalance<'a>,
    pub opts: BranchOptions,
}

impl<'a> BranchSolver<'a> {
    pub fn new(ops: &'a Operators, lin: &'a LinearizedOperator, hopf: &'a HopfPoint, opts: BranchOptions) -> Result<Self> {
        let hb = HarmonicBalance::new(ops, lin, opts.k_trunc, hopf.zeta0, opts.pre_shift, opts.hb)?;
        let hb = if hopf.frozen { hb.with_frozen_base() } else { hb };
        Ok(BranchSolver { hopf, hb, opts })
    }

    fn y(&self) -> &[C64] {
        &self.hopf.frame.v0_dag
    }

    /// First-order predictor: `X1 = (eps/2) conj(v0)`, the mean and second
    /// harmonic from the quadratic forcing, `(mu, zeta)` from the
    /// solvability of the first harmonic.
    pub fn predictor(&self, eps: f64) -> Result<HbState> {
        let n = self.hb.block_size();
        let k = self.hb.k_trunc;
        let z0 = self.hopf.zeta0;
        let mut st = HbState::zeros(n, k, z0);
        if eps == 0.0 {
            return Ok(st);
        }
        st.modes[1] = self.hopf.frame.v0.iter().map(|v| v.conj() * (0.5 * eps)).collect();
        let r = self.hb.residual_modes(&st);
        let neg = |v: Vec<C64>| -> Vec<C64> { v.into_iter().map(|x| -x).collect() };
        let mut x0 = neg(self.hb.block_solve(0, &r[0])?);
        x0.iter_mut().for_each(|v| v.im = 0.0);
        st.modes[0] = x0.clone();
        if k >= 2 {
            st.modes[2] = neg(self.hb.block_solve(2, &r[2])?);
        }
        let mut q = vec![C64::default(); n];
        q.iter_mut().zip(self.hb.base_forcing()).for_each(|(a, b)| *a = C64::new(*b, 0.0));
        let mut x0mu = neg(self.hb.block_solve(0, &q)?);
        x0mu.iter_mut().for_each(|v| v.im = 0.0);

        let y = self.y();
        let g = |mu: f64, zeta: f64| -> C64 {
            let mut s = st.clone();
            s.mu = mu;
            s.zeta = zeta;
            s.modes[0].iter_mut().zip(&x0mu).for_each(|(a, b)| *a += mu * b);
            let r = self.hb.residual_modes(&s);
            y.iter().zip(&r[1]).map(|(a, b)| a * b).sum()
        };
        let (mut mu, mut zeta) = (0.0, z0);
        let hm = eps * eps;
        let hz = 1e-3 * z0.abs().max(1.0);
        for _ in 0..self.opts.predictor_passes.max(1) {
            let g0 = g(mu, zeta);
            let gm = (g(mu + hm, zeta) - g0) / hm;
            let gz = (g(mu, zeta + hz) - g0) / hz;
            // [gm.re gz.re; gm.im gz.im] [dmu dzeta] = -[g0.re g0.im]
            let det = gm.re * gz.im - gz.re * gm.im;
            if det.abs() < 1e-300 {
                return Err(Error::solver("side-condition Jacobian singular (Re nu' ~ 0)", det.abs()));
            }
            mu += (-g0.re * gz.im + gz.re * g0.im) / det;
            zeta += (-gm.re * g0.im + gm.im * g0.re) / det;
        }
        st.mu = mu;
        st.zeta = zeta;
        st.modes[0].iter_mut().zip(&x0mu).for_each(|(a, b)| *a += mu * b);
        Ok(st)
    }

    /// Newton solve at `eps` from `init` (the predictor when `None`).
    pub fn solve(&self, eps: f64, init: Option<HbState>) -> Result<BranchPoint> {
        let init = match init {
            Some(s) => s,
            None => self.predictor(eps)?,
        };
        let closure = Closure::Branch {
            y: self.y().to_vec(),
            eps,
        };
        let (st, rep) = self.hb.solve(init, &closure)?;
        Ok(self.point(eps, st, &rep))
    }

    fn point(&self, eps: f64, st: HbState, rep: &HbReport) -> BranchPoint {
        let frame = &self.hopf.frame;
        let w = |t: f64| st.at(t);
        let side = [frame.pairing(&w, &|t| frame.v1_dag(t)), frame.pairing(&w, &|t| frame.v2_dag(t))];
        let side_residual = (side[0] - eps).abs().max(side[1].abs());
        let limit_defect = if eps == 0.0 {
            0.0
        } else {
            let d = |t: f64| -> Vec<f64> {
                let v1 = frame.v1(t);
                st.at(t).iter().zip(&v1).map(|(a, b)| a - eps * b).collect()
            };
            frame.pairing(&d, &d).max(0.0).sqrt() / eps.abs()
        };
        let l = self.hb.lin;
        let nc = l.nc;
        let mean: Vec<f64> = st.modes[0].iter().map(|v| v.re).collect();
        BranchPoint {
            epsilon: eps,
            mu: st.mu,
            zeta: st.zeta,
            v: CoupledField {
                values: mean[..nc].to_vec(),
                dim: l.dim,
            },
            eta_bar: mean[nc + l.np..].to_vec(),
            mode_norms: self.hb.mode_norms(&st),
            side,
            side_residual,
            residual: rep.residual,
            time_residual: self.hb.time_residual(&st),
            newton_iterations: rep.iterations,
            limit_defect,
            state: st,
        }
    }
}

/// One Newton solve at `eps`, from the first-order predictor or from a
/// supplied initial state.
pub fn lyapunov_schmidt_solve(solver: &BranchSolver, eps: f64, predictor: Option<HbState>) -> Result<BranchPoint> {
    solver.solve(eps, predictor)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Supercritical,
    Subcritical,
    Degenerate,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Classification {
    pub kind: BranchKind,
    pub mu2: f64,
    pub mu4: f64,
    /// RMS misfit of `mu = mu2 eps^2 + mu4 eps^4`.
    pub fit_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub lambda0: f64,
    pub zeta0: f64,
    pub points: Vec<BranchPoint>,
    pub classification: Classification,
    /// Limit defects at the two smallest `|eps|`, smallest first.
    pub limit_defects: Option<[f64; 2]>,
    /// Set when the continuation stopped early; `points` are then partial.
    pub terminated: Option<String>,
}

/// Least-squares fit `mu = mu2 eps^2 + mu4 eps^4` and the sign decision.
/// With fewer than two distinct nonzero `|eps|` the fit is undetermined
/// and the branch is reported degenerate.
pub fn classify_branch(eps: &[f64], mu: &[f64]) -> Classification {
    let mut mags: Vec<f64> = eps.iter().filter(|e| **e != 0.0).map(|e| e.abs()).collect();
    mags.sort_by(f64::total_cmp);
    mags.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
    if mags.len() < 2 || eps.len() != mu.len() {
        return Classification {
            kind: BranchKind::Degenerate,
            mu2: 0.0,
            mu4: 0.0,
            fit_residual: f64::INFINITY,
        };
    }
    // columns scaled by the largest eps for conditioning
    let s = mags[mags.len() - 1];
    let rows: Vec<([f64; 2], f64)> = eps.iter().zip(mu).map(|(e, m)| ([(e / s).powi(2), (e / s).powi(4)], *m)).collect();
    let mut ata = [[0.0; 2]; 2];
    let mut atb = [0.0; 2];
    for (r, b) in &rows {
        for i in 0..2 {
            atb[i] += r[i] * b;
            for j in 0..2 {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    let det = ata[0][0] * ata[1][1] - ata[0][1] * ata[1][0];
    let c2 = (atb[0] * ata[1][1] - atb[1] * ata[0][1]) / det;
    let c4 = (ata[0][0] * atb[1] - ata[1][0] * atb[0]) / det;
    let ss: f64 = rows.iter().map(|(r, b)| (r[0] * c2 + r[1] * c4 - b).powi(2)).sum();
    let fit_residual = (ss / rows.len() as f64).sqrt() / (s * s);
    let mu2 = c2 / (s * s);
    let mu4 = c4 / s.powi(4);
    let kind = if mu2.abs() < 10.0 * fit_residual {
        BranchKind::Degenerate
    } else if mu2 > 0.0 {
        BranchKind::Supercritical
    } else {
        BranchKind::Subcritical
    };
    Classification {
        kind,
        mu2,
        mu4,
        fit_residual,
    }
}

fn scaled_warm_start(prev: &HbState, eps_prev: f64, eps: f64, zeta0: f64) -> HbState {
    let r = eps / eps_prev;
    let mut s = prev.clone();
    for (k, x) in s.modes.iter_mut().enumerate() {
        let f = if k == 0 { r * r } else { r.powi(k as i32) };
        x.iter_mut().for_each(|v| *v *= f);
    }
    s.mu *= r * r;
    s.zeta = zeta0 + (prev.zeta - zeta0) * r * r;
    s
}

/// Continuation over a grid symmetric about zero, each sign from the
/// smallest amplitude outwards.
pub fn trace_branch(solver: &BranchSolver, grid: &[f64]) -> Result<Branch> {
    if grid.is_empty() || grid.contains(&0.0) {
        return Err(Error::validation("epsilon grid must be nonempty and exclude 0"));
    }
    if grid.iter().any(|e| !grid.iter().any(|f| (e + f).abs() <= 1e-14 * e.abs())) {
        return Err(Error::validation("epsilon grid must be symmetric about 0"));
    }
    let hopf = solver.hopf;
    let mut points: Vec<BranchPoint> = Vec::new();
    let mut terminated = None;
    'signs: for sign in [1.0, -1.0] {
        let mut side: Vec<f64> = grid.iter().copied().filter(|e| e.signum() == sign).collect();
        side.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        side.dedup();
        let mut prev: Option<(f64, HbState)> = None;
        for eps in side {
            let init = match &prev {
                Some((ep, st)) => scaled_warm_start(st, *ep, eps, hopf.zeta0),
                None => solver.predictor(eps)?,
            };
            match solver.solve(eps, Some(init)) {
                Ok(p) => {
                    prev = Some((eps, p.state.clone()));
                    points.push(p);
                }
                Err(e) => {
                    terminated = Some(format!("stopped at eps = {eps}: {e}"));
                    break 'signs;
                }
            }
        }
    }
    points.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    let e: Vec<f64> = points.iter().map(|p| p.epsilon).collect();
    let m: Vec<f64> = points.iter().map(|p| p.mu).collect();
    let classification = classify_branch(&e, &m);
    let mut pos: Vec<&BranchPoint> = points.iter().collect();
    pos.sort_by(|a, b| a.epsilon.abs().total_cmp(&b.epsilon.abs()));
    pos.dedup_by(|a, b| a.epsilon.abs() == b.epsilon.abs());
    let limit_defects = if pos.len() >= 2 { Some([pos[0].limit_defect, pos[1].limit_defect]) } else { None };
    Ok(Branch {
        lambda0: hopf.lambda0,
        zeta0: hopf.zeta0,
        points,
        classification,
        limit_defects,
        terminated,
    })
}

/// `2 pi` times the bilinear first-harmonic pairing used by the closure;
/// equals `(w|v1_dag) + i (w|v2_dag)` for the conventions of the frame.
pub fn side_pairing(frame: &AdjointFrame, st: &HbState) -> C64 {
    let z: C64 = frame
        .v0_dag
        .iter()
        .zip(&st.modes[1])
        .zip(&frame.m_diag)
        .map(|((a, b), m)| a * b * m)
        .sum();
    z * (2.0 * PI)
}
