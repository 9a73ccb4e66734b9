//! Acceptance checks, one test per criterion. Each prints a single
//! `criterion N: PASS|FAIL` line with the measured quantities, then
//! asserts.

mod common;

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{random_vec, rng};
use fsi_core::bifurcation::*;
use fsi_core::evolution::*;
use fsi_core::linalg::dense;
use fsi_core::periodic::*;
use fsi_core::spectral::assemble_linearization;
use fsi_core::steady::*;
use fsi_core::{Mesh, MeshConfig, Operators, Params, Projector, C64};
use rand::Rng;

fn report(n: usize, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn default_ops() -> &'static Operators {
    static OPS: OnceLock<Operators> = OnceLock::new();
    OPS.get_or_init(|| Operators::new(&Mesh::build(&MeshConfig::default()).unwrap()))
}

fn base_params() -> Params {
    Params::new(0.0, 1.0, 1.0, 2)
}

struct Crossing {
    hopf: HopfPoint,
    elapsed: Duration,
}

fn crossing() -> &'static Crossing {
    static C: OnceLock<Crossing> = OnceLock::new();
    C.get_or_init(|| {
        let t = Instant::now();
        let hopf = locate_crossing(default_ops(), &base_params(), (40.0, 50.0), BaseFlow::Steady, &CrossingOptions::default()).unwrap();
        Crossing { hopf, elapsed: t.elapsed() }
    })
}

#[test]
fn criterion_01_projection() {
    let t = Instant::now();
    let ops = common::ops(48, 32, 4);
    let varpi = 1.0;
    let proj = Projector::new(&ops, varpi).unwrap();
    let mut r = rng(101);
    let (mut idem, mut orth) = (0.0_f64, 0.0_f64);
    for _ in 0..100 {
        let f = random_vec(&mut r, ops.n_coupled());
        let nf2 = ops.inner(&f, &f, varpi).unwrap();
        let pf = proj.project(&f).unwrap();
        let ppf = proj.project(&pf).unwrap();
        let d: Vec<f64> = pf.iter().zip(&ppf).map(|(a, b)| a - b).collect();
        let g: Vec<f64> = f.iter().zip(&pf).map(|(a, b)| a - b).collect();
        idem = idem.max(ops.inner(&d, &d, varpi).unwrap().sqrt() / nf2.sqrt());
        orth = orth.max(ops.inner(&pf, &g, varpi).unwrap().abs() / nf2);
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = idem <= 1e-10 && orth <= 1e-10 && secs < 30.0;
    report(1, pass, format!("idempotence {idem:.2e}, orthogonality {orth:.2e}, {secs:.1} s"));
    assert!(pass);
}

#[test]
fn criterion_02_steady_state() {
    let t = Instant::now();
    let ops = default_ops();
    let p = base_params().with_lambda(10.0);
    let s = solve_steady(&p, ops, None, NewtonOptions::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let closure = closure_defect(ops, &p, &s).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let par = s.chi0[1].abs() / s.chi0[0].abs();
    let pass = closure <= 1e-10 && par <= 1e-8 && secs < 120.0;
    report(2, pass, format!("closure {closure:.2e}, |chi0_2|/|chi0_1| {par:.2e}, {} Newton steps, {secs:.1} s", s.newton_iterations));
    assert!(pass);
}

#[test]
fn criterion_03_thresholds() {
    let ops = common::ops(12, 12, 4);
    let p = base_params().with_lambda(4.0);
    let s = solve_steady(&p, &ops, None, NewtonOptions::default()).unwrap();
    let dense_t = thresholds_for_field(&ops, &s.u0.values, usize::MAX).unwrap();
    let krylov_t = thresholds_for_field(&ops, &s.u0.values, 0).unwrap();
    let d1 = common::rel(krylov_t.lambda1.value(), dense_t.lambda1.value());
    let d2 = common::rel(krylov_t.lambda2.value(), dense_t.lambda2.value());
    let big = compute_thresholds(&common::small(), &solve_steady(&p, &common::small(), None, NewtonOptions::default()).unwrap()).unwrap();
    let order = dense_t.lambda2.value() <= dense_t.lambda1.value() && big.lambda2.value() <= big.lambda1.value();
    let pass = order && d1 <= 1e-10 && d2 <= 1e-10;
    report(
        3,
        pass,
        format!(
            "lambda1 {:.6}, lambda2 {:.6} (dense oracle diff {d1:.1e}, {d2:.1e}); 24x16: lambda1 {:.6}, lambda2 {:.6}",
            krylov_t.lambda1.value(),
            krylov_t.lambda2.value(),
            big.lambda1.value(),
            big.lambda2.value()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_energy_decay() {
    let t = Instant::now();
    let ops = default_ops();
    let (s, th) = threshold_fraction(&base_params(), ops, 0.5, NewtonOptions::default()).unwrap();
    let p = base_params().with_lambda(s.lambda);
    let proj = Projector::new(ops, p.varpi).unwrap();
    let u = random_perturbation(ops, &p, &proj, &mut rng(104), 0.1).unwrap();
    let s0 = EvolState::new(ops, u, vec![0.0, 0.0]).unwrap();
    let r = evolve(ops, &p, &s.u0.values, &s0, 50.0, 0.02, EvolveOptions::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let g = &r.log.norm_grad;
    let ratio = g[g.len() - 1] / g[0];
    let rep = decay_metrics(&r.log, p.lambda, Some(th.lambda2.value()), DecayOptions::default()).unwrap();
    let pass = ratio < 1e-3 && rep.monotone_after_transient && secs < 300.0;
    report(
        4,
        pass,
        format!(
            "lambda {:.4} = 0.5 lambda2, |grad u| ratio {ratio:.2e}, max step increase {:.1e}, rate {:.4}, {secs:.1} s",
            p.lambda, rep.max_relative_increase, rep.rate
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_periodic_decay() {
    let t = Instant::now();
    let ops = default_ops();
    let (s, _) = threshold_fraction(&base_params(), ops, 0.8, NewtonOptions::default()).unwrap();
    let p = base_params().with_lambda(s.lambda);
    let lin = assemble_linearization(ops, &p, &s).unwrap();
    let mut r = rng(105);
    let mut worst = 0.0_f64;
    let mut ok = true;
    for _ in 0..10 {
        let zeta = r.random_range(0.5..3.0);
        let init = random_modes(&lin, 4, zeta, 1e-3, &mut r);
        match solve_periodic_nonlinear(ops, &lin, init, Closure::Fixed, HbOptions::default()) {
            Ok(o) => worst = worst.max(o.norm),
            Err(_) => ok = false,
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = ok && worst < 1e-8;
    report(5, pass, format!("lambda {:.4} = 0.8 lambda2, largest final norm {worst:.2e}, {secs:.1} s", p.lambda));
    assert!(pass);
}

#[test]
fn criterion_06_resonance() {
    let t = Instant::now();
    let ops = default_ops();
    let zeta0 = 1.0;
    let lambda = 10.0;
    let k1 = traction_matrix(ops, 1, zeta0, lambda).unwrap();
    let sk = dense::singular_values_c(&k1).unwrap().into_iter().fold(f64::INFINITY, f64::min);
    let mut scaling = 0.0_f64;
    for vp in [1e-1, 1e-2, 1e-3, 1e-4] {
        let p = Params::new(lambda, zeta0 * zeta0, vp, 2);
        let m = resonance_matrix(1, zeta0, &p, &k1).unwrap();
        scaling = scaling.max(common::rel(m.sigma_min, vp * sk));
    }
    let p = Params::new(lambda, zeta0 * zeta0, 0.5, 2);
    let ks: Vec<i32> = (1..=16).collect();
    let rows = resonance_scan(ops, &ks, &[0.5], zeta0, &p).unwrap();
    let smin = rows.iter().map(|r| r.sigma_min).fold(f64::INFINITY, f64::min);
    let mut r = rng(106);
    let mut re_min = f64::INFINITY;
    for _ in 0..50 {
        let a: Vec<C64> = (0..2).map(|_| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
        let q: C64 = (0..2).map(|i| (0..2).map(|j| a[i].conj() * k1[(i, j)] * a[j]).sum::<C64>()).sum();
        re_min = re_min.min(q.re / dense::normc(&a).powi(2));
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = scaling <= 1e-12 && smin > 0.0 && re_min > 0.0 && secs < 120.0;
    report(6, pass, format!("scaling error {scaling:.1e}, min sigma over k=1..16 {smin:.3e}, min Re a*Ka/|a|^2 {re_min:.3e}, {secs:.1} s"));
    assert!(pass);
}

#[test]
fn criterion_07_linear_periodic() {
    let ops = default_ops();
    let p = Params::new(10.0, 1.0, 1.0, 2);
    let zeta0 = 1.5;
    let mut r = rng(107);
    let forcing: Vec<ModeForcing> = (1..=3)
        .map(|k| ModeForcing {
            k,
            f: Some(random_vec(&mut r, ops.n_coupled()).into_iter().map(|v| C64::new(v, 0.0)).collect()),
            g: None,
            big_f: vec![C64::new(1.0, 0.0), C64::new(0.0, 0.5)],
        })
        .collect();
    let sol = solve_periodic_linear(ops, &p, zeta0, &forcing, 16).unwrap();
    let res = time_domain_residual(ops, &p, &sol, &forcing, 64);
    let unit: Vec<ModeForcing> = (1..=8)
        .map(|k| ModeForcing {
            k,
            f: None,
            g: None,
            big_f: vec![C64::new(1.0, 0.0), C64::default()],
        })
        .collect();
    let transfer = solve_periodic_linear(ops, &p, zeta0, &unit, 8).unwrap();
    let slope = xi_decay_slope(&transfer, &unit).unwrap();
    let pass = res < 1e-6 && (-4.0..=-1.0).contains(&slope);
    report(7, pass, format!("time-domain residual {res:.2e}, xi transfer slope {slope:.3} (target -2)"));
    assert!(pass);
}

#[test]
fn criterion_08_crossing_speed() {
    let c = crossing();
    let h = &c.hopf;
    let cs = &h.crossing;
    let agree = (cs.raw.re - cs.frame_real_part).abs();
    // both formulas carry the 1/pi of the frame normalisation
    let scale = 1.0 / h.frame.normalization().re;
    let fd = h.fd_derivative;
    let e_pair = (cs.nu_prime - fd).norm() / fd.norm();
    let e_frame = (cs.frame_real_part * scale - fd.re).abs() / fd.re.abs();
    let e_literal = (cs.raw.re - fd.re).abs() / fd.re.abs();
    let pass = agree <= 1e-8 && e_pair < 1e-2 && e_frame < 1e-2;
    report(
        8,
        pass,
        format!(
            "lambda0 {:.6}, formulas agree to {agree:.1e}; nu' {:.6} vs centered difference {:.6} (rel {e_pair:.1e}, frame {e_frame:.1e}); unnormalised pairing off by {e_literal:.3}",
            h.lambda0, cs.nu_prime, fd
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_branch() {
    let c = crossing();
    let t = Instant::now();
    let ops = default_ops();
    let h = &c.hopf;
    let lin = assemble_linearization(ops, &h.params, h.steady.as_ref().unwrap()).unwrap();
    let solver = BranchSolver::new(ops, &lin, h, BranchOptions::default()).unwrap();
    let grid = [-0.04, -0.02, -0.01, 0.01, 0.02, 0.04];
    let b = trace_branch(&solver, &grid).unwrap();
    let secs = c.elapsed.as_secs_f64() + t.elapsed().as_secs_f64();
    let at = |e: f64| b.points.iter().find(|p| p.epsilon == e);
    let mut parity = true;
    let mut ratios = Vec::new();
    for e in [0.01, 0.02, 0.04] {
        match (at(e), at(-e)) {
            (Some(p), Some(m)) => {
                parity &= (p.mu - m.mu).abs() <= 1e-6 * e * e && (p.zeta - m.zeta).abs() <= 1e-6;
                ratios.push(p.mu / (e * e));
            }
            _ => parity = false,
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    let flat = ratios.len() == 3 && ratios.iter().all(|r| (r - mean).abs() <= 0.05 * mean.abs());
    let side = b.points.iter().map(|p| p.side_residual).fold(0.0_f64, f64::max);
    let resid = b.points.iter().map(|p| p.time_residual).fold(0.0_f64, f64::max);
    let pass = b.terminated.is_none() && parity && flat && side <= 1e-10 && resid < 1e-6 && secs < 1200.0;
    report(
        9,
        pass,
        format!(
            "mu/eps^2 {ratios:.6?}, {:?} (mu2 {:.4}), side {side:.1e}, residual {resid:.1e}, {secs:.1} s",
            b.classification.kind, b.classification.mu2
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_adjoint_frame() {
    let f = &crossing().hopf.frame;
    let n = f.normalization();
    let e_norm = (n - C64::new(std::f64::consts::FRAC_1_PI, 0.0)).norm();
    let b = f.biorthogonality();
    let e_bi = [(b[0][0] - 1.0).abs(), b[0][1].abs(), b[1][0].abs(), (b[1][1] - 1.0).abs()].into_iter().fold(0.0, f64::max);
    let d = f.derivative_pairings();
    let e_d = (d[1] + 1.0).abs();
    let pass = e_norm <= 1e-12 && e_bi <= 1e-8 && e_d <= 1e-8;
    report(
        10,
        pass,
        format!("normalisation error {e_norm:.1e}, pairings error {e_bi:.1e}, ((v1)_tau|v2_dag) = {:.12} (required -1)", d[1]),
    );
    assert!(pass);
}
