mod common;

use common::rng;
use fsi_core::evolution::*;
use fsi_core::spectral::{assemble_linearization, dense_spectrum};
use fsi_core::steady::*;
use fsi_core::{Params, Projector};

fn base(ops: &fsi_core::Operators, p: &Params) -> Vec<f64> {
    solve_steady(p, ops, None, NewtonOptions::default()).unwrap().u0.values
}

#[test]
fn zero_perturbation_stays_zero() {
    let ops = common::small();
    let p = Params::new(4.0, 1.0, 1.0, 2);
    let u0 = base(&ops, &p);
    let r = evolve(&ops, &p, &u0, &EvolState::zeros(&ops), 1.0, 0.01, EvolveOptions::default()).unwrap();
    assert!(r.state.u.values.iter().all(|v| *v == 0.0));
    assert!(r.log.energy.iter().all(|e| *e == 0.0));
    assert_eq!(r.log.len(), 101);
}

#[test]
fn zero_final_time_logs_the_initial_state() {
    let ops = common::small();
    let p = Params::new(1.0, 1.0, 1.0, 2);
    let u0 = base(&ops, &p);
    let r = evolve(&ops, &p, &u0, &EvolState::zeros(&ops), 0.0, 0.05, EvolveOptions::default()).unwrap();
    assert_eq!(r.log.len(), 1);
    assert_eq!(r.status, EvolveStatus::Completed);
}

#[test]
fn energy_nonincreasing_without_stream() {
    let ops = common::small();
    let p = Params::new(0.0, 2.0, 0.7, 2);
    let u0 = base(&ops, &p);
    let proj = Projector::new(&ops, p.varpi).unwrap();
    let u = random_perturbation(&ops, &p, &proj, &mut rng(7), 1.0).unwrap();
    let s0 = EvolState::new(&ops, u, vec![0.1, -0.05]).unwrap();
    let r = evolve(&ops, &p, &u0, &s0, 2.0, 0.01, EvolveOptions::default()).unwrap();
    for w in r.log.energy.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn linear_decay_rate_matches_leading_eigenvalue() {
    let ops = common::ops(12, 12, 4);
    let p = Params::new(3.0, 1.0, 1.0, 2);
    let s = solve_steady(&p, &ops, None, NewtonOptions::default()).unwrap();
    let l = assemble_linearization(&ops, &p, &s).unwrap();
    let nu_min = dense_spectrum(&l, &ops).unwrap().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let proj = Projector::new(&ops, p.varpi).unwrap();
    let u = random_perturbation(&ops, &p, &proj, &mut rng(8), 1.0).unwrap();
    let s0 = EvolState::new(&ops, u, vec![0.0, 0.0]).unwrap();
    let t_final = 12.0 / nu_min;
    let dt = 0.005;
    let opts = EvolveOptions { linearized: true, ..Default::default() };
    let r = evolve(&ops, &p, &s.u0.values, &s0, t_final, dt, opts).unwrap();
    let n = r.log.len();
    let (t, e) = (&r.log.t[n / 2..], &r.log.energy[n / 2..]);
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let slope = fsi_core::linalg::dense::fit_powers(t, &y, &[0, 1]).0[1];
    assert!(common::rel(-slope, 2.0 * nu_min) < 0.1, "slope {slope} vs {}", -2.0 * nu_min);
}

#[test]
fn small_amplitude_runs_match_linearized() {
    let ops = common::small();
    let p = Params::new(5.0, 1.0, 1.0, 2);
    let u0 = base(&ops, &p);
    let proj = Projector::new(&ops, p.varpi).unwrap();
    let u = random_perturbation(&ops, &p, &proj, &mut rng(9), 1e-7).unwrap();
    let s0 = EvolState::new(&ops, u, vec![0.0, 0.0]).unwrap();
    let a = evolve(&ops, &p, &u0, &s0, 1.0, 0.01, EvolveOptions::default()).unwrap();
    let lin = EvolveOptions { linearized: true, ..Default::default() };
    let b = evolve(&ops, &p, &u0, &s0, 1.0, 0.01, lin).unwrap();
    let d: f64 = a.state.u.values.iter().zip(&b.state.u.values).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n: f64 = b.state.u.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(d <= 1e-4 * n, "{d} vs {n}");
}

#[test]
fn decay_below_half_threshold() {
    let ops = common::small();
    let pr = Params::new(0.0, 1.0, 1.0, 2);
    let (s, t) = threshold_fraction(&pr, &ops, 0.5, NewtonOptions::default()).unwrap();
    let lam2 = t.lambda2.value();
    assert!(common::rel(s.lambda, 0.5 * lam2) < 1e-6);
    let p = pr.with_lambda(s.lambda);
    let proj = Projector::new(&ops, p.varpi).unwrap();
    let u = random_perturbation(&ops, &p, &proj, &mut rng(10), 0.1).unwrap();
    let s0 = EvolState::new(&ops, u, vec![0.0, 0.0]).unwrap();
    let r = evolve(&ops, &p, &s.u0.values, &s0, 20.0, 0.02, EvolveOptions::default()).unwrap();
    let rep = decay_metrics(&r.log, p.lambda, Some(lam2), DecayOptions::default()).unwrap();
    assert!(rep.monotone_after_transient, "{rep:?}");
    assert!(rep.rate < 0.0);
    assert!((rep.gamma.unwrap() - 0.5).abs() < 1e-6);
}

#[test]
fn stokes_eigenbasis_orthonormal() {
    let ops = common::small();
    let varpi = 1.4;
    let b = stokes_eigenbasis(&ops, varpi, 6).unwrap();
    let w = ops.weights(varpi).unwrap();
    for (i, bi) in b.iter().enumerate() {
        assert!(bi.eigenvalue > 0.0);
        if i > 0 {
            assert!(bi.eigenvalue >= b[i - 1].eigenvalue);
        }
        for (j, bj) in b.iter().enumerate() {
            let g: f64 = bi.field.values.iter().zip(&bj.field.values).zip(&w).map(|((x, y), w)| x * y * w).sum();
            let a = ops.stiffness.matvec(&bj.field.values);
            let d: f64 = bi.field.values.iter().zip(&a).map(|(x, y)| x * y).sum();
            let delta = if i == j { 1.0 } else { 0.0 };
            assert!((g - delta).abs() < 1e-10, "gram {i} {j}: {g}");
            assert!((d - delta * bi.eigenvalue).abs() < 1e-8 * bi.eigenvalue.max(1.0), "stiffness {i} {j}: {d}");
        }
    }
}

#[test]
fn cfl_violation_reports_admissible_step() {
    let ops = common::small();
    let p = Params::new(50.0, 1.0, 1.0, 2);
    let u0 = ops.body_stream();
    let e = Stepper::new(&ops, &p, &u0, 10.0, EvolveOptions::default()).err().unwrap();
    assert!(e.is_validation());
    assert!(e.to_string().contains("dt"), "{e}");
}

#[test]
fn state_validation() {
    let ops = common::small();
    assert!(EvolState::new(&ops, vec![0.0; 3], vec![0.0, 0.0]).is_err());
}
