mod common;

use common::{random_vec, rng};
use fsi_core::linalg::dense::dot;
use fsi_core::steady::*;
use fsi_core::{Params, Projector};

fn state(lambda: f64) -> (fsi_core::Operators, SteadyState, Params) {
    let ops = common::small();
    let p = Params::new(lambda, 2.0, 1.5, 2);
    let s = solve_steady(&p, &ops, None, NewtonOptions::default()).unwrap();
    (ops, s, p)
}

#[test]
fn steady_state_closes_and_drifts_downstream() {
    let (ops, s, p) = state(3.0);
    assert!(s.residual <= 1e-10);
    let d = closure_defect(&ops, &p, &s);
    assert!(d.iter().all(|v| v.abs() < 1e-10), "{d:?}");
    // symmetric box: no lift, drag along the stream
    assert!(s.chi0[1].abs() <= 1e-8 * s.chi0[0].abs());
    assert!(s.chi0[0] != 0.0);
    // the body velocity slot carries the stream
    assert_eq!(s.u0.body(), &[1.0, 0.0]);
}

#[test]
fn zero_reynolds_is_the_linear_solve() {
    let (ops, s, _) = state(0.0);
    let (u, _) = oseen(&ops, 0.0).unwrap();
    let d: f64 = u.iter().zip(&s.u0.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d < 1e-10);
    assert_eq!(s.newton_iterations, 0);
}

#[test]
fn sensitivity_matches_finite_difference() {
    let ops = common::small();
    let p = Params::new(2.0, 1.0, 1.0, 2);
    let s = solve_steady(&p, &ops, None, NewtonOptions::default()).unwrap();
    let (du, _) = sensitivity(&ops, &s).unwrap();
    let h = 1e-4;
    let sp = solve_steady(&p.with_lambda(2.0 + h), &ops, None, NewtonOptions::default()).unwrap();
    let sm = solve_steady(&p.with_lambda(2.0 - h), &ops, None, NewtonOptions::default()).unwrap();
    let mut err = 0.0_f64;
    let mut scale = 0.0_f64;
    for i in 0..du.len() {
        let fd = (sp.u0.values[i] - sm.u0.values[i]) / (2.0 * h);
        err = err.max((fd - du[i]).abs());
        scale = scale.max(du[i].abs());
    }
    assert!(err < 1e-6 * scale, "{err} vs {scale}");
}

#[test]
fn continuation_sets_sensitivities_and_rejects_bad_grids() {
    let ops = common::small();
    let p = Params::new(0.0, 1.0, 1.0, 2);
    let st = continue_steady(&p, &ops, &[0.0, 1.0, 2.0], NewtonOptions::default()).unwrap();
    assert_eq!(st.len(), 3);
    assert!(st.iter().all(|s| s.du0_dlambda.is_some()));
    assert!(continue_steady(&p, &ops, &[2.0, 1.0], NewtonOptions::default()).is_err());
    assert!(continue_steady(&p, &ops, &[], NewtonOptions::default()).is_err());
}

#[test]
fn thresholds_ordered_and_match_dense_oracle() {
    let ops = common::ops(12, 12, 4);
    let p = Params::new(4.0, 1.0, 1.0, 2);
    let s = solve_steady(&p, &ops, None, NewtonOptions::default()).unwrap();
    let dense = thresholds_for_field(&ops, &s.u0.values, usize::MAX).unwrap();
    let krylov = thresholds_for_field(&ops, &s.u0.values, 0).unwrap();
    assert!(dense.lambda2.value() <= dense.lambda1.value());
    assert!(common::rel(krylov.theta1, dense.theta1) < 1e-10, "{krylov:?} {dense:?}");
    assert!(common::rel(krylov.theta2, dense.theta2) < 1e-10, "{krylov:?} {dense:?}");
}

#[test]
fn rayleigh_quotients_bounded_by_theta2() {
    let ops = common::ops(12, 12, 4);
    let p = Params::new(3.0, 1.0, 1.0, 2);
    let s = solve_steady(&p, &ops, None, NewtonOptions::default()).unwrap();
    let t = thresholds_for_field(&ops, &s.u0.values, usize::MAX).unwrap();
    let form = threshold_form(&ops, &s.u0.values);
    let proj = Projector::new(&ops, 1.0).unwrap();
    let mut r = rng(11);
    for _ in 0..200 {
        let x = proj.project(&random_vec(&mut r, ops.n_coupled())).unwrap();
        let q = dot(&x, &form.matvec(&x)) / ops.dissipation(&x);
        assert!(q <= t.theta2 * (1.0 + 1e-10) + 1e-14, "{q} > {}", t.theta2);
    }
}

#[test]
fn null_space_check_passes_off_bifurcation() {
    let (ops, s, p) = state(2.0);
    let r = check_h1prime(&ops, &p, &s, 1e-10).unwrap();
    assert!(r.invertible);
    assert!(r.sigma_min > 0.0 && r.sigma_min <= r.sigma_max);
}

#[test]
fn gamma_is_one_minus_ratio() {
    let t = Thresholds {
        lambda1: Threshold::Finite(4.0),
        lambda2: Threshold::Finite(2.0),
        theta1: 0.25,
        theta2: 0.5,
    };
    assert!((t.gamma(1.0) - 0.5).abs() < 1e-15);
    assert_eq!(Threshold::Unbounded.value(), f64::INFINITY);
}

#[test]
fn steady_rejects_zero_varpi_and_wrong_guess() {
    let ops = common::small();
    let p = Params::new(1.0, 1.0, 0.0, 2);
    assert!(solve_steady(&p, &ops, None, NewtonOptions::default()).unwrap_err().is_validation());
    let p = Params::new(1.0, 1.0, 1.0, 2);
    let e = solve_steady(&p, &ops, Some((&[0.0; 3], &[0.0; 2])), NewtonOptions::default()).unwrap_err();
    assert!(e.is_validation());
}
