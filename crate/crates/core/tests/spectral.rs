mod common;

use common::{random_vec, rng};
use fsi_core::linalg::dense::wdotc;
use fsi_core::spectral::*;
use fsi_core::steady::*;
use fsi_core::{Params, C64};

fn setup(nx: usize, ny: usize, lambda: f64) -> (fsi_core::Operators, SteadyState, LinearizedOperator, Params) {
    let ops = common::ops(nx, ny, 4);
    let p = Params::new(lambda, 1.3, 0.9, 2);
    let mut s = solve_steady(&p, &ops, None, NewtonOptions::default()).unwrap();
    let (du, _) = sensitivity(&ops, &s).unwrap();
    s.du0_dlambda = Some(fsi_core::CoupledField { values: du, dim: 2 });
    let l = assemble_linearization(&ops, &p, &s).unwrap();
    (ops, s, l, p)
}

#[test]
fn assembled_operator_matches_matrix_free_action() {
    let (ops, _, l, _) = setup(12, 12, 6.0);
    let mut r = rng(5);
    for _ in 0..5 {
        let x = random_vec(&mut r, l.size());
        let a = l.a.matvec(&x);
        let b = l.apply_matrix_free(&ops, &x);
        let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-12 * scale);
    }
}

#[test]
fn shift_invert_agrees_with_dense_spectrum() {
    let (ops, _, l, _) = setup(12, 12, 6.0);
    let dense = dense_spectrum(&l, &ops).unwrap();
    // closed under conjugation, stable at this lambda
    for z in &dense {
        let c = dense.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
        assert!(c < 1e-8 * z.norm().max(1.0));
    }
    for shift in [C64::new(0.0, 0.0), C64::new(1.0, 5.0), C64::new(0.0, 12.0)] {
        for (i, p) in eigs(&l, shift, 3).unwrap().iter().enumerate() {
            // pairs far from the shift converge less tightly
            assert!(p.residual < if i == 0 { 1e-9 } else { 1e-5 }, "{}", p.residual);
            let d = dense.iter().map(|w| (w - p.nu).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-8 * p.nu.norm().max(1.0), "{} missing from dense", p.nu);
        }
    }
}

#[test]
fn spring_gives_complex_pairs_at_rest() {
    let ops = common::small();
    let p = Params::new(0.0, 40.0, 1.0, 2);
    let s = solve_steady(&p, &ops, None, NewtonOptions::default()).unwrap();
    let l = assemble_linearization(&ops, &p, &s).unwrap();
    let dense = dense_spectrum(&l, &ops).unwrap();
    assert!(dense.iter().all(|z| z.re > 0.0));
    assert!(dense.iter().any(|z| z.im.abs() > 1e-6), "{dense:?}");
}

#[test]
fn left_vector_and_frame_identities() {
    let (ops, _, l, _) = setup(24, 16, 20.0);
    let pair = eigs(&l, C64::new(3.0, 22.0), 4).unwrap().into_iter().find(|p| p.nu.im > 1.0).unwrap();
    let spec: Vec<C64> = eigs(&l, pair.nu - 1.0, 6).unwrap().iter().map(|p| p.nu).collect();
    let f = adjoint_frame(&l, &pair, &spec, 1e-6).unwrap();
    // A^T y = conj(nu) M y
    let y = &f.v0_dag;
    let aty = l.a.to_complex().transpose().matvec(y);
    let r: f64 = aty.iter().zip(y).zip(&l.m_diag).map(|((a, b), m)| (a - pair.nu.conj() * m * b).norm_sqr()).sum::<f64>().sqrt();
    let yn = wdotc(y, y, &l.m_diag).re.sqrt();
    assert!(r < 1e-8 * pair.nu.norm() * yn, "{r}");
    assert!((f.normalization() - C64::new(std::f64::consts::FRAC_1_PI, 0.0)).norm() < 1e-12);
    let b = f.biorthogonality();
    assert!((b[0][0] - 1.0).abs() < 1e-8 && (b[1][1] - 1.0).abs() < 1e-8);
    assert!(b[0][1].abs() < 1e-8 && b[1][0].abs() < 1e-8);
    let d = f.derivative_pairings();
    assert!(d[0].abs() < 1e-8);
    assert!((d[1].abs() - 1.0).abs() < 1e-8);
    let _ = ops;
}

#[test]
fn crossing_speed_formulas_and_eigenpath() {
    let (ops, s, l, p) = setup(24, 16, 20.0);
    let pair = eigs(&l, C64::new(3.0, 22.0), 4).unwrap().into_iter().find(|p| p.nu.im > 1.0).unwrap();
    let spec: Vec<C64> = eigs(&l, pair.nu - 1.0, 6).unwrap().iter().map(|p| p.nu).collect();
    let f = adjoint_frame(&l, &pair, &spec, 1e-6).unwrap();
    let s011 = assemble_s011_from_state(&ops, &s).unwrap();
    let c = crossing_speed(&f, &s011);
    assert!((c.raw.re - c.frame_real_part).abs() < 1e-8 * c.raw.norm().max(1e-3));
    // eigenvalue path by centered differences on the steady branch
    let d = 1e-3;
    let nu_at = |lam: f64| {
        let st = solve_steady(&p.with_lambda(lam), &ops, Some((&s.u0.values, &s.p0.values)), NewtonOptions::default()).unwrap();
        let ll = assemble_linearization(&ops, &p, &st).unwrap();
        eigs(&ll, pair.nu - 1.0, 1).unwrap()[0].nu
    };
    let fd = (nu_at(20.0 + d) - nu_at(20.0 - d)) / (2.0 * d);
    assert!((fd - c.nu_prime).norm() < 1e-2 * c.nu_prime.norm(), "{fd} vs {}", c.nu_prime);
}

#[test]
fn s011_needs_a_sensitivity() {
    let (ops, mut s, _, _) = setup(12, 12, 3.0);
    s.du0_dlambda = None;
    assert!(assemble_s011_from_state(&ops, &s).unwrap_err().is_validation());
}

#[test]
fn frame_rejects_colliding_eigenvalues() {
    let (_, _, l, _) = setup(12, 12, 3.0);
    let pair = eigs(&l, C64::new(0.0, 1.0), 1).unwrap().remove(0);
    let fake = vec![pair.nu + C64::new(1e-9, 0.0)];
    assert!(adjoint_frame(&l, &pair, &fake, 1e-6).unwrap_err().is_validation());
}

#[test]
fn harmonic_report_from_synthetic_spectrum() {
    let nu0 = C64::new(0.0, 2.0);
    let spec = vec![nu0, nu0.conj(), C64::new(0.5, 4.0), C64::new(3.0, 0.0)];
    let r = h2_report_from_spectrum(&spec, nu0, 3, 1e-6);
    assert!(r.pass);
    assert!((r.harmonic_distances[0].1 - 0.5).abs() < 1e-14);
    assert!((r.simplicity_margin - 4.25_f64.sqrt()).abs() < 1e-14);
    let spec = vec![nu0, C64::new(0.0, 4.0)];
    assert!(!h2_report_from_spectrum(&spec, nu0, 3, 1e-6).pass);
    let spec = vec![nu0, nu0 + C64::new(1e-9, 0.0)];
    assert!(!h2_report_from_spectrum(&spec, nu0, 2, 1e-6).pass);
}
