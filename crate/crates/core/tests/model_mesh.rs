mod common;

use fsi_core::model::nondimensionalize_dim;
use fsi_core::{nondimensionalize, rescale, Mesh, MeshConfig, Params, PhysicalInputs};

fn rig() -> PhysicalInputs {
    PhysicalInputs {
        stream_speed: 2.0,
        body_diameter: 3.0,
        kinematic_viscosity: 6.0,
        spring_constant: 4.0,
        body_mass: 2.0,
        fluid_density: 1.0,
    }
}

#[test]
fn worked_nondimensional_example() {
    let p = nondimensionalize(&rig()).unwrap();
    assert!((p.lambda - 1.0).abs() < 1e-14);
    assert!((p.omega_n_sq - 3.0).abs() < 1e-14);
    assert!((p.varpi - 13.5).abs() < 1e-14);
    assert_eq!(p.dim, 2);
}

#[test]
fn groups_invariant_under_similarity() {
    let base = nondimensionalize(&rig()).unwrap();
    for (a, b, c) in [(2.0, 0.5, 3.0), (0.1, 7.0, 0.25), (13.0, 1.0, 1e3)] {
        let p = nondimensionalize(&rescale(&rig(), a, b, c)).unwrap();
        assert!(common::rel(p.lambda, base.lambda) < 1e-12);
        assert!(common::rel(p.omega_n_sq, base.omega_n_sq) < 1e-12);
        assert!(common::rel(p.varpi, base.varpi) < 1e-12);
    }
}

#[test]
fn bad_inputs_name_the_field() {
    let mut r = rig();
    r.body_mass = 0.0;
    let e = nondimensionalize(&r).unwrap_err().to_string();
    assert!(e.contains("body_mass"), "{e}");
    r = rig();
    r.kinematic_viscosity = f64::NAN;
    assert!(nondimensionalize(&r).unwrap_err().to_string().contains("kinematic_viscosity"));
    assert!(nondimensionalize_dim(&rig(), 4).is_err());
}

#[test]
fn varpi_zero_only_where_allowed() {
    let p = Params::new(1.0, 1.0, 0.0, 2);
    assert!(p.validate().is_ok());
    assert!(p.require_positive_varpi().is_err());
    assert!(Params::new(-1.0, 1.0, 1.0, 2).validate().is_err());
    assert!(Params::new(1.0, 0.0, 1.0, 2).validate().is_err());
}

#[test]
fn default_mesh_counts() {
    // 96 x 64 box minus the 4 x 4 body block
    let m = Mesh::build(&MeshConfig::default()).unwrap();
    assert_eq!(m.n, [96, 64, 1]);
    assert_eq!(m.body_cell_count(), 16);
    assert_eq!(m.n_pressure(), 96 * 64 - 16);
    assert_eq!(m.n_coupled(), m.n_free() + 2);
}

#[test]
fn cells_helper_centres_the_body() {
    let c = MeshConfig::cells(12, 12, 4);
    let m = Mesh::build(&c).unwrap();
    assert_eq!(m.n[0], 12);
    assert_eq!(m.n[1], 12);
    assert_eq!(m.body_cell_count(), 16);
    assert!(m.is_transversely_symmetric());
}

#[test]
fn misaligned_body_rejected() {
    let mut c = MeshConfig::default();
    c.body_lo = vec![-0.4, -0.5];
    assert!(Mesh::build(&c).unwrap_err().is_validation());
}
