use fsi_cli::RunConfig;

#[test]
fn defaults_round_trip_through_text() {
    let c = RunConfig::default();
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("c.toml");
    std::fs::write(&p, c.to_toml()).unwrap();
    let back = RunConfig::load(Some(&p), &[]).unwrap();
    assert_eq!(back.to_toml(), c.to_toml());
    assert_eq!(back.hash(), c.hash());
}

#[test]
fn overrides_apply_in_order() {
    let c = RunConfig::load(None, &["params.lambda=3".into(), "params.lambda=5.5".into(), "branch.epsilons=[-0.1, 0.1]".into()]).unwrap();
    assert_eq!(c.params.lambda, 5.5);
    assert_eq!(c.branch.epsilons, vec![-0.1, 0.1]);
    let n = RunConfig::load(None, &["crossing.solver.newton.tol=1e-9".into()]).unwrap();
    assert_eq!(n.crossing.solver.newton.tol, 1e-9);
    assert_ne!(n.hash(), RunConfig::default().hash());
    assert!(RunConfig::load(None, &["params.lambda".into()]).is_err());
    assert!(RunConfig::load(None, &["params..x=1".into()]).is_err());
}

#[test]
fn physical_inputs_replace_groups() {
    let c = RunConfig::load(
        None,
        &[
            "physical.stream_speed=2".into(),
            "physical.body_diameter=3".into(),
            "physical.kinematic_viscosity=6".into(),
            "physical.spring_constant=4".into(),
            "physical.body_mass=2".into(),
            "physical.fluid_density=1".into(),
        ],
    )
    .unwrap();
    let p = c.effective_params().unwrap();
    assert!((p.lambda - 1.0).abs() < 1e-15);
    assert!((p.omega_n_sq - 3.0).abs() < 1e-15);
    assert!((p.varpi - 13.5).abs() < 1e-15);
    let e = RunConfig::load(None, &["physical.stream_speed=-1".into()]).unwrap_err();
    assert_eq!(e.exit_code(), fsi_cli::EXIT_INVALID);
}

#[test]
fn mesh_dimension_must_match() {
    assert!(RunConfig::load(None, &["params.dim=3".into()]).is_err());
}
