use fsi_bench::{load, operators, steady};

#[test]
fn fixtures_are_usable() {
    let ops = operators(24, 16, 4);
    let f = load(ops.n_coupled());
    assert_eq!(f.len(), ops.n_coupled());
    assert!(f.iter().all(|x| x.abs() <= 0.5));
    let s = steady(&ops, 2.0);
    assert!(s.residual < 1e-8);
}
