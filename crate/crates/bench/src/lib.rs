//! Shared fixtures for the benchmarks.

use fsi_core::steady::{continue_steady, NewtonOptions, SteadyState};
use fsi_core::{Mesh, MeshConfig, Operators, Params};

/// Operators on an `nx` by `ny` grid with a body `nb` cells across.
pub fn operators(nx: usize, ny: usize, nb: usize) -> Operators {
    Operators::new(&Mesh::build(&MeshConfig::cells(nx, ny, nb)).expect("mesh"))
}

pub fn params(lambda: f64) -> Params {
    Params { lambda, ..Params::default() }
}

/// Deterministic load vector, no RNG needed for timing.
pub fn load(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i as f64) * 0.618_033_988_75).fract() - 0.5).collect()
}

pub fn steady(ops: &Operators, lambda: f64) -> SteadyState {
    let p = params(lambda);
    let grid: Vec<f64> = (1..=4).map(|i| lambda * i as f64 / 4.0).collect();
    continue_steady(&p, ops, &grid, NewtonOptions::default())
        .expect("steady")
        .pop()
        .expect("nonempty")
}
