#![allow(dead_code)]

use fsi_core::{Mesh, MeshConfig, Operators};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn ops(nx: usize, ny: usize, nb: usize) -> Operators {
    Operators::new(&Mesh::build(&MeshConfig::cells(nx, ny, nb)).unwrap())
}

/// 24 x 16 cells, 4 body cells across: the workhorse small mesh.
pub fn small() -> Operators {
    ops(24, 16, 4)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
