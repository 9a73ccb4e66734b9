pub mod dense;
pub mod eigen;
pub mod gmres;
pub mod sparse;

pub use sparse::{Csr, Scalar, SparseLu};
