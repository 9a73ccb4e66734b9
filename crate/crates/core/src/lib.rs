//! Spring-mounted rigid body in a viscous incompressible stream.
//!
//! The crate discretises the body-frame equations on a staggered grid in a
//! truncated box and provides the building blocks of a stability and
//! bifurcation study: steady states and their sensitivity, the two
//! energy thresholds, time stepping of perturbations, the linearised
//! spectrum with adjoints, the per-mode traction and resonance matrices,
//! harmonic-balance periodic solves and Hopf branch tracing.
//!
//! Everything is expressed in the nondimensional groups of [`Params`].

pub mod bifurcation;
pub mod error;
pub mod evolution;
pub mod fields;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod ops;
pub mod periodic;
pub mod projection;
pub mod spectral;
pub mod steady;

pub use error::{Error, Result};
pub use fields::{CoupledField, PressureField};
pub use mesh::{FaceKind, Mesh, MeshConfig};
pub use model::{nondimensionalize, rescale, Params, PhysicalInputs};
pub use ops::Operators;
pub use projection::Projector;

pub use num_complex::Complex64 as C64;
