//! Field containers with the layout of [`crate::Mesh`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Free face velocities followed by the rigid body velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledField {
    pub values: Vec<f64>,
    pub dim: usize,
}

impl CoupledField {
    pub fn zeros(mesh: &Mesh) -> Self {
        CoupledField {
            values: vec![0.0; mesh.n_coupled()],
            dim: mesh.dim,
        }
    }

    pub fn from_vec(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_coupled() {
            return Err(Error::validation(format!(
                "coupled field has {} entries, mesh expects {}",
                values.len(),
                mesh.n_coupled()
            )));
        }
        Ok(CoupledField { values, dim: mesh.dim })
    }

    pub fn fluid(&self) -> &[f64] {
        &self.values[..self.values.len() - self.dim]
    }

    pub fn body(&self) -> &[f64] {
        &self.values[self.values.len() - self.dim..]
    }

    pub fn body_mut(&mut self) -> &mut [f64] {
        let n = self.values.len();
        &mut self.values[n - self.dim..]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Cell-centred pressure on fluid cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureField {
    pub values: Vec<f64>,
}

impl PressureField {
    pub fn zeros(mesh: &Mesh) -> Self {
        PressureField {
            values: vec![0.0; mesh.n_pressure()],
        }
    }

    /// Mean over fluid cells.
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}
