//! Physical inputs, the three nondimensional groups and their checks.
//!
//! Velocity is scaled with the stream speed, length with the body
//! diameter. The groups are
//!
//! * `lambda = V L / nu` (Reynolds number),
//! * `omega_n_sq = L^2 l / (M nu)` (spring stiffness),
//! * `varpi = rho L^3 / M` (fluid-to-body density ratio).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensional description of the rig. Units only need to be coherent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalInputs {
    pub stream_speed: f64,
    pub body_diameter: f64,
    pub kinematic_viscosity: f64,
    pub spring_constant: f64,
    pub body_mass: f64,
    pub fluid_density: f64,
}

impl PhysicalInputs {
    fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("stream_speed", self.stream_speed),
            ("body_diameter", self.body_diameter),
            ("kinematic_viscosity", self.kinematic_viscosity),
            ("spring_constant", self.spring_constant),
            ("body_mass", self.body_mass),
            ("fluid_density", self.fluid_density),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.fields() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive (got {v})")));
            }
        }
        Ok(())
    }
}

/// Nondimensional parameters. `dim` is the space dimension of the body
/// displacement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub lambda: f64,
    pub omega_n_sq: f64,
    pub varpi: f64,
    pub dim: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            lambda: 1.0,
            omega_n_sq: 1.0,
            varpi: 1.0,
            dim: 2,
        }
    }
}

impl Params {
    pub fn new(lambda: f64, omega_n_sq: f64, varpi: f64, dim: usize) -> Self {
        Params {
            lambda,
            omega_n_sq,
            varpi,
            dim,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// Checks the invariants. `varpi = 0` passes here; solvers that need
    /// the weight call [`Params::require_positive_varpi`].
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::validation("lambda must be nonnegative"));
        }
        if !self.omega_n_sq.is_finite() || self.omega_n_sq <= 0.0 {
            return Err(Error::validation("omega_n_sq must be positive"));
        }
        if !self.varpi.is_finite() || self.varpi < 0.0 {
            return Err(Error::validation("varpi must be nonnegative"));
        }
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::validation("dim must be 2 or 3"));
        }
        Ok(())
    }

    pub fn require_positive_varpi(&self) -> Result<()> {
        self.validate()?;
        if self.varpi <= 0.0 {
            return Err(Error::validation(
                "varpi must be positive for this solver (varpi = 0 is only accepted by the resonance scan)",
            ));
        }
        Ok(())
    }

    /// Spring coupling seen by the body row of the weak form.
    pub fn spring_weight(&self) -> f64 {
        self.omega_n_sq / self.varpi
    }
}

/// Maps the dimensional rig onto `Params` in dimension 2.
pub fn nondimensionalize(p: &PhysicalInputs) -> Result<Params> {
    nondimensionalize_dim(p, 2)
}

pub fn nondimensionalize_dim(p: &PhysicalInputs, dim: usize) -> Result<Params> {
    p.validate()?;
    let lambda = p.stream_speed * p.body_diameter / p.kinematic_viscosity;
    let omega_n_sq =
        p.body_diameter * p.body_diameter * p.spring_constant / (p.body_mass * p.kinematic_viscosity);
    let varpi = p.fluid_density * p.body_diameter.powi(3) / p.body_mass;
    let out = Params::new(lambda, omega_n_sq, varpi, dim);
    out.validate()?;
    Ok(out)
}

/// Acts with the similarity group that leaves the three groups fixed:
/// `L -> aL, V -> bV, nu -> ab nu, M -> cM, rho -> c rho / a^3,
/// l -> l c b / a`.
pub fn rescale(p: &PhysicalInputs, a: f64, b: f64, c: f64) -> PhysicalInputs {
    PhysicalInputs {
        stream_speed: p.stream_speed * b,
        body_diameter: p.body_diameter * a,
        kinematic_viscosity: p.kinematic_viscosity * a * b,
        spring_constant: p.spring_constant * c * b / a,
        body_mass: p.body_mass * c,
        fluid_density: p.fluid_density * c / (a * a * a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones() -> PhysicalInputs {
        PhysicalInputs {
            stream_speed: 1.0,
            body_diameter: 1.0,
            kinematic_viscosity: 1.0,
            spring_constant: 1.0,
            body_mass: 1.0,
            fluid_density: 1.0,
        }
    }

    #[test]
    fn all_ones() {
        let p = nondimensionalize(&ones()).unwrap();
        assert_eq!((p.lambda, p.omega_n_sq, p.varpi), (1.0, 1.0, 1.0));
    }

    #[test]
    fn zero_density_limit() {
        let mut inp = ones();
        inp.fluid_density = 1e-300;
        let p = nondimensionalize(&inp).unwrap();
        assert!(p.varpi < 1e-299);
        assert_eq!((p.lambda, p.omega_n_sq), (1.0, 1.0));
    }

    #[test]
    fn nonpositive_names_field() {
        let mut inp = ones();
        inp.body_mass = 0.0;
        let e = nondimensionalize(&inp).unwrap_err().to_string();
        assert!(e.contains("body_mass"), "{e}");
    }

    #[test]
    fn validate_messages() {
        assert!(Params::new(1.0, 1.0, 1.0, 2).validate().is_ok());
        let e = Params::new(1.0, 0.0, 1.0, 2).validate().unwrap_err().to_string();
        assert!(e.contains("omega_n_sq must be positive"));
        let e = Params::new(-1.0, 1.0, 1.0, 2).validate().unwrap_err().to_string();
        assert!(e.contains("lambda must be nonnegative"));
        assert!(Params::new(1.0, 1.0, 0.0, 2).validate().is_ok());
        assert!(Params::new(1.0, 1.0, 0.0, 2).require_positive_varpi().is_err());
        assert!(Params::new(1.0, 1.0, 1.0, 4).validate().is_err());
    }
}
