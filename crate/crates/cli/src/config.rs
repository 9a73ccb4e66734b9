//! Run configuration: TOML-style `key = value` lines grouped in
//! `[sections]`, every section optional, unknown keys rejected.

use std::path::Path;

use fsi_core::bifurcation::{BranchOptions, CrossingOptions};
use fsi_core::steady::NewtonOptions;
use fsi_core::model::nondimensionalize_dim;
use fsi_core::{MeshConfig, Params, PhysicalInputs};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    /// When given, replaces `lambda`, `omega_n_sq` and `varpi` of
    /// `[params]`.
    pub physical: Option<PhysicalInputs>,
    pub params: Params,
    pub mesh: MeshConfig,
    pub newton: NewtonOptions,
    pub continuation: ContinuationSection,
    pub evolve: EvolveSection,
    pub spectrum: SpectrumSection,
    pub resonance: ResonanceSection,
    pub periodic: PeriodicSection,
    pub crossing: CrossingSection,
    pub branch: BranchSection,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Seed of every random test field.
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationSection {
    /// Largest lambda step when walking the steady branch up from rest.
    pub max_step: f64,
}

impl Default for ContinuationSection {
    fn default() -> Self {
        ContinuationSection { max_step: 5.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveSection {
    pub t_final: f64,
    pub dt: f64,
    /// Energy of the initial perturbation is `amplitude^2`.
    pub amplitude: f64,
    pub linearized: bool,
    pub cfl_max: f64,
    pub snapshot_stride: usize,
    pub transient_fraction: f64,
}

impl Default for EvolveSection {
    fn default() -> Self {
        EvolveSection {
            t_final: 10.0,
            dt: 0.02,
            amplitude: 0.1,
            linearized: false,
            cfl_max: 0.5,
            snapshot_stride: 0,
            transient_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    /// Imaginary parts of the shifts.
    pub shifts: Vec<f64>,
    pub per_shift: usize,
    pub h2_kmax: usize,
    pub h2_tol: f64,
    /// Relative distance under which eigenvalues count toward the
    /// multiplicity hint.
    pub multiplicity_tol: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            shifts: vec![0.0, 5.0, 10.0, 20.0, 40.0],
            per_shift: 6,
            h2_kmax: 4,
            h2_tol: 1e-6,
            multiplicity_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceSection {
    pub zeta0: f64,
    pub k_min: i32,
    pub k_max: i32,
    pub varpi: Vec<f64>,
}

impl Default for ResonanceSection {
    fn default() -> Self {
        ResonanceSection {
            zeta0: 1.0,
            k_min: 1,
            k_max: 16,
            varpi: vec![1.0, 0.1, 0.01, 0.0],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodicSection {
    /// Base frequency; `period` takes precedence when set.
    pub zeta0: f64,
    pub period: Option<f64>,
    pub k_trunc: usize,
    /// Forced modes, each with the same body force.
    pub modes: Vec<i32>,
    pub body_force: Vec<f64>,
    /// Scale of a seeded random fluid forcing (0: none).
    pub fluid_force: f64,
    pub samples: usize,
}

impl Default for PeriodicSection {
    fn default() -> Self {
        PeriodicSection {
            zeta0: 1.0,
            period: None,
            k_trunc: 16,
            modes: vec![1, 2, 3],
            body_force: vec![1.0, 0.0],
            fluid_force: 0.0,
            samples: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossingSection {
    pub interval: [f64; 2],
    pub solver: CrossingOptions,
}

impl Default for CrossingSection {
    fn default() -> Self {
        CrossingSection {
            interval: [40.0, 50.0],
            solver: CrossingOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchSection {
    /// Amplitudes, symmetric about zero.
    pub epsilons: Vec<f64>,
    /// Write the velocity at `tau = 0` of every point.
    pub snapshots: bool,
    pub solver: BranchOptions,
}

impl Default for BranchSection {
    fn default() -> Self {
        BranchSection {
            epsilons: vec![-0.04, -0.02, -0.01, 0.01, 0.02, 0.04],
            snapshots: false,
            solver: BranchOptions::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path` (or starts from the defaults) and applies the
    /// `section.key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", p.display())))?;
                text.parse()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let where_ = path.map_or("overrides".to_string(), |p| p.display().to_string());
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Config(format!("{where_}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.effective_params()?;
        if self.params.dim != self.mesh.box_lo.len() {
            return Err(CliError::Config(format!(
                "params.dim = {} but the mesh box has {} coordinates",
                self.params.dim,
                self.mesh.box_lo.len()
            )));
        }
        if !(self.continuation.max_step > 0.0) {
            return Err(CliError::Config("continuation.max_step must be positive".into()));
        }
        Ok(())
    }

    /// Parameters after the optional `[physical]` section.
    pub fn effective_params(&self) -> Result<Params, CliError> {
        let p = match &self.physical {
            Some(ph) => Params {
                dim: self.params.dim,
                ..nondimensionalize_dim(ph, self.params.dim)?
            },
            None => self.params,
        };
        p.validate()?;
        Ok(p)
    }

    /// The configuration as written back: feeding it to `--config`
    /// reproduces the run.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// SHA-256 of [`RunConfig::to_toml`], hex.
    pub fn hash(&self) -> String {
        let d = Sha256::digest(self.to_toml().as_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    // a TOML literal if it parses as one, a bare string otherwise
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let mut t = table;
    for part in &path[..path.len() - 1] {
        let entry = t
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{part}` is not a section")))?;
    }
    t.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}
