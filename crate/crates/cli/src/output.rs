//! Output directory: JSON envelopes, CSV tables and field snapshots,
//! all written through a temporary file and a rename.

use std::path::{Path, PathBuf};

use fsi_core::io::{atomic_write, write_snapshot};
use fsi_core::Mesh;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Output {
    dir: PathBuf,
    hash: String,
    command: &'static str,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'a str,
    config_hash: &'a str,
    command: &'a str,
    result: &'a T,
}

impl Output {
    /// Creates the directory and writes `<command>.effective.toml`.
    pub fn new(dir: PathBuf, cfg: &RunConfig, command: &'static str) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir)?;
        let hash = cfg.hash();
        let text = format!("# fsi {VERSION} {command}, config hash {hash}\n{}", cfg.to_toml());
        atomic_write(&dir.join(format!("{command}.effective.toml")), text.as_bytes())?;
        Ok(Output { dir, hash, command })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, result: &T) -> Result<PathBuf, CliError> {
        let env = Envelope {
            version: VERSION,
            config_hash: &self.hash,
            command: self.command,
            result,
        };
        let mut bytes = serde_json::to_vec_pretty(&env).map_err(|e| CliError::Config(e.to_string()))?;
        bytes.push(b'\n');
        let p = self.path(name);
        atomic_write(&p, &bytes)?;
        Ok(p)
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(std::io::Error::other(e.to_string()));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
        let p = self.path(name);
        atomic_write(&p, &bytes)?;
        Ok(p)
    }

    /// Binary snapshot plus its JSON sidecar, which carries the version
    /// and config hash next to `extra`.
    pub fn snapshot(&self, name: &str, mesh: &Mesh, kind: &str, values: &[f64], extra: Value) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        let extra = json!({"version": VERSION, "config_hash": self.hash, "data": extra});
        write_snapshot(&p, mesh, kind, values, extra)?;
        Ok(p)
    }
}

/// Shortest round-trip text of a float (`inf`, `NaN` spelled out).
pub fn num(x: f64) -> String {
    x.to_string()
}
