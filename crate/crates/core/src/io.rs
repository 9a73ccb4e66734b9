//! Field snapshots: flat little-endian binary block plus a JSON sidecar,
//! and CSV export for plotting.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshConfig};

const MAGIC: &[u8; 8] = b"FSISNAP1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub kind: String,
    pub mesh: MeshConfig,
    pub n_values: usize,
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// Header: magic, dim, cells per axis, h, value count; then the values.
pub fn write_snapshot(path: &Path, mesh: &Mesh, kind: &str, values: &[f64], extra: serde_json::Value) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + 8 * values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(mesh.dim as u64).to_le_bytes());
    for a in 0..3 {
        buf.extend_from_slice(&(mesh.n[a] as u64).to_le_bytes());
    }
    buf.extend_from_slice(&mesh.h.to_le_bytes());
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &buf)?;
    let meta = SnapshotMeta {
        kind: kind.to_string(),
        mesh: mesh.config.clone(),
        n_values: values.len(),
        extra,
    };
    let json = serde_json::to_vec_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
    atomic_write(&path.with_extension("json"), &json)
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotMeta, Vec<f64>)> {
    let mut f = std::fs::File::open(path)?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    if buf.len() < 56 || &buf[..8] != MAGIC {
        return Err(Error::Format(format!("{}: not a snapshot file", path.display())));
    }
    let word = |k: usize| u64::from_le_bytes(buf[8 + 8 * k..16 + 8 * k].try_into().unwrap());
    let n = word(5) as usize;
    if buf.len() != 56 + 8 * n {
        return Err(Error::Format(format!("{}: truncated snapshot", path.display())));
    }
    let values = (0..n)
        .map(|i| f64::from_le_bytes(buf[56 + 8 * i..64 + 8 * i].try_into().unwrap()))
        .collect();
    let meta: SnapshotMeta = serde_json::from_slice(&std::fs::read(path.with_extension("json"))?)
        .map_err(|e| Error::Format(e.to_string()))?;
    if meta.n_values != n {
        return Err(Error::Format("sidecar and snapshot disagree on length".into()));
    }
    Ok((meta, values))
}

/// Writes via a temporary file in the same directory and renames it.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// One plotting row per free face: unknown index, component, face centre
/// and value.
pub fn coupled_rows(mesh: &Mesh, values: &[f64]) -> Vec<(usize, usize, [f64; 3], f64)> {
    mesh.free_faces
        .iter()
        .enumerate()
        .map(|(dof, &f)| (dof, mesh.face_comp(f), mesh.face_position(f), values[dof]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh::build(&MeshConfig::cells(8, 8, 4)).unwrap();
        let v: Vec<f64> = (0..mesh.n_coupled()).map(|k| k as f64 * 0.5 - 3.0).collect();
        let p = dir.path().join("u.bin");
        write_snapshot(&p, &mesh, "velocity", &v, serde_json::json!({"lambda": 1.0})).unwrap();
        let (meta, back) = read_snapshot(&p).unwrap();
        assert_eq!(back, v);
        assert_eq!(meta.mesh, mesh.config);
        std::fs::write(&p, b"garbage").unwrap();
        assert!(read_snapshot(&p).is_err());
    }
}
