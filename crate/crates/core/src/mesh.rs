//! Truncated box around a rectangular body, staggered (MAC) layout.
//!
//! Pressure lives at cell centres, velocity component `c` on the faces
//! normal to axis `c`. The body is a block of whole cells; its velocity is
//! a single rigid vector carried as `dim` extra unknowns at the end of the
//! coupled vector. The stream comes from `+x` in the body frame, so the
//! wake and the traction-free outflow face sit at `x_min`.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};

/// User-facing mesh description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub h: f64,
    pub body_lo: Vec<f64>,
    pub body_hi: Vec<f64>,
    /// Traction-free face at `x_min`. With `false` every side is a wall.
    #[serde(default = "default_true")]
    pub outflow: bool,
}

fn default_true() -> bool {
    true
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            box_lo: vec![-16.0, -8.0],
            box_hi: vec![8.0, 8.0],
            h: 0.25,
            body_lo: vec![-0.5, -0.5],
            body_hi: vec![0.5, 0.5],
            outflow: true,
        }
    }
}

impl MeshConfig {
    /// Box `[x0, x1] x [y0, y1]` around the unit square with spacing `h`.
    pub fn rect(x0: f64, x1: f64, y0: f64, y1: f64, h: f64) -> Self {
        MeshConfig {
            box_lo: vec![x0, y0],
            box_hi: vec![x1, y1],
            h,
            ..MeshConfig::default()
        }
    }

    /// Small symmetric box for tests: `nx` by `ny` cells around a body of
    /// `nb` cells.
    pub fn cells(nx: usize, ny: usize, nb: usize) -> Self {
        let h = 1.0 / nb as f64;
        let wx = nx as f64 * h;
        let wy = ny as f64 * h;
        // keep the body centred on a node-aligned position
        let bx0 = ((nx - nb) / 2) as f64 * h;
        let by0 = ((ny - nb) / 2) as f64 * h;
        MeshConfig {
            box_lo: vec![-bx0 - 0.5, -by0 - 0.5],
            box_hi: vec![wx - bx0 - 0.5, wy - by0 - 0.5],
            h,
            body_lo: vec![-0.5, -0.5],
            body_hi: vec![0.5, 0.5],
            outflow: true,
        }
    }
}

/// Role of a velocity face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceKind {
    /// Interior fluid unknown.
    Free,
    /// Fluid unknown on the outflow face; half-cell control volume.
    Outflow,
    /// Normal face on the body surface, carries the rigid value.
    RigidSurface,
    /// Face inside the body, carries the rigid value.
    RigidInterior,
    /// No-slip box wall.
    Wall,
}

impl FaceKind {
    pub fn is_free(self) -> bool {
        matches!(self, FaceKind::Free | FaceKind::Outflow)
    }
    pub fn is_rigid(self) -> bool {
        matches!(self, FaceKind::RigidSurface | FaceKind::RigidInterior)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub config: MeshConfig,
    pub dim: usize,
    pub h: f64,
    pub lo: [f64; 3],
    /// Cells per axis; unused axes have 1.
    pub n: [usize; 3],
    /// Body occupies cells `body_cells[0][a] .. body_cells[1][a]`.
    pub body_cells: [[usize; 3]; 2],
    pub face_offset: [usize; 4],
    pub face_kind: Vec<FaceKind>,
    pub cell_fluid: Vec<bool>,
    /// Cell id of each pressure unknown.
    pub pressure_cells: Vec<usize>,
    /// Pressure unknown of each cell.
    pub cell_pressure: Vec<Option<usize>>,
    /// Face id of each free unknown.
    pub free_faces: Vec<usize>,
    /// Free unknown of each face.
    pub face_free: Vec<Option<usize>>,
}

fn snap(x: f64, h: f64, what: &str) -> Result<i64> {
    let r = x / h;
    let k = r.round();
    if (r - k).abs() > 1e-9 * r.abs().max(1.0) {
        return Err(Error::validation(format!("{what} is not aligned with the grid spacing")));
    }
    Ok(k as i64)
}

impl Mesh {
    pub fn build(config: &MeshConfig) -> Result<Mesh> {
        let dim = config.box_lo.len();
        if dim != 2 && dim != 3 {
            return Err(Error::validation("mesh dimension must be 2 or 3"));
        }
        if config.box_hi.len() != dim || config.body_lo.len() != dim || config.body_hi.len() != dim {
            return Err(Error::validation("box and body extents must have the same dimension"));
        }
        let h = config.h;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::validation("h must be positive"));
        }
        let mut n = [1usize; 3];
        let mut lo = [0.0; 3];
        let mut body_cells = [[0usize; 3], [1usize; 3]];
        for a in 0..dim {
            let (b0, b1) = (config.box_lo[a], config.box_hi[a]);
            let (c0, c1) = (config.body_lo[a], config.body_hi[a]);
            if !(b1 > b0) || !(c1 > c0) {
                return Err(Error::validation("extents must be increasing"));
            }
            let across = (c1 - c0) / h;
            if across < 4.0 - 1e-9 {
                return Err(Error::validation(format!(
                    "resolution too coarse: {across:.2} cells across the body, need at least 4"
                )));
            }
            let nb0 = snap(b0, h, "box")?;
            let nb1 = snap(b1, h, "box")?;
            let nc0 = snap(c0, h, "body")?;
            let nc1 = snap(c1, h, "body")?;
            if nc0 <= nb0 || nc1 >= nb1 {
                return Err(Error::validation("body touching box boundary"));
            }
            n[a] = (nb1 - nb0) as usize;
            lo[a] = b0;
            body_cells[0][a] = (nc0 - nb0) as usize;
            body_cells[1][a] = (nc1 - nb0) as usize;
        }
        let ncell = n[0] * n[1] * n[2];
        let mut cell_fluid = vec![true; ncell];
        let mut mesh = Mesh {
            config: config.clone(),
            dim,
            h,
            lo,
            n,
            body_cells,
            face_offset: [0; 4],
            face_kind: Vec::new(),
            cell_fluid: Vec::new(),
            pressure_cells: Vec::new(),
            cell_pressure: Vec::new(),
            free_faces: Vec::new(),
            face_free: Vec::new(),
        };
        for (id, fl) in cell_fluid.iter_mut().enumerate() {
            let i = mesh.cell_index(id);
            *fl = !(0..dim).all(|a| i[a] >= body_cells[0][a] && i[a] < body_cells[1][a]);
        }
        mesh.cell_fluid = cell_fluid;
        mesh.check_reachable()?;

        let mut off = 0;
        for c in 0..3 {
            mesh.face_offset[c] = off;
            if c < dim {
                off += mesh.face_count(c);
            }
        }
        mesh.face_offset[3] = off;
        let mut kinds = Vec::with_capacity(off);
        for c in 0..dim {
            let m = mesh.face_shape(c);
            for k in 0..mesh.face_count(c) {
                let i = unlex(k, m);
                kinds.push(mesh.classify_face(c, i));
            }
        }
        mesh.face_kind = kinds;

        mesh.cell_pressure = vec![None; ncell];
        for id in 0..ncell {
            if mesh.cell_fluid[id] {
                mesh.cell_pressure[id] = Some(mesh.pressure_cells.len());
                mesh.pressure_cells.push(id);
            }
        }
        mesh.face_free = vec![None; off];
        for f in 0..off {
            if mesh.face_kind[f].is_free() {
                mesh.face_free[f] = Some(mesh.free_faces.len());
                mesh.free_faces.push(f);
            }
        }
        Ok(mesh)
    }

    fn check_reachable(&self) -> Result<()> {
        let ncell = self.cell_fluid.len();
        let mut seen = vec![false; ncell];
        let mut queue = VecDeque::new();
        for id in 0..ncell {
            if !self.cell_fluid[id] {
                continue;
            }
            let i = self.cell_index(id);
            let on_edge = (0..self.dim).any(|a| i[a] == 0 || i[a] + 1 == self.n[a]);
            if on_edge {
                seen[id] = true;
                queue.push_back(id);
            }
        }
        while let Some(id) = queue.pop_front() {
            let i = self.cell_index(id);
            for a in 0..self.dim {
                for s in [-1i64, 1] {
                    let j = i[a] as i64 + s;
                    if j < 0 || j >= self.n[a] as i64 {
                        continue;
                    }
                    let mut k = i;
                    k[a] = j as usize;
                    let kid = self.cell_id(k);
                    if self.cell_fluid[kid] && !seen[kid] {
                        seen[kid] = true;
                        queue.push_back(kid);
                    }
                }
            }
        }
        if (0..ncell).any(|id| self.cell_fluid[id] && !seen[id]) {
            return Err(Error::validation("fluid cell not reachable from the far boundary"));
        }
        Ok(())
    }

    fn classify_face(&self, c: usize, i: [usize; 3]) -> FaceKind {
        if i[c] == 0 || i[c] == self.n[c] {
            if self.config.outflow && c == 0 && i[c] == 0 {
                return FaceKind::Outflow;
            }
            return FaceKind::Wall;
        }
        let mut left = i;
        left[c] -= 1;
        let sl = !self.cell_fluid[self.cell_id(left)];
        let sr = !self.cell_fluid[self.cell_id(i)];
        match (sl, sr) {
            (true, true) => FaceKind::RigidInterior,
            (true, false) | (false, true) => FaceKind::RigidSurface,
            _ => FaceKind::Free,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn cell_id(&self, i: [usize; 3]) -> usize {
        i[0] + self.n[0] * (i[1] + self.n[1] * i[2])
    }

    pub fn cell_index(&self, id: usize) -> [usize; 3] {
        unlex(id, self.n)
    }

    /// Index ranges of faces of component `c`.
    pub fn face_shape(&self, c: usize) -> [usize; 3] {
        let mut m = self.n;
        m[c] += 1;
        m
    }

    pub fn face_count(&self, c: usize) -> usize {
        let m = self.face_shape(c);
        m[0] * m[1] * m[2]
    }

    pub fn n_faces(&self) -> usize {
        self.face_offset[3]
    }

    pub fn face_id(&self, c: usize, i: [usize; 3]) -> usize {
        let m = self.face_shape(c);
        self.face_offset[c] + i[0] + m[0] * (i[1] + m[1] * i[2])
    }

    /// Component and multi-index of a face.
    pub fn face_index(&self, f: usize) -> (usize, [usize; 3]) {
        let c = (0..self.dim).rev().find(|&c| f >= self.face_offset[c]).unwrap();
        (c, unlex(f - self.face_offset[c], self.face_shape(c)))
    }

    pub fn face_comp(&self, f: usize) -> usize {
        self.face_index(f).0
    }

    pub fn face_position(&self, f: usize) -> [f64; 3] {
        let (c, i) = self.face_index(f);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            let shift = if a == c { 0.0 } else { 0.5 };
            x[a] = self.lo[a] + (i[a] as f64 + shift) * self.h;
        }
        x
    }

    pub fn cell_centre(&self, id: usize) -> [f64; 3] {
        let i = self.cell_index(id);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.lo[a] + (i[a] as f64 + 0.5) * self.h;
        }
        x
    }

    pub fn n_free(&self) -> usize {
        self.free_faces.len()
    }

    /// Free unknowns followed by the `dim` body velocity components.
    pub fn n_coupled(&self) -> usize {
        self.free_faces.len() + self.dim
    }

    pub fn n_pressure(&self) -> usize {
        self.pressure_cells.len()
    }

    pub fn body_dof(&self, c: usize) -> usize {
        self.free_faces.len() + c
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn body_cell_count(&self) -> usize {
        self.cell_fluid.iter().filter(|f| !**f).count()
    }

    /// True when the body is centred in `y` (and `z`) on the box, so the
    /// mesh is mirror symmetric about the streamwise axis.
    pub fn is_transversely_symmetric(&self) -> bool {
        (1..self.dim).all(|a| self.body_cells[0][a] == self.n[a] - self.body_cells[1][a])
    }
}

pub(crate) fn unlex(k: usize, m: [usize; 3]) -> [usize; 3] {
    [k % m[0], (k / m[0]) % m[1], k / (m[0] * m[1])]
}
