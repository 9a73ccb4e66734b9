//! Discrete operators on the coupled space.
//!
//! A coupled vector holds the free face velocities followed by the rigid
//! body velocity. `E` (the extension) spreads it over every face: rigid
//! faces copy the body value, walls get zero. All bilinear forms are
//! written as matrices acting on coupled vectors so that their adjoints
//! are plain transposes:
//!
//! * `stiffness` is `2 (D u, D v)` with the strain `D` sampled at cell
//!   centres (diagonal entries) and at cell edges (shear entries);
//! * `div` is the *negative* divergence, so `div^T p` is the weak gradient;
//! * transport uses a pairwise skew form, exactly energy neutral for any
//!   advecting field.

use crate::error::{Error, Result};
use crate::linalg::sparse::Csr;
use crate::mesh::{FaceKind, Mesh};

/// One transport interaction between two neighbouring faces of the same
/// component. `alpha` lists the advecting-field faces (with weights, the
/// half face area folded in) interpolated to the midpoint.
#[derive(Clone, Debug)]
pub struct Pair {
    pub f: usize,
    pub g: usize,
    pub alpha: [(usize, f64); 2],
    pub n_alpha: usize,
}

impl Pair {
    #[inline]
    pub fn flux(&self, a: &[f64]) -> f64 {
        let mut s = self.alpha[0].1 * a[self.alpha[0].0];
        if self.n_alpha == 2 {
            s += self.alpha[1].1 * a[self.alpha[1].0];
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct Operators {
    pub mesh: Mesh,
    /// Extension, faces x coupled.
    pub ext: Csr<f64>,
    /// Control volume of each coupled unknown; zero on the body slots.
    pub free_w: Vec<f64>,
    /// Negative divergence, fluid cells x coupled.
    pub div: Csr<f64>,
    /// Strain rows and their quadrature weights.
    pub strain: Csr<f64>,
    pub strain_w: Vec<f64>,
    /// Velocity gradient rows, for `|grad u|`.
    pub grad: Csr<f64>,
    pub grad_w: Vec<f64>,
    /// `2 (D u, D v)`.
    pub stiffness: Csr<f64>,
    pub pairs: Vec<Pair>,
    /// Coupled entries of each face: `(slot, coefficient)`.
    face_map: Vec<Option<usize>>,
}

type Row = Vec<(usize, f64)>;

impl Operators {
    pub fn new(mesh: &Mesh) -> Operators {
        let mesh = mesh.clone();
        let nf = mesh.n_faces();
        let nc = mesh.n_coupled();
        let mut face_map = vec![None; nf];
        let mut ext_t = Vec::new();
        for (f, slot) in face_map.iter_mut().enumerate() {
            let k = mesh.face_kind[f];
            *slot = if k.is_free() {
                mesh.face_free[f]
            } else if k.is_rigid() {
                Some(mesh.body_dof(mesh.face_comp(f)))
            } else {
                None
            };
            if let Some(s) = *slot {
                ext_t.push((f, s, 1.0));
            }
        }
        let ext = Csr::from_triplets(nf, nc, ext_t);
        let vol = mesh.cell_volume();
        let mut free_w = vec![0.0; nc];
        for (dof, &f) in mesh.free_faces.iter().enumerate() {
            free_w[dof] = if mesh.face_kind[f] == FaceKind::Outflow { 0.5 * vol } else { vol };
        }
        let mut ops = Operators {
            mesh,
            ext,
            free_w,
            div: Csr::zeros(0, 0),
            strain: Csr::zeros(0, 0),
            strain_w: Vec::new(),
            grad: Csr::zeros(0, 0),
            grad_w: Vec::new(),
            stiffness: Csr::zeros(0, 0),
            pairs: Vec::new(),
            face_map,
        };
        ops.div = ops.build_div();
        ops.build_strain();
        let wd: Vec<f64> = ops.strain_w.iter().map(|w| 2.0 * w).collect();
        let ds = scale_rows(&ops.strain, &wd);
        ops.stiffness = ops.strain.transpose().matmul(&ds);
        ops.pairs = ops.build_pairs();
        ops
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim
    }

    pub fn n_coupled(&self) -> usize {
        self.mesh.n_coupled()
    }

    pub fn n_pressure(&self) -> usize {
        self.mesh.n_pressure()
    }

    pub fn n_faces(&self) -> usize {
        self.mesh.n_faces()
    }

    fn term(&self, c: usize, i: [usize; 3]) -> Row {
        let f = self.mesh.face_id(c, i);
        match self.face_map[f] {
            Some(s) => vec![(s, 1.0)],
            None => vec![],
        }
    }

    fn build_div(&self) -> Csr<f64> {
        let m = &self.mesh;
        let area = m.h.powi(m.dim as i32 - 1);
        let mut t = Vec::new();
        for (row, &cell) in m.pressure_cells.iter().enumerate() {
            let i = m.cell_index(cell);
            for c in 0..m.dim {
                let mut ip = i;
                ip[c] += 1;
                for (s, v) in self.term(c, ip) {
                    t.push((row, s, -area * v));
                }
                for (s, v) in self.term(c, i) {
                    t.push((row, s, area * v));
                }
            }
        }
        Csr::from_triplets(m.n_pressure(), m.n_coupled(), t)
    }

    /// `d u_c / d x_e` at the edge with node index `j` in axes `c`, `e`.
    fn edge_derivative(&self, c: usize, e: usize, j: [usize; 3]) -> Row {
        let m = &self.mesh;
        let ih = 1.0 / m.h;
        let lo = if j[e] >= 1 {
            let mut i = j;
            i[e] -= 1;
            Some(i)
        } else {
            None
        };
        let hi = if j[e] < m.n[e] { Some(j) } else { None };
        let mut row = Row::new();
        match (lo, hi) {
            (Some(il), Some(ih_)) => {
                let kl = m.face_kind[m.face_id(c, il)];
                let kh = m.face_kind[m.face_id(c, ih_)];
                let body = m.body_dof(c);
                if kl == FaceKind::RigidInterior && kh.is_free() {
                    // surface halfway: ghost = 2 sigma - u_hi
                    for (s, v) in self.term(c, ih_) {
                        row.push((s, 2.0 * ih * v));
                    }
                    row.push((body, -2.0 * ih));
                } else if kh == FaceKind::RigidInterior && kl.is_free() {
                    for (s, v) in self.term(c, il) {
                        row.push((s, -2.0 * ih * v));
                    }
                    row.push((body, 2.0 * ih));
                } else {
                    for (s, v) in self.term(c, ih_) {
                        row.push((s, ih * v));
                    }
                    for (s, v) in self.term(c, il) {
                        row.push((s, -ih * v));
                    }
                }
            }
            // no-slip wall halfway: ghost = -u_inside
            (None, Some(ih_)) => {
                for (s, v) in self.term(c, ih_) {
                    row.push((s, 2.0 * ih * v));
                }
            }
            (Some(il), None) => {
                for (s, v) in self.term(c, il) {
                    row.push((s, -2.0 * ih * v));
                }
            }
            (None, None) => {}
        }
        row
    }

    fn build_strain(&mut self) {
        let m = &self.mesh;
        let vol = m.cell_volume();
        let ih = 1.0 / m.h;
        let mut ts = Vec::new();
        let mut ws = Vec::new();
        let mut tg = Vec::new();
        let mut wg = Vec::new();
        // diagonal entries at fluid cell centres
        for &cell in &m.pressure_cells {
            let i = m.cell_index(cell);
            for c in 0..m.dim {
                let mut ip = i;
                ip[c] += 1;
                let mut row = Row::new();
                for (s, v) in self.term(c, ip) {
                    row.push((s, ih * v));
                }
                for (s, v) in self.term(c, i) {
                    row.push((s, -ih * v));
                }
                let r = ws.len();
                for &(s, v) in &row {
                    ts.push((r, s, v));
                }
                ws.push(vol);
                let r = wg.len();
                for &(s, v) in &row {
                    tg.push((r, s, v));
                }
                wg.push(vol);
            }
        }
        // shear entries at edges
        for a in 0..m.dim {
            for b in (a + 1)..m.dim {
                let mut shape = m.n;
                shape[a] += 1;
                shape[b] += 1;
                let total = shape[0] * shape[1] * shape[2];
                for k in 0..total {
                    let j = crate::mesh::unlex(k, shape);
                    if m.config.outflow && (a == 0 || b == 0) && j[0] == 0 {
                        continue;
                    }
                    let mut fluid = 0usize;
                    for da in 0..2usize {
                        for db in 0..2usize {
                            if (j[a] == 0 && da == 0) || (j[b] == 0 && db == 0) {
                                continue;
                            }
                            let mut ci = j;
                            ci[a] = j[a] + da - 1;
                            ci[b] = j[b] + db - 1;
                            if ci[a] >= m.n[a] || ci[b] >= m.n[b] {
                                continue;
                            }
                            if m.cell_fluid[m.cell_id(ci)] {
                                fluid += 1;
                            }
                        }
                    }
                    if fluid == 0 {
                        continue;
                    }
                    let w = vol * fluid as f64 / 4.0;
                    let dab = self.edge_derivative(a, b, j);
                    let dba = self.edge_derivative(b, a, j);
                    let r = ws.len();
                    for &(s, v) in dab.iter().chain(dba.iter()) {
                        ts.push((r, s, 0.5 * v));
                    }
                    // D_ab and D_ba both enter D:D
                    ws.push(2.0 * w);
                    for d in [dab, dba] {
                        let r = wg.len();
                        for (s, v) in d {
                            tg.push((r, s, v));
                        }
                        wg.push(w);
                    }
                }
            }
        }
        let nc = m.n_coupled();
        self.strain = Csr::from_triplets(ws.len(), nc, ts);
        self.strain_w = ws;
        self.grad = Csr::from_triplets(wg.len(), nc, tg);
        self.grad_w = wg;
    }

    fn build_pairs(&self) -> Vec<Pair> {
        let m = &self.mesh;
        let kappa = 0.5 * m.h.powi(m.dim as i32 - 1);
        let mut pairs = Vec::new();
        for c in 0..m.dim {
            let shape = m.face_shape(c);
            for k in 0..m.face_count(c) {
                let i = crate::mesh::unlex(k, shape);
                let f = m.face_id(c, i);
                for e in 0..m.dim {
                    if i[e] + 1 >= shape[e] {
                        continue;
                    }
                    let mut ig = i;
                    ig[e] += 1;
                    let g = m.face_id(c, ig);
                    let (kf, kg) = (m.face_kind[f], m.face_kind[g]);
                    if kf == FaceKind::Wall || kg == FaceKind::Wall {
                        continue;
                    }
                    if kf.is_rigid() && kg.is_rigid() {
                        continue;
                    }
                    let mut alpha = [(0usize, 0.0); 2];
                    let n_alpha;
                    if e == c {
                        alpha = [(f, 0.5 * kappa), (g, 0.5 * kappa)];
                        n_alpha = 2;
                    } else {
                        let mut found = Vec::with_capacity(2);
                        for dc in 0..2usize {
                            if i[c] + dc == 0 {
                                continue;
                            }
                            let mut j = i;
                            j[c] = i[c] + dc - 1;
                            j[e] = i[e] + 1;
                            if j[c] >= m.n[c] {
                                continue;
                            }
                            found.push(m.face_id(e, j));
                        }
                        let wgt = kappa / found.len() as f64;
                        for (slot, &q) in found.iter().enumerate() {
                            alpha[slot] = (q, wgt);
                        }
                        n_alpha = found.len();
                    }
                    pairs.push(Pair { f, g, alpha, n_alpha });
                }
            }
        }
        pairs
    }

    /// Coupled slot carried by a face, if any.
    pub fn face_slot(&self, f: usize) -> Option<usize> {
        self.face_map[f]
    }

    /// Weights of the inner product: control volumes on free faces and
    /// `1 / varpi` on the body.
    pub fn weights(&self, varpi: f64) -> Result<Vec<f64>> {
        if !(varpi > 0.0) {
            return Err(Error::validation("varpi must be positive for the weighted inner product"));
        }
        let mut w = self.free_w.clone();
        for c in 0..self.dim() {
            w[self.mesh.body_dof(c)] = 1.0 / varpi;
        }
        Ok(w)
    }

    pub fn inner(&self, f: &[f64], g: &[f64], varpi: f64) -> Result<f64> {
        if f.len() != self.n_coupled() || g.len() != self.n_coupled() {
            return Err(Error::validation("field length does not match the mesh"));
        }
        let w = self.weights(varpi)?;
        Ok(f.iter().zip(g).zip(&w).map(|((a, b), w)| a * b * w).sum())
    }

    /// Face values of a coupled vector.
    pub fn extend(&self, u: &[f64]) -> Vec<f64> {
        self.ext.matvec(u)
    }

    /// `E u` minus the body velocity on every face: the transport field
    /// relative to the body, which vanishes on it.
    pub fn relative(&self, u: &[f64]) -> Vec<f64> {
        let mut a = self.extend(u);
        for c in 0..self.dim() {
            let s = u[self.mesh.body_dof(c)];
            let (o0, o1) = (self.mesh.face_offset[c], self.mesh.face_offset[c + 1]);
            for v in &mut a[o0..o1] {
                *v -= s;
            }
        }
        a
    }

    /// The coupled vector of the undisturbed stream seen from the body:
    /// zero in the fluid and `e_1` on the body.
    pub fn body_stream(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.n_coupled()];
        u[self.mesh.body_dof(0)] = 1.0;
        u
    }

    /// `E^T S(a) b` for face vectors `a`, `b`.
    pub fn transport(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_coupled()];
        self.transport_add(a, b, 1.0, &mut out);
        out
    }

    pub fn transport_add(&self, a: &[f64], b: &[f64], scale: f64, out: &mut [f64]) {
        for p in &self.pairs {
            let al = scale * p.flux(a);
            if let Some(sf) = self.face_map[p.f] {
                out[sf] += al * b[p.g];
            }
            if let Some(sg) = self.face_map[p.g] {
                out[sg] -= al * b[p.f];
            }
        }
    }

    /// Matrix of `w -> E^T S(a) E w`.
    pub fn transport_matrix(&self, a: &[f64]) -> Csr<f64> {
        let mut t = Vec::with_capacity(2 * self.pairs.len());
        for p in &self.pairs {
            let al = p.flux(a);
            if al == 0.0 {
                continue;
            }
            if let (Some(sf), Some(sg)) = (self.face_map[p.f], self.face_map[p.g]) {
                t.push((sf, sg, al));
                t.push((sg, sf, -al));
            }
        }
        let n = self.n_coupled();
        Csr::from_triplets(n, n, t)
    }

    /// Matrix of `w -> E^T S(relative(w)) b` for a fixed face vector `b`.
    pub fn transport_field_matrix(&self, b: &[f64]) -> Csr<f64> {
        let m = &self.mesh;
        let mut t = Vec::with_capacity(4 * self.pairs.len());
        for p in &self.pairs {
            for k in 0..p.n_alpha {
                let (q, wq) = p.alpha[k];
                let kind = m.face_kind[q];
                if kind.is_rigid() {
                    continue;
                }
                let body = m.body_dof(m.face_comp(q));
                let mut cols: [(usize, f64); 2] = [(body, -wq), (0, 0.0)];
                let mut nc = 1;
                if kind.is_free() {
                    cols[1] = (m.face_free[q].unwrap(), wq);
                    nc = 2;
                }
                for &(col, cw) in &cols[..nc] {
                    if let Some(sf) = self.face_map[p.f] {
                        t.push((sf, col, cw * b[p.g]));
                    }
                    if let Some(sg) = self.face_map[p.g] {
                        t.push((sg, col, -cw * b[p.f]));
                    }
                }
            }
        }
        let n = self.n_coupled();
        Csr::from_triplets(n, n, t)
    }

    /// Linearisation of `u -> E^T S(relative(u)) E u` at `u0`.
    pub fn transport_jacobian(&self, u0: &[f64]) -> Csr<f64> {
        let a = self.relative(u0);
        let b = self.extend(u0);
        Csr::lin_comb(1.0, &self.transport_matrix(&a), 1.0, &self.transport_field_matrix(&b))
    }

    /// `E^T S(relative(u)) E u`, the full transport of a total field.
    pub fn advection(&self, u: &[f64]) -> Vec<f64> {
        self.transport(&self.relative(u), &self.extend(u))
    }

    /// Transport as a field: `W^{-1} E^T S(E a) E b`.
    pub fn convection(&self, a: &[f64], b: &[f64], varpi: f64) -> Result<Vec<f64>> {
        let w = self.weights(varpi)?;
        let r = self.transport(&self.extend(a), &self.extend(b));
        Ok(r.iter().zip(&w).map(|(r, w)| r / w).collect())
    }

    /// Weak gradient `B^T p` as a field: `W^{-1} B^T p`. Its fluid part is
    /// the staggered gradient, the body part the pressure resultant.
    pub fn gradient(&self, p: &[f64], varpi: f64) -> Result<Vec<f64>> {
        let w = self.weights(varpi)?;
        let g = self.div.tmatvec(p);
        Ok(g.iter().zip(&w).map(|(g, w)| g / w).collect())
    }

    /// Body rows of `A u + B^T p`: the integral of `(2 D(u) - p I) n` over
    /// the body surface, `n` pointing into the body.
    pub fn traction_integral(&self, u: &[f64], p: &[f64]) -> Vec<f64> {
        let au = self.stiffness.matvec(u);
        let bp = self.div.tmatvec(p);
        (0..self.dim())
            .map(|c| {
                let s = self.mesh.body_dof(c);
                au[s] + bp[s]
            })
            .collect()
    }

    /// Full hydrodynamic reaction on the body for a total field: stress
    /// plus the transport remainder the discrete momentum balance carries
    /// on the body row.
    pub fn reaction(&self, u: &[f64], p: &[f64], lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let t = self.traction_integral(u, p);
        let adv = self.advection(u);
        let conv: Vec<f64> = (0..self.dim()).map(|c| lambda * adv[self.mesh.body_dof(c)]).collect();
        (t.iter().zip(&conv).map(|(a, b)| a + b).collect(), conv)
    }

    /// `(|D u|, |grad u|)` in the discrete L2 norm.
    pub fn strain_norm(&self, u: &[f64]) -> (f64, f64) {
        let d = self.strain.matvec(u);
        let g = self.grad.matvec(u);
        let nd: f64 = d.iter().zip(&self.strain_w).map(|(d, w)| w * d * d).sum();
        let ng: f64 = g.iter().zip(&self.grad_w).map(|(g, w)| w * g * g).sum();
        (nd.sqrt(), ng.sqrt())
    }

    /// `2 |D u|^2`, the dissipation form.
    pub fn dissipation(&self, u: &[f64]) -> f64 {
        let au = self.stiffness.matvec(u);
        u.iter().zip(&au).map(|(a, b)| a * b).sum()
    }

    /// Streamwise derivative as a coupled matrix: transport by the
    /// constant field `e_1`, skew by construction.
    pub fn streamwise(&self) -> Csr<f64> {
        let mut a = vec![0.0; self.n_faces()];
        for v in &mut a[self.mesh.face_offset[0]..self.mesh.face_offset[1]] {
            *v = 1.0;
        }
        self.transport_matrix(&a)
    }

    /// Coupled vector of a rigid translation `v` (fluid and body alike).
    pub fn rigid(&self, v: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_coupled()];
        for (dof, &f) in self.mesh.free_faces.iter().enumerate() {
            u[dof] = v[self.mesh.face_comp(f)];
        }
        for c in 0..self.dim() {
            u[self.mesh.body_dof(c)] = v[c];
        }
        u
    }
}

pub(crate) fn scale_rows(a: &Csr<f64>, w: &[f64]) -> Csr<f64> {
    let mut out = a.clone();
    for r in 0..a.nrows {
        for k in a.indptr[r]..a.indptr[r + 1] {
            out.data[k] *= w[r];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MeshConfig;

    fn ops() -> Operators {
        Operators::new(&Mesh::build(&MeshConfig::cells(12, 10, 4)).unwrap())
    }

    #[test]
    fn inner_weights() {
        let o = ops();
        let mut f = vec![0.0; o.n_coupled()];
        f[o.mesh.body_dof(0)] = 1.0;
        assert_eq!(o.inner(&f, &f, 2.0).unwrap(), 0.5);
        assert!(o.inner(&f, &f, 0.0).is_err());
    }

    #[test]
    fn stiffness_symmetric_and_kills_rigid_fields_without_walls() {
        let o = ops();
        assert!(o.stiffness.is_symmetric(1e-12));
        let u = o.rigid(&[1.0, -2.0]);
        let (nd, _) = o.strain_norm(&u);
        // walls see the rigid field, the body and interior do not
        let d = o.strain.matvec(&u);
        let interior_nonzero = d.iter().filter(|v| v.abs() > 1e-12).count();
        assert!(interior_nonzero > 0 && nd > 0.0);
    }

    #[test]
    fn transport_is_skew() {
        let o = ops();
        let a: Vec<f64> = (0..o.n_faces()).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.1).collect();
        let s = o.transport_matrix(&a);
        let st = s.transpose();
        let sum = Csr::lin_comb(1.0, &s, 1.0, &st);
        assert!(sum.data.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn relative_vanishes_on_body() {
        let o = ops();
        let mut u: Vec<f64> = (0..o.n_coupled()).map(|k| (k as f64).sin()).collect();
        u[o.mesh.body_dof(0)] = 0.3;
        let a = o.relative(&u);
        for f in 0..o.n_faces() {
            if o.mesh.face_kind[f].is_rigid() {
                assert_eq!(a[f], 0.0);
            }
        }
    }
}
