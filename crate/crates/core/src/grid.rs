//! Voxel cell complex over a uniform Cartesian lattice.
//!
//! Cochain placement is staggered (Yee): scalars on vertices (degree 0),
//! circulations on edges (degree 1), fluxes on faces (degree 2), densities in
//! cells (degree 3). Values are the *integrated* quantities, so the discrete
//! derivative `d` is a pure signed incidence sum with integer weights; all
//! metric factors live in the pairings.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{HelioxError, Result};

/// Magic string at the head of every field snapshot file.
pub const SNAPSHOT_MAGIC: &[u8; 5] = b"HLTR1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

pub const AXES: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

impl Axis {
    #[inline]
    pub fn unit(self) -> [i64; 3] {
        match self {
            Axis::X => [1, 0, 0],
            Axis::Y => [0, 1, 0],
            Axis::Z => [0, 0, 1],
        }
    }

    /// The two axes completing a right-handed frame with `self`.
    #[inline]
    pub fn others(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::Z, Axis::X),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Degree {
    Vertex = 0,
    Edge = 1,
    Face = 2,
    Cell = 3,
}

impl Degree {
    pub fn from_u8(v: u8) -> Option<Degree> {
        match v {
            0 => Some(Degree::Vertex),
            1 => Some(Degree::Edge),
            2 => Some(Degree::Face),
            3 => Some(Degree::Cell),
            _ => None,
        }
    }

    #[inline]
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// Uniform lattice dimensions and spacing.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub h: f64,
    pub origin: [f64; 3],
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, h: f64, origin: [f64; 3]) -> Result<GridSpec> {
        let spec = GridSpec { nx, ny, nz, h, origin };
        spec.validate()?;
        Ok(spec)
    }

    pub fn cubed(n: usize, h: f64) -> Result<GridSpec> {
        GridSpec::new(n, n, n, h, [0.0; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || self.nz < 2 {
            return Err(HelioxError::InvalidSpec(format!(
                "need at least 2 cells per axis, got {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(HelioxError::InvalidSpec(format!("spacing h must be positive, got {}", self.h)));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(HelioxError::InvalidSpec("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }
}

/// Dense index block for one entity family (fixed axis, fixed degree).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Dims(pub usize, pub usize, pub usize);

impl Dims {
    #[inline]
    pub fn len(self) -> usize {
        self.0 * self.1 * self.2
    }

    #[inline]
    pub fn flat(self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.0 && j < self.1 && k < self.2);
        (i * self.1 + j) * self.2 + k
    }

    #[inline]
    pub fn contains(self, i: i64, j: i64, k: i64) -> bool {
        i >= 0 && j >= 0 && k >= 0 && (i as usize) < self.0 && (j as usize) < self.1 && (k as usize) < self.2
    }

    #[inline]
    pub fn unflat(self, id: usize) -> (usize, usize, usize) {
        let k = id % self.2;
        let j = (id / self.2) % self.1;
        let i = id / (self.2 * self.1);
        (i, j, k)
    }
}

const NO_SLOT: u32 = u32::MAX;

/// Voxelized domain: active entity sets (closure of the active cells),
/// boundary classification and the incidence operators.
///
/// Full-lattice entity ids enumerate, per degree, the axis families in order
/// X, Y, Z (degrees 1 and 2), each family in lexicographic (i, j, k) order
/// with k fastest. Active entities inherit that order; field values and
/// snapshot files are laid out in it.
pub struct CellComplex {
    spec: GridSpec,
    /// full id -> active slot (NO_SLOT if inactive), one table per degree.
    slots: [Vec<u32>; 4],
    /// active slot -> full id, one table per degree.
    actives: [Vec<u32>; 4],
    /// active slot -> lies on the domain boundary, one table per degree.
    boundary: [Vec<bool>; 4],
    /// active slot -> lumped mass fraction (active cells containing the
    /// entity / cells a generic entity of that degree touches), one table
    /// per degree. Interior entities carry 1, boundary entities less.
    mass: [Vec<f64>; 4],
}

impl CellComplex {
    /// Voxelize `mask` over `spec`. The mask must be nonempty, edge-connected
    /// and keep a one-cell margin to the lattice boundary.
    pub fn build<F: Fn(usize, usize, usize) -> bool>(spec: GridSpec, mask: F) -> Result<Arc<CellComplex>> {
        spec.validate()?;
        let cdims = Dims(spec.nx, spec.ny, spec.nz);
        let mut cell_active = vec![false; cdims.len()];
        let mut count = 0usize;
        for i in 0..spec.nx {
            for j in 0..spec.ny {
                for k in 0..spec.nz {
                    if mask(i, j, k) {
                        if i == 0 || j == 0 || k == 0 || i == spec.nx - 1 || j == spec.ny - 1 || k == spec.nz - 1 {
                            return Err(HelioxError::MaskTouchesBoundary);
                        }
                        cell_active[cdims.flat(i, j, k)] = true;
                        count += 1;
                    }
                }
            }
        }
        if count == 0 {
            return Err(HelioxError::EmptyMask);
        }
        let components = count_components(&cell_active, cdims);
        if components != 1 {
            return Err(HelioxError::DisconnectedMask { components });
        }
        Ok(Arc::new(Self::from_cell_flags(spec, cell_active)))
    }

    /// Like `build`, but accepts a disconnected active set. Used for
    /// exterior complements, which legitimately split into several
    /// components (a shell's cavity plus the outside).
    pub(crate) fn build_multi<F: Fn(usize, usize, usize) -> bool>(spec: GridSpec, mask: F) -> Result<Arc<CellComplex>> {
        spec.validate()?;
        let cdims = Dims(spec.nx, spec.ny, spec.nz);
        let mut cell_active = vec![false; cdims.len()];
        let mut count = 0usize;
        for i in 0..spec.nx {
            for j in 0..spec.ny {
                for k in 0..spec.nz {
                    if mask(i, j, k) {
                        if i == 0 || j == 0 || k == 0 || i == spec.nx - 1 || j == spec.ny - 1 || k == spec.nz - 1 {
                            return Err(HelioxError::MaskTouchesBoundary);
                        }
                        cell_active[cdims.flat(i, j, k)] = true;
                        count += 1;
                    }
                }
            }
        }
        if count == 0 {
            return Err(HelioxError::EmptyMask);
        }
        Ok(Arc::new(Self::from_cell_flags(spec, cell_active)))
    }

    fn from_cell_flags(spec: GridSpec, cell_active: Vec<bool>) -> CellComplex {
        let mut c = CellComplex {
            spec,
            slots: [Vec::new(), Vec::new(), Vec::new(), Vec::new()],
            actives: [Vec::new(), Vec::new(), Vec::new(), Vec::new()],
            boundary: [Vec::new(), Vec::new(), Vec::new(), Vec::new()],
            mass: [Vec::new(), Vec::new(), Vec::new(), Vec::new()],
        };

        // Degree 3: the cells themselves.
        let cdims = c.family_dims(Degree::Cell, Axis::X);
        let mut slots3 = vec![NO_SLOT; cdims.len()];
        let mut act3 = Vec::new();
        for id in 0..cdims.len() {
            if cell_active[id] {
                slots3[id] = act3.len() as u32;
                act3.push(id as u32);
            }
        }
        c.slots[3] = slots3;
        c.actives[3] = act3;

        let is_cell = |i: i64, j: i64, k: i64| -> bool {
            cdims.contains(i, j, k) && cell_active[cdims.flat(i as usize, j as usize, k as usize)]
        };

        // Degree 2: faces of active cells. A face is boundary iff exactly one
        // of its two cells is active.
        let total2 = c.family_len(Degree::Face);
        let mut slots2 = vec![NO_SLOT; total2];
        let mut act2 = Vec::new();
        let mut bnd2 = Vec::new();
        for axis in AXES {
            let d = c.family_dims(Degree::Face, axis);
            let u = axis.unit();
            for i in 0..d.0 {
                for j in 0..d.1 {
                    for k in 0..d.2 {
                        // Face (axis,i,j,k) sits between cells p - u and p,
                        // where p has the face's indices.
                        let (ci, cj, ck) = (i as i64, j as i64, k as i64);
                        let hi = is_cell(ci, cj, ck);
                        let lo = is_cell(ci - u[0], cj - u[1], ck - u[2]);
                        if hi || lo {
                            let full = c.family_offset(Degree::Face, axis) + d.flat(i, j, k);
                            slots2[full] = act2.len() as u32;
                            act2.push(full as u32);
                            bnd2.push(hi != lo);
                        }
                    }
                }
            }
        }
        c.slots[2] = slots2;
        c.actives[2] = act2;
        c.boundary[2] = bnd2;

        // Degree 1: edges of active cells (an edge is shared by 4 cells).
        let total1 = c.family_len(Degree::Edge);
        let mut slots1 = vec![NO_SLOT; total1];
        let mut act1 = Vec::new();
        for axis in AXES {
            let d = c.family_dims(Degree::Edge, axis);
            let (t1, t2) = axis.others();
            let u1 = t1.unit();
            let u2 = t2.unit();
            for i in 0..d.0 {
                for j in 0..d.1 {
                    for k in 0..d.2 {
                        let p = [i as i64, j as i64, k as i64];
                        let mut any = false;
                        for (s1, s2) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let ci = p[0] - s1 * u1[0] - s2 * u2[0];
                            let cj = p[1] - s1 * u1[1] - s2 * u2[1];
                            let ck = p[2] - s1 * u1[2] - s2 * u2[2];
                            if is_cell(ci, cj, ck) {
                                any = true;
                                break;
                            }
                        }
                        if any {
                            let full = c.family_offset(Degree::Edge, axis) + d.flat(i, j, k);
                            slots1[full] = act1.len() as u32;
                            act1.push(full as u32);
                        }
                    }
                }
            }
        }
        c.slots[1] = slots1;
        c.actives[1] = act1;

        // Degree 0: vertices of active cells (a vertex is shared by 8 cells).
        let vdims = c.family_dims(Degree::Vertex, Axis::X);
        let mut slots0 = vec![NO_SLOT; vdims.len()];
        let mut act0 = Vec::new();
        for i in 0..vdims.0 {
            for j in 0..vdims.1 {
                for k in 0..vdims.2 {
                    let p = [i as i64, j as i64, k as i64];
                    let mut any = false;
                    'outer: for si in 0..2i64 {
                        for sj in 0..2i64 {
                            for sk in 0..2i64 {
                                if is_cell(p[0] - si, p[1] - sj, p[2] - sk) {
                                    any = true;
                                    break 'outer;
                                }
                            }
                        }
                    }
                    if any {
                        let full = vdims.flat(i, j, k);
                        slots0[full] = act0.len() as u32;
                        act0.push(full as u32);
                    }
                }
            }
        }
        c.slots[0] = slots0;
        c.actives[0] = act0;

        // Boundary edges and vertices: entities of boundary faces.
        let mut bnd1 = vec![false; c.actives[1].len()];
        let mut bnd0 = vec![false; c.actives[0].len()];
        for slot in 0..c.actives[2].len() {
            if !c.boundary[2][slot] {
                continue;
            }
            let (axis, i, j, k) = c.face_coords(c.actives[2][slot] as usize);
            for (eid, _) in c.face_edge_ids(axis, i, j, k) {
                bnd1[c.slots[1][eid] as usize] = true;
            }
            let (t1, t2) = axis.others();
            let u1 = t1.unit();
            let u2 = t2.unit();
            for (s1, s2) in [(0i64, 0i64), (0, 1), (1, 0), (1, 1)] {
                let vi = i as i64 + s1 * u1[0] + s2 * u2[0];
                let vj = j as i64 + s1 * u1[1] + s2 * u2[1];
                let vk = k as i64 + s1 * u1[2] + s2 * u2[2];
                let vid = c.vertex_id(vi as usize, vj as usize, vk as usize);
                bnd0[c.slots[0][vid] as usize] = true;
            }
        }
        c.boundary[1] = bnd1;
        c.boundary[0] = bnd0;
        c.boundary[3] = vec![false; c.actives[3].len()];

        // Lumped mass fractions: active cells containing each entity over the
        // generic incidence count (8 per vertex, 4 per edge, 2 per face).
        let is_cell = |i: i64, j: i64, k: i64| -> bool {
            let d = c.family_dims(Degree::Cell, Axis::X);
            d.contains(i, j, k) && cell_active[d.flat(i as usize, j as usize, k as usize)]
        };
        let mut mass0 = Vec::with_capacity(c.actives[0].len());
        let vdims = c.family_dims(Degree::Vertex, Axis::X);
        for &full in &c.actives[0] {
            let (i, j, k) = vdims.unflat(full as usize);
            let mut n = 0;
            for si in 0..2i64 {
                for sj in 0..2i64 {
                    for sk in 0..2i64 {
                        if is_cell(i as i64 - si, j as i64 - sj, k as i64 - sk) {
                            n += 1;
                        }
                    }
                }
            }
            mass0.push(n as f64 / 8.0);
        }
        let mut mass1 = Vec::with_capacity(c.actives[1].len());
        for &full in &c.actives[1] {
            let (axis, i, j, k) = c.edge_coords(full as usize);
            let (t1, t2) = axis.others();
            let (u1, u2) = (t1.unit(), t2.unit());
            let p = [i as i64, j as i64, k as i64];
            let mut n = 0;
            for (s1, s2) in [(0i64, 0i64), (0, 1), (1, 0), (1, 1)] {
                if is_cell(p[0] - s1 * u1[0] - s2 * u2[0], p[1] - s1 * u1[1] - s2 * u2[1], p[2] - s1 * u1[2] - s2 * u2[2]) {
                    n += 1;
                }
            }
            mass1.push(n as f64 / 4.0);
        }
        let mut mass2 = Vec::with_capacity(c.actives[2].len());
        for &full in &c.actives[2] {
            let (axis, i, j, k) = c.face_coords(full as usize);
            let u = axis.unit();
            let p = [i as i64, j as i64, k as i64];
            let mut n = 0;
            if is_cell(p[0], p[1], p[2]) {
                n += 1;
            }
            if is_cell(p[0] - u[0], p[1] - u[1], p[2] - u[2]) {
                n += 1;
            }
            mass2.push(n as f64 / 2.0);
        }
        c.mass[0] = mass0;
        c.mass[1] = mass1;
        c.mass[2] = mass2;
        c.mass[3] = vec![1.0; c.actives[3].len()];
        c
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn h(&self) -> f64 {
        self.spec.h
    }

    /// Entity family dimensions. Degrees 0 and 3 ignore the axis.
    pub(crate) fn family_dims(&self, degree: Degree, axis: Axis) -> Dims {
        let GridSpec { nx, ny, nz, .. } = self.spec;
        match (degree, axis) {
            (Degree::Vertex, _) => Dims(nx + 1, ny + 1, nz + 1),
            (Degree::Edge, Axis::X) => Dims(nx, ny + 1, nz + 1),
            (Degree::Edge, Axis::Y) => Dims(nx + 1, ny, nz + 1),
            (Degree::Edge, Axis::Z) => Dims(nx + 1, ny + 1, nz),
            (Degree::Face, Axis::X) => Dims(nx + 1, ny, nz),
            (Degree::Face, Axis::Y) => Dims(nx, ny + 1, nz),
            (Degree::Face, Axis::Z) => Dims(nx, ny, nz + 1),
            (Degree::Cell, _) => Dims(nx, ny, nz),
        }
    }

    pub(crate) fn family_offset(&self, degree: Degree, axis: Axis) -> usize {
        match degree {
            Degree::Vertex | Degree::Cell => 0,
            _ => match axis {
                Axis::X => 0,
                Axis::Y => self.family_dims(degree, Axis::X).len(),
                Axis::Z => self.family_dims(degree, Axis::X).len() + self.family_dims(degree, Axis::Y).len(),
            },
        }
    }

    fn family_len(&self, degree: Degree) -> usize {
        match degree {
            Degree::Vertex | Degree::Cell => self.family_dims(degree, Axis::X).len(),
            _ => AXES.iter().map(|&a| self.family_dims(degree, a).len()).sum(),
        }
    }

    #[inline]
    pub(crate) fn vertex_id(&self, i: usize, j: usize, k: usize) -> usize {
        self.family_dims(Degree::Vertex, Axis::X).flat(i, j, k)
    }

    #[inline]
    pub(crate) fn edge_id(&self, axis: Axis, i: usize, j: usize, k: usize) -> usize {
        self.family_offset(Degree::Edge, axis) + self.family_dims(Degree::Edge, axis).flat(i, j, k)
    }

    #[inline]
    pub(crate) fn face_id(&self, axis: Axis, i: usize, j: usize, k: usize) -> usize {
        self.family_offset(Degree::Face, axis) + self.family_dims(Degree::Face, axis).flat(i, j, k)
    }

    #[inline]
    pub(crate) fn cell_id(&self, i: usize, j: usize, k: usize) -> usize {
        self.family_dims(Degree::Cell, Axis::X).flat(i, j, k)
    }

    /// Split a full edge/face id into its axis family and lattice coords.
    pub(crate) fn split_family(&self, degree: Degree, full: usize) -> (Axis, usize, usize, usize) {
        let mut rest = full;
        for axis in AXES {
            let d = self.family_dims(degree, axis);
            if rest < d.len() {
                let (i, j, k) = d.unflat(rest);
                return (axis, i, j, k);
            }
            rest -= d.len();
        }
        unreachable!("entity id out of range");
    }

    pub(crate) fn edge_coords(&self, full: usize) -> (Axis, usize, usize, usize) {
        self.split_family(Degree::Edge, full)
    }

    pub(crate) fn face_coords(&self, full: usize) -> (Axis, usize, usize, usize) {
        self.split_family(Degree::Face, full)
    }

    #[inline]
    pub(crate) fn slot(&self, degree: Degree, full: usize) -> Option<usize> {
        let s = self.slots[degree as usize][full];
        (s != NO_SLOT).then_some(s as usize)
    }

    pub fn n_active(&self, degree: Degree) -> usize {
        self.actives[degree as usize].len()
    }

    pub fn n_boundary(&self, degree: Degree) -> usize {
        self.boundary[degree as usize].iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn is_boundary_slot(&self, degree: Degree, slot: usize) -> bool {
        self.boundary[degree as usize][slot]
    }

    /// Lumped mass fraction of an active entity (1 in the interior).
    #[inline]
    pub(crate) fn mass_weight(&self, degree: Degree, slot: usize) -> f64 {
        self.mass[degree as usize][slot]
    }

    #[inline]
    pub(crate) fn full_id(&self, degree: Degree, slot: usize) -> usize {
        self.actives[degree as usize][slot] as usize
    }

    pub(crate) fn active_ids(&self, degree: Degree) -> &[u32] {
        &self.actives[degree as usize]
    }

    pub(crate) fn is_cell_active(&self, i: i64, j: i64, k: i64) -> bool {
        let d = self.family_dims(Degree::Cell, Axis::X);
        d.contains(i, j, k) && self.slots[3][d.flat(i as usize, j as usize, k as usize)] != NO_SLOT
    }

    /// Euler characteristic V - E + F - C over active entities.
    pub fn euler_characteristic(&self) -> i64 {
        self.n_active(Degree::Vertex) as i64 - self.n_active(Degree::Edge) as i64
            + self.n_active(Degree::Face) as i64
            - self.n_active(Degree::Cell) as i64
    }

    /// The four (edge id, orientation) pairs bounding face (axis,i,j,k), in
    /// the circulation order matching the right-hand rule about +axis.
    pub(crate) fn face_edge_ids(&self, axis: Axis, i: usize, j: usize, k: usize) -> [(usize, f64); 4] {
        let (t1, t2) = axis.others();
        let u1 = t1.unit();
        let u2 = t2.unit();
        let p = [i, j, k];
        let shift = |u: [i64; 3]| {
            [
                (p[0] as i64 + u[0]) as usize,
                (p[1] as i64 + u[1]) as usize,
                (p[2] as i64 + u[2]) as usize,
            ]
        };
        let q1 = shift(u1);
        let q2 = shift(u2);
        [
            (self.edge_id(t1, i, j, k), 1.0),
            (self.edge_id(t2, q1[0], q1[1], q1[2]), 1.0),
            (self.edge_id(t1, q2[0], q2[1], q2[2]), -1.0),
            (self.edge_id(t2, i, j, k), -1.0),
        ]
    }

    /// The six (face id, outward sign) pairs bounding cell (i,j,k).
    pub(crate) fn cell_face_ids(&self, i: usize, j: usize, k: usize) -> [(usize, f64); 6] {
        [
            (self.face_id(Axis::X, i + 1, j, k), 1.0),
            (self.face_id(Axis::X, i, j, k), -1.0),
            (self.face_id(Axis::Y, i, j + 1, k), 1.0),
            (self.face_id(Axis::Y, i, j, k), -1.0),
            (self.face_id(Axis::Z, i, j, k + 1), 1.0),
            (self.face_id(Axis::Z, i, j, k), -1.0),
        ]
    }

    /// The 8 same-axis faces straddling edge (axis,i,j,k): both face planes
    /// the edge spans, times the four diagonal offsets. Entries outside the
    /// lattice are reported as None (zero extension).
    pub(crate) fn edge_n8_face_ids(&self, axis: Axis, i: usize, j: usize, k: usize) -> [Option<usize>; 8] {
        let d = self.family_dims(Degree::Face, axis);
        let (t1, t2) = axis.others();
        let u1 = t1.unit();
        let u2 = t2.unit();
        let ua = axis.unit();
        let p = [i as i64, j as i64, k as i64];
        let mut out = [None; 8];
        let mut n = 0;
        for sa in 0..2 {
            for s1 in -1..=0 {
                for s2 in -1..=0 {
                    let q = [
                        p[0] + sa * ua[0] + s1 * u1[0] + s2 * u2[0],
                        p[1] + sa * ua[1] + s1 * u1[1] + s2 * u2[1],
                        p[2] + sa * ua[2] + s1 * u1[2] + s2 * u2[2],
                    ];
                    out[n] = d
                        .contains(q[0], q[1], q[2])
                        .then(|| self.family_offset(Degree::Face, axis) + d.flat(q[0] as usize, q[1] as usize, q[2] as usize));
                    n += 1;
                }
            }
        }
        out
    }

    /// Zero field of the given degree.
    pub fn zero_field(self: &Arc<Self>, degree: Degree) -> Field {
        Field {
            complex: Arc::clone(self),
            degree,
            values: vec![0.0; self.n_active(degree)],
        }
    }

    /// Wrap a value vector without the finiteness scan; for solver inner
    /// loops where values come from our own arithmetic.
    pub(crate) fn field_from_values_unchecked(self: &Arc<Self>, degree: Degree, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), self.n_active(degree));
        Field {
            complex: Arc::clone(self),
            degree,
            values,
        }
    }

    pub fn field_from_values(self: &Arc<Self>, degree: Degree, values: Vec<f64>) -> Result<Field> {
        if values.len() != self.n_active(degree) {
            return Err(HelioxError::InvalidParameter(format!(
                "value count {} does not match active entity count {}",
                values.len(),
                self.n_active(degree)
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HelioxError::NonFinite);
        }
        Ok(Field {
            complex: Arc::clone(self),
            degree,
            values,
        })
    }

    /// Discrete derivative: gradient (0->1), curl (1->2), divergence (2->3).
    /// Signed incidence sums of the stored integrated quantities; no spacing
    /// factors.
    pub fn d(self: &Arc<Self>, f: &Field) -> Result<Field> {
        f.check_complex(self)?;
        match f.degree {
            Degree::Vertex => {
                let mut out = self.zero_field(Degree::Edge);
                for slot in 0..self.n_active(Degree::Edge) {
                    let (axis, i, j, k) = self.edge_coords(self.full_id(Degree::Edge, slot));
                    let u = axis.unit();
                    let tail = self.vertex_id(i, j, k);
                    let head = self.vertex_id(
                        (i as i64 + u[0]) as usize,
                        (j as i64 + u[1]) as usize,
                        (k as i64 + u[2]) as usize,
                    );
                    let vt = f.values[self.slot(Degree::Vertex, tail).expect("closure")];
                    let vh = f.values[self.slot(Degree::Vertex, head).expect("closure")];
                    out.values[slot] = vh - vt;
                }
                Ok(out)
            }
            Degree::Edge => {
                let mut out = self.zero_field(Degree::Face);
                for slot in 0..self.n_active(Degree::Face) {
                    let (axis, i, j, k) = self.face_coords(self.full_id(Degree::Face, slot));
                    let mut acc = 0.0;
                    for (eid, sign) in self.face_edge_ids(axis, i, j, k) {
                        acc += sign * f.values[self.slot(Degree::Edge, eid).expect("closure")];
                    }
                    out.values[slot] = acc;
                }
                Ok(out)
            }
            Degree::Face => {
                let mut out = self.zero_field(Degree::Cell);
                for slot in 0..self.n_active(Degree::Cell) {
                    let full = self.full_id(Degree::Cell, slot);
                    let (i, j, k) = self.family_dims(Degree::Cell, Axis::X).unflat(full);
                    let mut acc = 0.0;
                    for (fid, sign) in self.cell_face_ids(i, j, k) {
                        acc += sign * f.values[self.slot(Degree::Face, fid).expect("closure")];
                    }
                    out.values[slot] = acc;
                }
                Ok(out)
            }
            Degree::Cell => Err(HelioxError::TopDegree),
        }
    }

    /// Transpose curl: face fluxes to an edge 1-cochain carrying the
    /// circulation of curl B. The raw incidence-transpose sum scales by 1/h
    /// to convert flux differences into a circulation.
    pub fn curl_to_edges(self: &Arc<Self>, b: &Field) -> Result<Field> {
        b.check_complex_degree(self, Degree::Face)?;
        let inv_h = 1.0 / self.spec.h;
        let mut out = self.zero_field(Degree::Edge);
        for slot in 0..self.n_active(Degree::Edge) {
            let (axis, i, j, k) = self.edge_coords(self.full_id(Degree::Edge, slot));
            // Faces containing this edge, with the sign the edge carries in
            // that face's circulation (transpose of face_edge_ids).
            let mut acc = 0.0;
            for (fid, sign) in self.edge_coface_ids(axis, i, j, k) {
                if let Some(fid) = fid {
                    if let Some(fslot) = self.slot(Degree::Face, fid) {
                        acc += sign * b.values[fslot];
                    }
                }
            }
            out.values[slot] = acc * inv_h;
        }
        Ok(out)
    }

    #[inline]
    pub(crate) fn face_lookup(&self, normal: Axis, q: [i64; 3]) -> Option<usize> {
        let d = self.family_dims(Degree::Face, normal);
        d.contains(q[0], q[1], q[2])
            .then(|| self.family_offset(Degree::Face, normal) + d.flat(q[0] as usize, q[1] as usize, q[2] as usize))
    }

    /// The up-to-four faces containing edge (axis,i,j,k) with the sign the
    /// edge carries in each face's circulation (the transpose of
    /// `face_edge_ids`). None marks faces outside the lattice.
    pub(crate) fn edge_coface_ids(&self, axis: Axis, i: usize, j: usize, k: usize) -> [(Option<usize>, f64); 4] {
        let p = [i as i64, j as i64, k as i64];
        let mut out = [(None, 0.0); 4];
        let mut n = 0;
        for normal in [axis.others().0, axis.others().1] {
            let (t1, t2) = normal.others();
            if axis == t1 {
                // This edge is the t1 edge: +1 at the face based at p,
                // -1 at the face based one step back along t2.
                let u2 = t2.unit();
                out[n] = (self.face_lookup(normal, p), 1.0);
                out[n + 1] = (self.face_lookup(normal, [p[0] - u2[0], p[1] - u2[1], p[2] - u2[2]]), -1.0);
            } else {
                debug_assert_eq!(axis, t2);
                let u1 = t1.unit();
                out[n] = (self.face_lookup(normal, p), -1.0);
                out[n + 1] = (self.face_lookup(normal, [p[0] - u1[0], p[1] - u1[1], p[2] - u1[2]]), 1.0);
            }
            n += 2;
        }
        out
    }

    /// L² pairing of two 0-cochains: lumped-mass h³ Σ w φψ.
    pub fn pair_00(self: &Arc<Self>, a: &Field, b: &Field) -> Result<f64> {
        a.check_complex_degree(self, Degree::Vertex)?;
        b.check_complex_degree(self, Degree::Vertex)?;
        let h = self.spec.h;
        Ok(h * h * h * dot3(&a.values, &b.values, &self.mass[0]))
    }

    /// L² pairing of two 1-cochains (circulations interpreted as field
    /// values times h): lumped-mass h Σ w ab.
    pub fn pair_11(self: &Arc<Self>, a: &Field, b: &Field) -> Result<f64> {
        a.check_complex_degree(self, Degree::Edge)?;
        b.check_complex_degree(self, Degree::Edge)?;
        Ok(self.spec.h * dot3(&a.values, &b.values, &self.mass[1]))
    }

    /// L² pairing of two 2-cochains (fluxes interpreted as field values
    /// times h²): lumped-mass (1/h) Σ w vw.
    pub fn pair_22(self: &Arc<Self>, a: &Field, b: &Field) -> Result<f64> {
        a.check_complex_degree(self, Degree::Face)?;
        b.check_complex_degree(self, Degree::Face)?;
        Ok(dot3(&a.values, &b.values, &self.mass[2]) / self.spec.h)
    }

    /// L² pairing of two 3-cochains (cell integrals): (1/h³) Σ ab.
    pub fn pair_33(self: &Arc<Self>, a: &Field, b: &Field) -> Result<f64> {
        a.check_complex_degree(self, Degree::Cell)?;
        b.check_complex_degree(self, Degree::Cell)?;
        let h3 = self.spec.h * self.spec.h * self.spec.h;
        Ok(dot(&a.values, &b.values) / h3)
    }

    /// Mixed pairing ∫ A·B of an edge 1-cochain with a face 2-cochain:
    /// Σ over edges of A_e times the ⅛-weighted average of B over the eight
    /// same-direction faces straddling the edge, extended by zero outside the
    /// domain. In integrated quantities the h factors cancel exactly.
    pub fn pair_12(self: &Arc<Self>, a: &Field, b: &Field) -> Result<f64> {
        a.check_complex_degree(self, Degree::Edge)?;
        b.check_complex_degree(self, Degree::Face)?;
        let mut acc = 0.0;
        for slot in 0..self.n_active(Degree::Edge) {
            let ae = a.values[slot];
            if ae == 0.0 {
                continue;
            }
            acc += ae * self.avg8_at_edge(b, slot);
        }
        Ok(0.125 * acc)
    }

    /// Σ of B over the 8 straddling faces of the active edge `slot` (no ⅛).
    pub(crate) fn avg8_at_edge(&self, b: &Field, slot: usize) -> f64 {
        let (axis, i, j, k) = self.edge_coords(self.full_id(Degree::Edge, slot));
        let mut acc = 0.0;
        for fid in self.edge_n8_face_ids(axis, i, j, k).into_iter().flatten() {
            if let Some(fslot) = self.slot(Degree::Face, fid) {
                acc += b.values[fslot];
            }
        }
        acc
    }

    /// Largest boundary-normal flux magnitude (0 for tangential fields).
    pub fn boundary_normal_residual(self: &Arc<Self>, b: &Field) -> Result<f64> {
        b.check_complex_degree(self, Degree::Face)?;
        let mut worst = 0.0f64;
        for slot in 0..self.n_active(Degree::Face) {
            if self.boundary[2][slot] {
                worst = worst.max(b.values[slot].abs());
            }
        }
        Ok(worst)
    }

    /// Force boundary faces to zero (used by constructions that guarantee
    /// tangential output).
    pub fn zero_boundary_faces(self: &Arc<Self>, b: &mut Field) -> Result<()> {
        b.check_complex_degree(self, Degree::Face)?;
        for slot in 0..self.n_active(Degree::Face) {
            if self.boundary[2][slot] {
                b.values[slot] = 0.0;
            }
        }
        Ok(())
    }

    /// Max-norm of the cell divergence of a face field.
    pub fn divergence_residual(self: &Arc<Self>, b: &Field) -> Result<f64> {
        let div = self.d(b)?;
        Ok(div.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }
}

fn count_components(cell_active: &[bool], dims: Dims) -> usize {
    let mut seen = vec![false; cell_active.len()];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..cell_active.len() {
        if !cell_active[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(id) = stack.pop() {
            let (i, j, k) = dims.unflat(id);
            let p = [i as i64, j as i64, k as i64];
            for step in [[1i64, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]] {
                let q = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
                if dims.contains(q[0], q[1], q[2]) {
                    let nid = dims.flat(q[0] as usize, q[1] as usize, q[2] as usize);
                    if cell_active[nid] && !seen[nid] {
                        seen[nid] = true;
                        stack.push(nid);
                    }
                }
            }
        }
    }
    components
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

#[inline]
fn dot3(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len(), w.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i] * w[i];
    }
    acc
}

/// Degree-tagged discrete field: one value per active entity of its degree,
/// in active-slot order. Values are integrated quantities (circulations for
/// degree 1, fluxes for degree 2).
#[derive(Clone)]
pub struct Field {
    complex: Arc<CellComplex>,
    degree: Degree,
    values: Vec<f64>,
}

impl Field {
    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn complex(&self) -> &Arc<CellComplex> {
        &self.complex
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn check_complex(&self, c: &Arc<CellComplex>) -> Result<()> {
        if !Arc::ptr_eq(&self.complex, c) {
            return Err(HelioxError::ComplexMismatch);
        }
        Ok(())
    }

    pub fn check_complex_degree(&self, c: &Arc<CellComplex>, degree: Degree) -> Result<()> {
        self.check_complex(c)?;
        if self.degree != degree {
            return Err(HelioxError::DegreeMismatch {
                expected: degree.as_u8(),
                got: self.degree.as_u8(),
            });
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Field) -> Result<()> {
        other.check_complex(&self.complex)?;
        if self.degree != other.degree {
            return Err(HelioxError::DegreeMismatch {
                expected: self.degree.as_u8(),
                got: other.degree.as_u8(),
            });
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> Field {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// self += s * other
    pub fn axpy(&mut self, s: f64, other: &Field) -> Result<()> {
        self.same_shape(other)?;
        for (v, w) in self.values.iter_mut().zip(&other.values) {
            *v += s * w;
        }
        Ok(())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Euclidean norm of the raw value vector (no metric weights).
    pub fn norm_raw(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    /// L² norm under the degree's diagonal lumped mass.
    pub fn norm_l2(&self) -> f64 {
        let c = &self.complex;
        let raw2 = dot3(&self.values, &self.values, &c.mass[self.degree as usize]);
        let h = c.spec().h;
        let w = match self.degree {
            Degree::Vertex => h * h * h,
            Degree::Edge => h,
            Degree::Face => 1.0 / h,
            Degree::Cell => 1.0 / (h * h * h),
        };
        (w * raw2).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Write the field in the HLTR1 snapshot format.
    pub fn write_snapshot<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let spec = self.complex.spec();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(SNAPSHOT_MAGIC)?;
        f.write_all(&[self.degree.as_u8()])?;
        for n in [spec.nx as u64, spec.ny as u64, spec.nz as u64] {
            f.write_all(&n.to_le_bytes())?;
        }
        f.write_all(&spec.h.to_le_bytes())?;
        for o in spec.origin {
            f.write_all(&o.to_le_bytes())?;
        }
        f.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a field back and bind it to `complex`, validating the header.
    pub fn read_snapshot<P: AsRef<Path>>(complex: &Arc<CellComplex>, path: P) -> Result<Field> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 5];
        f.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(HelioxError::SnapshotFormat("bad magic".into()));
        }
        let mut b1 = [0u8; 1];
        f.read_exact(&mut b1)?;
        let degree = Degree::from_u8(b1[0]).ok_or_else(|| HelioxError::SnapshotFormat(format!("bad degree {}", b1[0])))?;
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |f: &mut dyn Read| -> Result<u64> {
            f.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let nx = read_u64(&mut f)? as usize;
        let ny = read_u64(&mut f)? as usize;
        let nz = read_u64(&mut f)? as usize;
        let spec = complex.spec();
        if [nx, ny, nz] != spec.dims() {
            return Err(HelioxError::SnapshotFormat(format!(
                "grid dims {}x{}x{} do not match complex {}x{}x{}",
                nx, ny, nz, spec.nx, spec.ny, spec.nz
            )));
        }
        let mut f64buf = [0u8; 8];
        let mut read_f64 = |f: &mut dyn Read| -> Result<f64> {
            f.read_exact(&mut f64buf)?;
            Ok(f64::from_le_bytes(f64buf))
        };
        let h = read_f64(&mut f)?;
        if h.to_bits() != spec.h.to_bits() {
            return Err(HelioxError::SnapshotFormat("spacing mismatch".into()));
        }
        for o in spec.origin {
            let got = read_f64(&mut f)?;
            if got.to_bits() != o.to_bits() {
                return Err(HelioxError::SnapshotFormat("origin mismatch".into()));
            }
        }
        let mut cntbuf = [0u8; 8];
        f.read_exact(&mut cntbuf)?;
        let count = u64::from_le_bytes(cntbuf) as usize;
        if count != complex.n_active(degree) {
            return Err(HelioxError::SnapshotFormat(format!(
                "active-entity count {} does not match complex ({})",
                count,
                complex.n_active(degree)
            )));
        }
        let mut values = vec![0.0f64; count];
        let mut vbuf = [0u8; 8];
        for v in &mut values {
            f.read_exact(&mut vbuf)?;
            *v = f64::from_le_bytes(vbuf);
        }
        Ok(Field {
            complex: Arc::clone(complex),
            degree,
            values,
        })
    }
}
