//! Precompiled lattice operators for the iterative solves: cell and vertex
//! Poisson problems and the edge vector Laplacian d₁ᵀd₁ + d₀d₀ᵀ.

use crate::grid::{CellComplex, Degree};
use crate::solver::LinearOperator;

/// 7-point cell Laplacian over interior faces (homogeneous Neumann through
/// boundary faces). Positive semi-definite with a constant null space.
pub(crate) struct CellPoisson {
    n: usize,
    /// (lo cell slot, hi cell slot) per interior face.
    pairs: Vec<(u32, u32)>,
}

impl CellPoisson {
    pub fn new(c: &CellComplex) -> CellPoisson {
        let mut pairs = Vec::new();
        for slot in 0..c.n_active(Degree::Face) {
            if c.is_boundary_slot(Degree::Face, slot) {
                continue;
            }
            let (axis, i, j, k) = c.face_coords(c.full_id(Degree::Face, slot));
            let u = axis.unit();
            let hi = c.cell_id(i, j, k);
            let lo = c.cell_id(
                (i as i64 - u[0]) as usize,
                (j as i64 - u[1]) as usize,
                (k as i64 - u[2]) as usize,
            );
            let lo = c.slot(Degree::Cell, lo).expect("interior face has lo cell");
            let hi = c.slot(Degree::Cell, hi).expect("interior face has hi cell");
            pairs.push((lo as u32, hi as u32));
        }
        CellPoisson {
            n: c.n_active(Degree::Cell),
            pairs,
        }
    }

    /// Apply the (transposed) gradient-sum identity used for right-hand
    /// sides: out_c = Σ over interior faces of c of sign · j_f, where j is
    /// given per interior face in `pairs` order.
    pub fn divergence_of_interior(&self, j: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (idx, &(lo, hi)) in self.pairs.iter().enumerate() {
            out[lo as usize] += j[idx];
            out[hi as usize] -= j[idx];
        }
        out
    }

    pub fn interior_face_count(&self) -> usize {
        self.pairs.len()
    }
}

impl LinearOperator for CellPoisson {
    fn len(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for &(lo, hi) in &self.pairs {
            let d = x[lo as usize] - x[hi as usize];
            out[lo as usize] += d;
            out[hi as usize] -= d;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(lo, hi) in &self.pairs {
            d[lo as usize] += 1.0;
            d[hi as usize] += 1.0;
        }
        d
    }
}

/// Vertex Laplacian d₀ᵀ M₁ d₀ with the lumped edge mass, the adjoint-
/// divergence operator of the period-basis construction. Natural (Neumann)
/// behavior at the boundary comes from stencil truncation.
pub(crate) struct VertexPoisson {
    n: usize,
    /// (tail vertex slot, head vertex slot, edge weight) per active edge.
    edges: Vec<(u32, u32, f64)>,
}

impl VertexPoisson {
    pub fn new(c: &CellComplex) -> VertexPoisson {
        let mut edges = Vec::new();
        for slot in 0..c.n_active(Degree::Edge) {
            let (axis, i, j, k) = c.edge_coords(c.full_id(Degree::Edge, slot));
            let u = axis.unit();
            let tail = c.vertex_id(i, j, k);
            let head = c.vertex_id(
                (i as i64 + u[0]) as usize,
                (j as i64 + u[1]) as usize,
                (k as i64 + u[2]) as usize,
            );
            let tail = c.slot(Degree::Vertex, tail).expect("closure") as u32;
            let head = c.slot(Degree::Vertex, head).expect("closure") as u32;
            edges.push((tail, head, c.mass_weight(Degree::Edge, slot)));
        }
        VertexPoisson {
            n: c.n_active(Degree::Vertex),
            edges,
        }
    }

    /// out_v = (d₀ᵀ M₁ k)_v for per-edge values k in active-edge order.
    pub fn weighted_divergence(&self, k: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (idx, &(tail, head, w)) in self.edges.iter().enumerate() {
            out[head as usize] += w * k[idx];
            out[tail as usize] -= w * k[idx];
        }
        out
    }
}

impl LinearOperator for VertexPoisson {
    fn len(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for &(tail, head, w) in &self.edges {
            let d = w * (x[head as usize] - x[tail as usize]);
            out[head as usize] += d;
            out[tail as usize] -= d;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(tail, head, w) in &self.edges {
            d[tail as usize] += w;
            d[head as usize] += w;
        }
        d
    }
}

/// Edge vector Laplacian d₁ᵀ d₁ + d₀ d₀ᵀ (raw integer incidence weights).
/// Its null space is the space of discrete harmonic 1-cochains; on our
/// right-hand sides CG stays orthogonal to it.
pub(crate) struct EdgeLaplacian {
    n_edges: usize,
    n_vertices: usize,
    /// Per active face: the 4 (edge slot, sign) entries.
    face_edges: Vec<[(u32, f32); 4]>,
    /// Per active edge: (tail vertex slot, head vertex slot).
    endpoints: Vec<(u32, u32)>,
}

impl EdgeLaplacian {
    pub fn new(c: &CellComplex) -> EdgeLaplacian {
        let mut face_edges = Vec::with_capacity(c.n_active(Degree::Face));
        for slot in 0..c.n_active(Degree::Face) {
            let (axis, i, j, k) = c.face_coords(c.full_id(Degree::Face, slot));
            let mut row = [(0u32, 0.0f32); 4];
            for (t, (eid, sign)) in c.face_edge_ids(axis, i, j, k).into_iter().enumerate() {
                row[t] = (c.slot(Degree::Edge, eid).expect("closure") as u32, sign as f32);
            }
            face_edges.push(row);
        }
        let mut endpoints = Vec::with_capacity(c.n_active(Degree::Edge));
        for slot in 0..c.n_active(Degree::Edge) {
            let (axis, i, j, k) = c.edge_coords(c.full_id(Degree::Edge, slot));
            let u = axis.unit();
            let tail = c.vertex_id(i, j, k);
            let head = c.vertex_id(
                (i as i64 + u[0]) as usize,
                (j as i64 + u[1]) as usize,
                (k as i64 + u[2]) as usize,
            );
            endpoints.push((
                c.slot(Degree::Vertex, tail).expect("closure") as u32,
                c.slot(Degree::Vertex, head).expect("closure") as u32,
            ));
        }
        EdgeLaplacian {
            n_edges: c.n_active(Degree::Edge),
            n_vertices: c.n_active(Degree::Vertex),
            face_edges,
            endpoints,
        }
    }

    /// out = d₁ᵀ f for given per-face values.
    pub fn curl_transpose(&self, f: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (row, &fv) in self.face_edges.iter().zip(f) {
            if fv == 0.0 {
                continue;
            }
            for &(e, s) in row {
                out[e as usize] += s as f64 * fv;
            }
        }
    }
}

impl LinearOperator for EdgeLaplacian {
    fn len(&self) -> usize {
        self.n_edges
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        // d₁ᵀ (d₁ x)
        let mut fscratch = vec![0.0; self.face_edges.len()];
        for (idx, row) in self.face_edges.iter().enumerate() {
            let mut acc = 0.0;
            for &(e, s) in row {
                acc += s as f64 * x[e as usize];
            }
            fscratch[idx] = acc;
        }
        out.fill(0.0);
        for (idx, row) in self.face_edges.iter().enumerate() {
            let fv = fscratch[idx];
            for &(e, s) in row {
                out[e as usize] += s as f64 * fv;
            }
        }
        // + d₀ (d₀ᵀ x)
        let mut vscratch = vec![0.0; self.n_vertices];
        for (idx, &(tail, head)) in self.endpoints.iter().enumerate() {
            vscratch[head as usize] += x[idx];
            vscratch[tail as usize] -= x[idx];
        }
        for (idx, &(tail, head)) in self.endpoints.iter().enumerate() {
            out[idx] += vscratch[head as usize] - vscratch[tail as usize];
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![2.0; self.n_edges]; // d₀d₀ᵀ contributes 2 per edge
        for row in &self.face_edges {
            for &(e, _) in row {
                d[e as usize] += 1.0;
            }
        }
        d
    }
}
