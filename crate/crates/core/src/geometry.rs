//! Canonical multiply connected domains with their homology generators and
//! cutting surfaces, plus independent topology computation and validation.
//!
//! Builders emit axis-aligned lattice cycles and planar cutting surfaces.
//! Every cutting surface carries two realizations of the same cut: its
//! primal face set (for fluxes of degree-2 fields) and the dual crossing
//! edge set offset by half a cell (for the cut-potential constructions).
//! Cuts sit in the middle of a prismatic stretch of the domain — at least
//! one column of identical cross-section on each side — which is what makes
//! the discrete flux identity for the period basis exact.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{HelioxError, Result};
use crate::grid::{Axis, CellComplex, Degree, Dims, GridSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrientedEdge {
    pub axis: Axis,
    pub pos: [usize; 3],
    pub sign: i8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrientedFace {
    pub axis: Axis,
    pub pos: [usize; 3],
    pub sign: i8,
}

/// Closed 1-chain of lattice edges. May consist of several loops (the
/// boundary of an annular cutting surface has two).
#[derive(Clone, Debug)]
pub struct Cycle {
    pub label: String,
    pub edges: Vec<OrientedEdge>,
}

impl Cycle {
    /// Chain boundary: each vertex must be entered as often as exited.
    pub fn is_closed(&self) -> bool {
        let mut bal: HashMap<[i64; 3], i64> = HashMap::new();
        for e in &self.edges {
            let u = e.axis.unit();
            let tail = [e.pos[0] as i64, e.pos[1] as i64, e.pos[2] as i64];
            let head = [tail[0] + u[0], tail[1] + u[1], tail[2] + u[2]];
            *bal.entry(head).or_insert(0) += e.sign as i64;
            *bal.entry(tail).or_insert(0) -= e.sign as i64;
        }
        bal.values().all(|&v| v == 0)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Cutting surface: primal face chain whose chain boundary lies on the
/// domain boundary, together with the dual cut's crossing edges.
#[derive(Clone, Debug)]
pub struct CuttingSurface {
    pub label: String,
    pub faces: Vec<OrientedFace>,
    pub crossing_edges: Vec<OrientedEdge>,
}

impl CuttingSurface {
    pub fn area_faces(&self) -> usize {
        self.faces.len()
    }

    /// Chain boundary of the face set, with interior edges cancelling.
    pub fn boundary_chain(&self, c: &CellComplex) -> Vec<OrientedEdge> {
        let mut acc: HashMap<usize, i64> = HashMap::new();
        for f in &self.faces {
            for (eid, s) in c.face_edge_ids(f.axis, f.pos[0], f.pos[1], f.pos[2]) {
                *acc.entry(eid).or_insert(0) += f.sign as i64 * s as i64;
            }
        }
        let mut out: Vec<(usize, i64)> = acc.into_iter().filter(|&(_, s)| s != 0).collect();
        out.sort_unstable();
        out.iter()
            .map(|&(eid, s)| {
                let (axis, i, j, k) = c.edge_coords(eid);
                debug_assert!(s == 1 || s == -1);
                OrientedEdge {
                    axis,
                    pos: [i, j, k],
                    sign: s as i8,
                }
            })
            .collect()
    }
}

/// Genus, generators and cutting surfaces of a builder domain.
#[derive(Clone, Debug)]
pub struct TopologyAtlas {
    pub genus: usize,
    /// Interior generators γ_i of H₁ of the closed domain.
    pub cycles_interior: Vec<Cycle>,
    /// Boundary generators γ'_i = ∂Σ_i, supported on ∂Ω.
    pub cycles_boundary: Vec<Cycle>,
    /// Cutting surfaces Σ_i with ∂Σ_i = γ'_i and γ_i · Σ_j = δ_ij.
    pub surfaces: Vec<CuttingSurface>,
    /// Exterior cuts Σ'_i (in base-lattice coordinates; their faces live in
    /// the complement), used by the exterior period basis. ∂Σ'_i = γ_i.
    pub exterior_cuts: Vec<CuttingSurface>,
    pub b0: usize,
    pub b2: usize,
    pub euler_characteristic: i64,
}

impl TopologyAtlas {
    /// Plain-text report: genus, cycle lengths, surface areas.
    pub fn report(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "genus {}  b0 {}  b2 {}  chi {}\n",
            self.genus, self.b0, self.b2, self.euler_characteristic
        ));
        for (i, cy) in self.cycles_interior.iter().enumerate() {
            s.push_str(&format!("gamma_{}: {} edges ({})\n", i + 1, cy.len(), cy.label));
        }
        for (i, cy) in self.cycles_boundary.iter().enumerate() {
            s.push_str(&format!("gamma'_{}: {} edges ({})\n", i + 1, cy.len(), cy.label));
        }
        for (i, sf) in self.surfaces.iter().enumerate() {
            s.push_str(&format!(
                "Sigma_{}: {} faces, {} crossing edges ({})\n",
                i + 1,
                sf.area_faces(),
                sf.crossing_edges.len(),
                sf.label
            ));
        }
        s
    }
}

/// Canonical domain recipes. Hole positions are centered; widths default to
/// max(3, min-dim/4). All holes run through the full z-extent.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainRecipe {
    Box,
    SolidTorus {
        #[serde(default)]
        hole_width: Option<usize>,
    },
    NfoldTorus {
        n: usize,
        #[serde(default)]
        hole_width: Option<usize>,
    },
    ToroidalShell {
        #[serde(default)]
        hole_width: Option<usize>,
    },
}

impl DomainRecipe {
    pub fn declared_genus(&self) -> usize {
        match self {
            DomainRecipe::Box => 0,
            DomainRecipe::SolidTorus { .. } => 1,
            DomainRecipe::NfoldTorus { n, .. } => *n,
            DomainRecipe::ToroidalShell { .. } => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DomainRecipe::Box => "box",
            DomainRecipe::SolidTorus { .. } => "solid_torus",
            DomainRecipe::NfoldTorus { .. } => "nfold_torus",
            DomainRecipe::ToroidalShell { .. } => "toroidal_shell",
        }
    }
}

/// Half-open cell-index rectangle in two lattice directions.
#[derive(Clone, Copy, Debug)]
struct Rect {
    a: [usize; 2],
    b: [usize; 2],
}

impl Rect {
    fn contains(&self, p: [usize; 2]) -> bool {
        p[0] >= self.a[0] && p[0] < self.b[0] && p[1] >= self.a[1] && p[1] < self.b[1]
    }
}

fn default_hole_width(spec: &GridSpec) -> usize {
    (spec.nx.min(spec.ny).min(spec.nz) / 4).max(3)
}

/// Build the complex and its atlas for a canonical recipe.
pub fn build_domain(recipe: &DomainRecipe, spec: GridSpec) -> Result<(Arc<CellComplex>, TopologyAtlas)> {
    spec.validate()?;
    match recipe {
        DomainRecipe::Box => build_box(spec),
        DomainRecipe::SolidTorus { hole_width } => build_nfold(spec, 1, *hole_width),
        DomainRecipe::NfoldTorus { n, hole_width } => {
            if *n == 0 {
                return Err(HelioxError::InvalidParameter("nfold_torus needs n >= 1".into()));
            }
            build_nfold(spec, *n, *hole_width)
        }
        DomainRecipe::ToroidalShell { hole_width } => build_shell(spec, *hole_width),
    }
}

fn build_box(spec: GridSpec) -> Result<(Arc<CellComplex>, TopologyAtlas)> {
    let (nx, ny, nz) = (spec.nx, spec.ny, spec.nz);
    if nx < 4 || ny < 4 || nz < 4 {
        return Err(HelioxError::InvalidParameter("box needs at least 4 cells per axis".into()));
    }
    let c = CellComplex::build(spec, |i, j, k| {
        (1..nx - 1).contains(&i) && (1..ny - 1).contains(&j) && (1..nz - 1).contains(&k)
    })?;
    let b = betti(&c);
    let atlas = TopologyAtlas {
        genus: b.b1 as usize,
        cycles_interior: Vec::new(),
        cycles_boundary: Vec::new(),
        surfaces: Vec::new(),
        exterior_cuts: Vec::new(),
        b0: b.b0,
        b2: b.b2,
        euler_characteristic: b.chi,
    };
    Ok((c, atlas))
}

/// n parallel rectangular holes through z. n = 1 is the solid torus.
fn build_nfold(spec: GridSpec, n: usize, hole_width: Option<usize>) -> Result<(Arc<CellComplex>, TopologyAtlas)> {
    let (nx, ny, nz) = (spec.nx, spec.ny, spec.nz);
    let w = hole_width.unwrap_or_else(|| default_hole_width(&spec));
    if w < 3 {
        return Err(HelioxError::InvalidParameter(format!(
            "hole width {} too small: cutting surfaces need a prismatic stretch of 3 cells",
            w
        )));
    }
    // y span of every hole, centered with at least one material cell between
    // hole and outer wall.
    let hy0 = (ny - w) / 2;
    let hy1 = hy0 + w;
    if hy0 < 2 || hy1 > ny - 2 {
        return Err(HelioxError::InvalidParameter(format!(
            "grid {}x{}x{} too small for hole width {}",
            nx, ny, nz, w
        )));
    }
    if nz < 4 {
        return Err(HelioxError::InvalidParameter("need nz >= 4".into()));
    }
    // x spans: n holes of width w with gaps >= 1 inside the interior box.
    let interior = nx - 2;
    if n * w + (n + 1) > interior {
        return Err(HelioxError::InvalidParameter(format!(
            "grid x-extent {} too small for {} holes of width {}",
            nx, n, w
        )));
    }
    let gap = (interior - n * w) / (n + 1);
    let mut holes_x = Vec::with_capacity(n);
    for i in 0..n {
        let hx0 = 1 + gap + i * (w + gap);
        holes_x.push((hx0, hx0 + w));
    }

    let hole_rects: Vec<Rect> = holes_x
        .iter()
        .map(|&(hx0, hx1)| Rect { a: [hx0, hy0], b: [hx1, hy1] })
        .collect();
    let rects = hole_rects.clone();
    let c = CellComplex::build(spec, move |i, j, k| {
        (1..nx - 1).contains(&i)
            && (1..ny - 1).contains(&j)
            && (1..nz - 1).contains(&k)
            && !rects.iter().any(|r| r.contains([i, j]))
    })?;

    let zc = nz / 2;
    let mut atlas = TopologyAtlas {
        genus: n,
        cycles_interior: Vec::new(),
        cycles_boundary: Vec::new(),
        surfaces: Vec::new(),
        exterior_cuts: Vec::new(),
        b0: 1,
        b2: 0,
        euler_characteristic: 1 - n as i64,
    };
    for (idx, &(hx0, hx1)) in holes_x.iter().enumerate() {
        let sx = hx0 + w / 2;
        // Σ_i: full front-leg cross-section at the vertex plane x = sx,
        // oriented +x; the front leg is prismatic over this hole's x-range.
        let mut faces = Vec::new();
        for cy in 1..hy0 {
            for cz in 1..nz - 1 {
                faces.push(OrientedFace {
                    axis: Axis::X,
                    pos: [sx, cy, cz],
                    sign: 1,
                });
            }
        }
        let crossing_edges = crossing_edges_for_plane(&faces, Axis::X);
        let surface = CuttingSurface {
            label: format!("poloidal cut through hole {}", idx + 1),
            faces,
            crossing_edges,
        };
        let gamma_prime = Cycle {
            label: format!("meridian around leg of hole {}", idx + 1),
            edges: surface.boundary_chain(&c),
        };
        // γ_i: rim of the hole wall at the mid-z vertex plane, counter-
        // clockwise about +z so it pierces Σ_i along +x at y = hy0.
        let gamma = Cycle {
            label: format!("loop around hole {}", idx + 1),
            edges: rectangle_loop(Axis::Z, zc, [hx0, hy0], [hx1, hy1]),
        };
        // Σ'_i: disc filling the hole at the mid-z cell plane; ∂Σ'_i = γ_i.
        let mut ext_faces = Vec::new();
        for cx in hx0..hx1 {
            for cy in hy0..hy1 {
                ext_faces.push(OrientedFace {
                    axis: Axis::Z,
                    pos: [cx, cy, zc],
                    sign: 1,
                });
            }
        }
        let ext_cross = crossing_edges_for_plane(&ext_faces, Axis::Z);
        atlas.exterior_cuts.push(CuttingSurface {
            label: format!("disc filling hole {}", idx + 1),
            faces: ext_faces,
            crossing_edges: ext_cross,
        });
        atlas.cycles_interior.push(gamma);
        atlas.cycles_boundary.push(gamma_prime);
        atlas.surfaces.push(surface);
    }
    let b = betti(&c);
    atlas.b0 = b.b0;
    atlas.b2 = b.b2;
    atlas.euler_characteristic = b.chi;
    Ok((c, atlas))
}

fn build_shell(spec: GridSpec, hole_width: Option<usize>) -> Result<(Arc<CellComplex>, TopologyAtlas)> {
    let (nx, ny, nz) = (spec.nx, spec.ny, spec.nz);
    let w = hole_width.unwrap_or_else(|| default_hole_width(&spec));
    if w < 3 {
        return Err(HelioxError::InvalidParameter(
            "toroidal shell needs hole width >= 3".into(),
        ));
    }
    let hx0 = (nx - w) / 2;
    let hx1 = hx0 + w;
    let hy0 = (ny - w) / 2;
    let hy1 = hy0 + w;
    // The cavity inflates the hole by one cell and shrinks the box by one,
    // leaving a one-cell-thick shell; its z-extent must allow a three-cell
    // prismatic stretch for the toroidal cut.
    if hx0 < 3 || hy0 < 3 || hx1 > nx - 3 || hy1 > ny - 3 || nz < 7 {
        return Err(HelioxError::InvalidParameter(format!(
            "grid {}x{}x{} too small for a toroidal shell with hole width {}",
            nx, ny, nz, w
        )));
    }
    let outer_hole = move |i: usize, j: usize| (hx0..hx1).contains(&i) && (hy0..hy1).contains(&j);
    let cavity = move |i: usize, j: usize, k: usize| {
        (2..nx - 2).contains(&i)
            && (2..ny - 2).contains(&j)
            && (2..nz - 2).contains(&k)
            && !((hx0 - 1..hx1 + 1).contains(&i) && (hy0 - 1..hy1 + 1).contains(&j))
    };
    let c = CellComplex::build(spec, move |i, j, k| {
        (1..nx - 1).contains(&i)
            && (1..ny - 1).contains(&j)
            && (1..nz - 1).contains(&k)
            && !outer_hole(i, j)
            && !cavity(i, j, k)
    })?;

    let sx = hx0 + w / 2;
    let zc = nz / 2;

    // Σ₁: poloidal cut, the one-cell-thick frame at the vertex plane x = sx.
    let mut frame_faces = Vec::new();
    for cy in 1..hy0 {
        for cz in 1..nz - 1 {
            let inside_cavity_leg = (2..hy0 - 1).contains(&cy) && (2..nz - 2).contains(&cz);
            if !inside_cavity_leg {
                frame_faces.push(OrientedFace {
                    axis: Axis::X,
                    pos: [sx, cy, cz],
                    sign: 1,
                });
            }
        }
    }
    let sigma1 = CuttingSurface {
        label: "poloidal frame cut".into(),
        crossing_edges: crossing_edges_for_plane(&frame_faces, Axis::X),
        faces: frame_faces,
    };
    let gamma1_prime = Cycle {
        label: "frame perimeter (outer wall + cavity wall)".into(),
        edges: sigma1.boundary_chain(&c),
    };
    let gamma1 = Cycle {
        label: "loop around the hole".into(),
        edges: rectangle_loop(Axis::Z, zc, [hx0, hy0], [hx1, hy1]),
    };

    // Σ₂: toroidal cut, the one-cell ring between the hole wall and the
    // cavity's hole wall at the vertex plane z = zc.
    let mut ring_faces = Vec::new();
    for cx in hx0 - 1..hx1 + 1 {
        for cy in hy0 - 1..hy1 + 1 {
            if !((hx0..hx1).contains(&cx) && (hy0..hy1).contains(&cy)) {
                ring_faces.push(OrientedFace {
                    axis: Axis::Z,
                    pos: [cx, cy, zc],
                    sign: 1,
                });
            }
        }
    }
    let sigma2 = CuttingSurface {
        label: "toroidal ring cut".into(),
        crossing_edges: crossing_edges_for_plane(&ring_faces, Axis::Z),
        faces: ring_faces,
    };
    let gamma2_prime = Cycle {
        label: "ring perimeter (hole wall + cavity hole wall)".into(),
        edges: sigma2.boundary_chain(&c),
    };
    // γ₂: rim of the cavity's front leg at the vertex plane x = sx,
    // counterclockwise about +x so the +z run at y = hy0-1 pierces Σ₂.
    let gamma2 = Cycle {
        label: "poloidal loop around the cavity leg".into(),
        edges: rectangle_loop(Axis::X, sx, [2, 2], [hy0 - 1, nz - 2]),
    };

    // Exterior cuts. Σ'₁: disc filling the hole; Σ'₂: meridian disc of the
    // cavity's front leg.
    let mut disc_faces = Vec::new();
    for cx in hx0..hx1 {
        for cy in hy0..hy1 {
            disc_faces.push(OrientedFace {
                axis: Axis::Z,
                pos: [cx, cy, zc],
                sign: 1,
            });
        }
    }
    let ext1 = CuttingSurface {
        label: "disc filling the hole".into(),
        crossing_edges: crossing_edges_for_plane(&disc_faces, Axis::Z),
        faces: disc_faces,
    };
    let mut cav_faces = Vec::new();
    for cy in 2..hy0 - 1 {
        for cz in 2..nz - 2 {
            cav_faces.push(OrientedFace {
                axis: Axis::X,
                pos: [sx, cy, cz],
                sign: 1,
            });
        }
    }
    let ext2 = CuttingSurface {
        label: "meridian disc of the cavity leg".into(),
        crossing_edges: crossing_edges_for_plane(&cav_faces, Axis::X),
        faces: cav_faces,
    };

    let b = betti(&c);
    Ok((
        c,
        TopologyAtlas {
            genus: 2,
            cycles_interior: vec![gamma1, gamma2],
            cycles_boundary: vec![gamma1_prime, gamma2_prime],
            surfaces: vec![sigma1, sigma2],
            exterior_cuts: vec![ext1, ext2],
            b0: b.b0,
            b2: b.b2,
            euler_characteristic: b.chi,
        },
    ))
}

/// Rectangle vertex loop in the plane `plane_axis = level`, spanning the
/// vertex rectangle [a, b] in the two remaining axes (t1, t2), oriented
/// counterclockwise about +plane_axis: +t1 along t2 = a2, +t2 along t1 = b1,
/// then back.
pub fn rectangle_loop(plane_axis: Axis, level: usize, a: [usize; 2], b: [usize; 2]) -> Vec<OrientedEdge> {
    let (t1, t2) = plane_axis.others();
    let mut edges = Vec::new();
    let place = |c1: usize, c2: usize| -> [usize; 3] {
        let mut p = [0usize; 3];
        p[plane_axis.index()] = level;
        p[t1.index()] = c1;
        p[t2.index()] = c2;
        p
    };
    for c1 in a[0]..b[0] {
        edges.push(OrientedEdge { axis: t1, pos: place(c1, a[1]), sign: 1 });
    }
    for c2 in a[1]..b[1] {
        edges.push(OrientedEdge { axis: t2, pos: place(b[0], c2), sign: 1 });
    }
    for c1 in a[0]..b[0] {
        edges.push(OrientedEdge { axis: t1, pos: place(c1, b[1]), sign: -1 });
    }
    for c2 in a[1]..b[1] {
        edges.push(OrientedEdge { axis: t2, pos: place(a[0], c2), sign: -1 });
    }
    edges
}

/// Dual-cut crossing edges of a planar face set: one `normal`-directed edge
/// per corner vertex of the face set, spanning the slab on the +normal side
/// of the face plane. Signs follow the face orientation.
fn crossing_edges_for_plane(faces: &[OrientedFace], normal: Axis) -> Vec<OrientedEdge> {
    let mut corners: HashMap<[usize; 3], i8> = HashMap::new();
    let (t1, t2) = normal.others();
    for f in faces {
        debug_assert_eq!(f.axis, normal);
        for (s1, s2) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
            let mut p = f.pos;
            p[t1.index()] += s1;
            p[t2.index()] += s2;
            corners.insert(p, f.sign);
        }
    }
    let mut list: Vec<([usize; 3], i8)> = corners.into_iter().collect();
    list.sort_unstable();
    list.into_iter()
        .map(|(pos, sign)| OrientedEdge { axis: normal, pos, sign })
        .collect()
}

/// Betti numbers from flood fills and the Euler characteristic.
pub struct BettiNumbers {
    pub b0: usize,
    pub b1: i64,
    pub b2: usize,
    pub chi: i64,
}

/// b0 by flood fill of active cells; b2 as the number of bounded complement
/// components (flood fill of inactive cells seeded from the lattice hull);
/// b1 = b0 + b2 - chi.
pub fn betti(c: &Arc<CellComplex>) -> BettiNumbers {
    let spec = c.spec();
    let dims = Dims(spec.nx, spec.ny, spec.nz);
    let total = dims.len();

    let active = |id: usize| -> bool {
        let (i, j, k) = dims.unflat(id);
        c.is_cell_active(i as i64, j as i64, k as i64)
    };

    let neighbors = |id: usize, out: &mut Vec<usize>| {
        out.clear();
        let (i, j, k) = dims.unflat(id);
        let p = [i as i64, j as i64, k as i64];
        for step in [[1i64, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]] {
            let q = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
            if dims.contains(q[0], q[1], q[2]) {
                out.push(dims.flat(q[0] as usize, q[1] as usize, q[2] as usize));
            }
        }
    };

    let mut seen = vec![false; total];
    let mut scratch = Vec::with_capacity(6);
    let mut stack = Vec::new();

    // Components of the active set.
    let mut b0 = 0usize;
    for start in 0..total {
        if seen[start] || !active(start) {
            continue;
        }
        b0 += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(id) = stack.pop() {
            neighbors(id, &mut scratch);
            for &nb in &scratch {
                if active(nb) && !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
    }

    // Complement components: flood the inactive set from the lattice hull;
    // any inactive cell left unreached belongs to a bounded cavity.
    let mut seen_c = vec![false; total];
    for start in 0..total {
        let (i, j, k) = dims.unflat(start);
        let on_hull = i == 0 || j == 0 || k == 0 || i == spec.nx - 1 || j == spec.ny - 1 || k == spec.nz - 1;
        if !on_hull || active(start) || seen_c[start] {
            continue;
        }
        seen_c[start] = true;
        stack.push(start);
        while let Some(id) = stack.pop() {
            neighbors(id, &mut scratch);
            for &nb in &scratch {
                if !active(nb) && !seen_c[nb] {
                    seen_c[nb] = true;
                    stack.push(nb);
                }
            }
        }
    }
    let mut b2 = 0usize;
    for start in 0..total {
        if active(start) || seen_c[start] {
            continue;
        }
        b2 += 1;
        seen_c[start] = true;
        stack.push(start);
        while let Some(id) = stack.pop() {
            neighbors(id, &mut scratch);
            for &nb in &scratch {
                if !active(nb) && !seen_c[nb] {
                    seen_c[nb] = true;
                    stack.push(nb);
                }
            }
        }
    }

    let chi = c.euler_characteristic();
    BettiNumbers {
        b0,
        b1: b0 as i64 + b2 as i64 - chi,
        b2,
        chi,
    }
}

/// One validation check outcome.
#[derive(Clone, Debug)]
pub struct TopologyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct TopologyReport {
    pub checks: Vec<TopologyCheck>,
}

impl TopologyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&TopologyCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Signed intersection number of a cycle with a cutting surface's dual cut.
/// Pure integer arithmetic; a lattice edge either is a crossing edge or is
/// not, so ties cannot occur.
pub fn intersection_number(cycle: &Cycle, surface: &CuttingSurface) -> i64 {
    let mut cross: HashMap<(usize, [usize; 3]), i8> = HashMap::new();
    for e in &surface.crossing_edges {
        cross.insert((e.axis.index(), e.pos), e.sign);
    }
    let mut acc = 0i64;
    for e in &cycle.edges {
        if let Some(&s) = cross.get(&(e.axis.index(), e.pos)) {
            acc += e.sign as i64 * s as i64;
        }
    }
    acc
}

/// Validate an atlas against its complex: never silently passes.
pub fn validate_topology(c: &Arc<CellComplex>, atlas: &TopologyAtlas) -> TopologyReport {
    let mut checks = Vec::new();
    let g = atlas.genus;

    checks.push(TopologyCheck {
        name: "cardinalities".into(),
        passed: atlas.cycles_interior.len() == g && atlas.cycles_boundary.len() == g && atlas.surfaces.len() == g,
        detail: format!(
            "genus {} with {} interior cycles, {} boundary cycles, {} surfaces",
            g,
            atlas.cycles_interior.len(),
            atlas.cycles_boundary.len(),
            atlas.surfaces.len()
        ),
    });

    let b = betti(c);
    checks.push(TopologyCheck {
        name: "betti".into(),
        passed: b.b1 == g as i64 && b.b0 == atlas.b0 && b.b2 == atlas.b2 && b.chi == atlas.euler_characteristic,
        detail: format!("b0 {} b1 {} b2 {} chi {}", b.b0, b.b1, b.b2, b.chi),
    });

    // Cycles are closed chains; boundary cycles lie on the boundary.
    for (label, cys, need_boundary) in [
        ("interior", &atlas.cycles_interior, false),
        ("boundary", &atlas.cycles_boundary, true),
    ] {
        for (i, cy) in cys.iter().enumerate() {
            let closed = cy.is_closed() && !cy.is_empty();
            let mut on_active = true;
            let mut on_boundary = true;
            for e in &cy.edges {
                let eid = c.edge_id(e.axis, e.pos[0], e.pos[1], e.pos[2]);
                match c.slot(Degree::Edge, eid) {
                    Some(slot) => {
                        if !c.is_boundary_slot(Degree::Edge, slot) {
                            on_boundary = false;
                        }
                    }
                    None => {
                        on_active = false;
                        on_boundary = false;
                    }
                }
            }
            let passed = closed && on_active && (!need_boundary || on_boundary);
            checks.push(TopologyCheck {
                name: format!("cycle_{}_{}", label, i + 1),
                passed,
                detail: format!("closed {} active {} on_boundary {}", closed, on_active, on_boundary),
            });
        }
    }

    // ∂Σ_i = γ'_i as 1-chains.
    for (i, (sf, gp)) in atlas.surfaces.iter().zip(&atlas.cycles_boundary).enumerate() {
        let mut chain: HashMap<(usize, [usize; 3]), i64> = HashMap::new();
        for e in sf.boundary_chain(c) {
            *chain.entry((e.axis.index(), e.pos)).or_insert(0) += e.sign as i64;
        }
        for e in &gp.edges {
            *chain.entry((e.axis.index(), e.pos)).or_insert(0) -= e.sign as i64;
        }
        let passed = chain.values().all(|&v| v == 0);
        checks.push(TopologyCheck {
            name: format!("surface_boundary_{}", i + 1),
            passed,
            detail: "dSigma - gamma' chain difference".into(),
        });
    }

    // Surfaces live on interior faces; crossing edges are active.
    for (i, sf) in atlas.surfaces.iter().enumerate() {
        let mut interior = true;
        for f in &sf.faces {
            let fid = c.face_id(f.axis, f.pos[0], f.pos[1], f.pos[2]);
            match c.slot(Degree::Face, fid) {
                Some(slot) => {
                    if c.is_boundary_slot(Degree::Face, slot) {
                        interior = false;
                    }
                }
                None => interior = false,
            }
        }
        let mut cross_active = true;
        for e in &sf.crossing_edges {
            if c.slot(Degree::Edge, c.edge_id(e.axis, e.pos[0], e.pos[1], e.pos[2])).is_none() {
                cross_active = false;
            }
        }
        checks.push(TopologyCheck {
            name: format!("surface_support_{}", i + 1),
            passed: interior && cross_active,
            detail: format!("interior faces {} crossing edges active {}", interior, cross_active),
        });
    }

    // γ_i · Σ_j = δ_ij in integer arithmetic.
    let mut all_ok = true;
    let mut detail = String::new();
    for (i, cy) in atlas.cycles_interior.iter().enumerate() {
        for (j, sf) in atlas.surfaces.iter().enumerate() {
            let n = intersection_number(cy, sf);
            let want = if i == j { 1 } else { 0 };
            if n != want {
                all_ok = false;
            }
            detail.push_str(&format!("({},{})={} ", i + 1, j + 1, n));
        }
    }
    checks.push(TopologyCheck {
        name: "intersection".into(),
        passed: all_ok,
        detail,
    });

    TopologyReport { checks }
}
