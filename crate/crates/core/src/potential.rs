//! Vector potentials, gauge transformations, cycle circulations, and the
//! exterior complex with its period basis ρ'_i used to define boundary
//! circulations by pairing.
//!
//! Potentials solve the edge vector Laplacian d₁ᵀd₁ + d₀d₀ᵀ, which yields
//! the minimum-norm (Coulomb-like) gauge; the harmonic potential is pushed
//! into the zero-cut-flux gauge by subtracting period fields after the
//! solve.

use std::sync::Arc;

use crate::error::{HelioxError, Result};
use crate::geometry::{Cycle, TopologyAtlas};
use crate::grid::{Axis, CellComplex, Degree, Field, GridSpec};
use crate::harmonic::{decompose, HarmonicBasis};
use crate::ops::{EdgeLaplacian, VertexPoisson};
use crate::solver::{conjugate_gradient, CG_MAX_ITERS, CG_TOL};

/// A vector potential split as A = A^Σ + A^H, with the gauge record of
/// shifts applied since construction.
pub struct PotentialBundle {
    pub a: Field,
    pub a_sigma: Field,
    pub a_harm: Field,
    /// L² norm of the last gauge scalar applied (0 if none).
    pub gauge_phi_norm: f64,
    /// Accumulated period shifts p_i.
    pub gauge_periods: Vec<f64>,
}

/// Signed sum of edge circulations along a cycle.
pub fn circulation(c: &Arc<CellComplex>, a: &Field, cycle: &Cycle) -> Result<f64> {
    a.check_complex_degree(c, Degree::Edge)?;
    let mut acc = 0.0;
    for e in &cycle.edges {
        let slot = c
            .slot(Degree::Edge, c.edge_id(e.axis, e.pos[0], e.pos[1], e.pos[2]))
            .ok_or_else(|| HelioxError::AtlasMismatch("cycle edge not active".into()))?;
        acc += e.sign as f64 * a.values()[slot];
    }
    Ok(acc)
}

/// A + dφ + Σ p_i ρ_i. The curl of the result equals the curl of A up to
/// rounding: dd = 0 kills φ and the period fields are closed 1-cochains.
pub fn gauge_shift(c: &Arc<CellComplex>, a: &Field, phi: &Field, periods: &[f64], basis: &HarmonicBasis) -> Result<Field> {
    a.check_complex_degree(c, Degree::Edge)?;
    phi.check_complex_degree(c, Degree::Vertex)?;
    if periods.len() != basis.genus() {
        return Err(HelioxError::InvalidParameter(format!(
            "{} period shifts for genus {}",
            periods.len(),
            basis.genus()
        )));
    }
    let mut out = a.add(&c.d(phi)?)?;
    for (p, rho) in periods.iter().zip(&basis.period_fields) {
        out.axpy(*p, rho)?;
    }
    Ok(out)
}

fn solve_curl_equation(c: &Arc<CellComplex>, op: &EdgeLaplacian, b: &Field) -> Result<Field> {
    let mut rhs = vec![0.0; c.n_active(Degree::Edge)];
    op.curl_transpose(b.values(), &mut rhs);
    let (a, _rep) = conjugate_gradient(op, &rhs, CG_TOL, CG_MAX_ITERS)?;
    c.field_from_values(Degree::Edge, a)
}

/// The potential of the harmonic part in the discrete zero-cut-flux gauge:
/// minimum-norm solve of d(A) = B_harm, then subtraction of period fields so
/// the pairings ∫ A·ρ_i vanish.
pub fn harmonic_potential(c: &Arc<CellComplex>, b_harm: &Field, basis: &HarmonicBasis) -> Result<Field> {
    b_harm.check_complex_degree(c, Degree::Face)?;
    let g = basis.genus();
    if b_harm.norm_inf() == 0.0 || g == 0 {
        return Ok(c.zero_field(Degree::Edge));
    }
    let op = EdgeLaplacian::new(c);
    let mut a = solve_curl_equation(c, &op, b_harm)?;
    // Gram matrix of the period fields under the edge pairing.
    let mut gram = vec![0.0; g * g];
    for i in 0..g {
        for j in 0..g {
            gram[i * g + j] = c.pair_11(&basis.period_fields[i], &basis.period_fields[j])?;
        }
    }
    let ginv = crate::harmonic::invert_small(&gram, g).ok_or(HelioxError::SingularFluxMatrix)?;
    let pairings: Vec<f64> = basis
        .period_fields
        .iter()
        .map(|rho| c.pair_11(&a, rho))
        .collect::<Result<_>>()?;
    for i in 0..g {
        let mut q = 0.0;
        for j in 0..g {
            q += ginv[i * g + j] * pairings[j];
        }
        a.axpy(-q, &basis.period_fields[i])?;
    }
    Ok(a)
}

/// Minimum-norm vector potential of a divergence-free tangential field,
/// assembled as A^Σ + A^H from the flux decomposition.
pub fn vector_potential(
    c: &Arc<CellComplex>,
    b: &Field,
    basis: &HarmonicBasis,
    atlas: &TopologyAtlas,
) -> Result<PotentialBundle> {
    b.check_complex_degree(c, Degree::Face)?;
    let dec = decompose(c, b, basis, atlas)?;
    let op = EdgeLaplacian::new(c);
    let a_sigma = solve_curl_equation(c, &op, &dec.b_sigma)?;
    let a_harm = if dec.coefficients.iter().any(|&x| x != 0.0) {
        harmonic_potential(c, &dec.b_harm, basis)?
    } else {
        c.zero_field(Degree::Edge)
    };
    let a = a_sigma.add(&a_harm)?;
    Ok(PotentialBundle {
        a,
        a_sigma,
        a_harm,
        gauge_phi_norm: 0.0,
        gauge_periods: vec![0.0; basis.genus()],
    })
}

/// Exterior complement of the domain inside an inflated bounding box, with
/// the period basis of its harmonic fields. Boundary faces of the domain are
/// shared with the exterior complex; positions translate by `margin` cells.
pub struct ExteriorComplex {
    pub complex: Arc<CellComplex>,
    pub margin: usize,
    /// ρ'_i with circulation δ_ik around γ'_k.
    pub rho_prime: Vec<Field>,
    /// Integer periods of ρ'_i around the γ'_k.
    pub period_matrix: Vec<i64>,
}

impl ExteriorComplex {
    #[inline]
    pub fn shift_pos(&self, p: [usize; 3]) -> [usize; 3] {
        [p[0] + self.margin, p[1] + self.margin, p[2] + self.margin]
    }

    /// Circulation value of an exterior edge field at base-lattice coords.
    pub fn edge_value(&self, field: &Field, axis: Axis, pos: [usize; 3]) -> Result<f64> {
        field.check_complex_degree(&self.complex, Degree::Edge)?;
        let q = self.shift_pos(pos);
        let slot = self
            .complex
            .slot(Degree::Edge, self.complex.edge_id(axis, q[0], q[1], q[2]))
            .ok_or_else(|| HelioxError::AtlasMismatch("edge not active in exterior complex".into()))?;
        Ok(field.values()[slot])
    }
}

/// Build the exterior complex Ω' = inflated box minus the domain, and its
/// period basis from the builder-provided exterior cuts.
pub fn build_exterior(c: &Arc<CellComplex>, atlas: &TopologyAtlas, margin: usize) -> Result<ExteriorComplex> {
    if margin < 2 {
        return Err(HelioxError::InvalidParameter("exterior margin must be >= 2".into()));
    }
    let base = c.spec();
    let m = margin;
    let spec = GridSpec::new(
        base.nx + 2 * m,
        base.ny + 2 * m,
        base.nz + 2 * m,
        base.h,
        [
            base.origin[0] - m as f64 * base.h,
            base.origin[1] - m as f64 * base.h,
            base.origin[2] - m as f64 * base.h,
        ],
    )?;
    let inner = Arc::clone(c);
    let (ex, ey, ez) = (spec.nx, spec.ny, spec.nz);
    let ext = CellComplex::build_multi(spec, move |i, j, k| {
        let inside = (1..ex - 1).contains(&i) && (1..ey - 1).contains(&j) && (1..ez - 1).contains(&k);
        let p = [i as i64 - m as i64, j as i64 - m as i64, k as i64 - m as i64];
        inside && !inner.is_cell_active(p[0], p[1], p[2])
    })?;

    let g = atlas.exterior_cuts.len();
    let mut rho_prime = Vec::with_capacity(g);
    if g > 0 {
        let op = VertexPoisson::new(&ext);
        for cut in &atlas.exterior_cuts {
            let mut k_edge = vec![0.0f64; ext.n_active(Degree::Edge)];
            for e in &cut.crossing_edges {
                let q = [e.pos[0] + m, e.pos[1] + m, e.pos[2] + m];
                let slot = ext
                    .slot(Degree::Edge, ext.edge_id(e.axis, q[0], q[1], q[2]))
                    .ok_or_else(|| HelioxError::AtlasMismatch("exterior crossing edge not active".into()))?;
                k_edge[slot] = e.sign as f64;
            }
            let mut rhs = op.weighted_divergence(&k_edge);
            for v in &mut rhs {
                *v = -*v;
            }
            let (theta, _rep) = conjugate_gradient(&op, &rhs, CG_TOL, CG_MAX_ITERS)?;
            let theta_field = ext.field_from_values(Degree::Vertex, theta)?;
            let mut rho = ext.d(&theta_field)?;
            for (slot, k) in k_edge.iter().enumerate() {
                if *k != 0.0 {
                    rho.values_mut()[slot] += k;
                }
            }
            rho_prime.push(rho);
        }
    }

    // Integer periods around the shifted boundary generators.
    let mut period_matrix = vec![0i64; g * g];
    for i in 0..g {
        for k in 0..g {
            let shifted = Cycle {
                label: String::new(),
                edges: atlas.cycles_boundary[k]
                    .edges
                    .iter()
                    .map(|e| crate::geometry::OrientedEdge {
                        axis: e.axis,
                        pos: [e.pos[0] + m, e.pos[1] + m, e.pos[2] + m],
                        sign: e.sign,
                    })
                    .collect(),
            };
            let shifted_cut = crate::geometry::CuttingSurface {
                label: String::new(),
                faces: Vec::new(),
                crossing_edges: atlas.exterior_cuts[i]
                    .crossing_edges
                    .iter()
                    .map(|e| crate::geometry::OrientedEdge {
                        axis: e.axis,
                        pos: [e.pos[0] + m, e.pos[1] + m, e.pos[2] + m],
                        sign: e.sign,
                    })
                    .collect(),
            };
            period_matrix[i * g + k] = crate::geometry::intersection_number(&shifted, &shifted_cut);
        }
    }
    for i in 0..g {
        for k in 0..g {
            let want = if i == k { 1 } else { 0 };
            if period_matrix[i * g + k] != want {
                return Err(HelioxError::AtlasMismatch(format!(
                    "exterior period matrix entry ({},{}) = {}",
                    i, k, period_matrix[i * g + k]
                )));
            }
        }
    }

    Ok(ExteriorComplex {
        complex: ext,
        margin: m,
        rho_prime,
        period_matrix,
    })
}

/// Quadrature of ∫_{∂Ω} (n×w)·v over the boundary faces: tangential traces
/// of both fields are the two in-plane edge averages at the face center,
/// times the face area. `v_at` supplies the second field's circulation at
/// base-lattice edge coordinates (it may live on the exterior complex).
pub(crate) fn boundary_cross_pairing<F>(c: &Arc<CellComplex>, w: &Field, v_at: F) -> Result<f64>
where
    F: Fn(Axis, [usize; 3]) -> Result<f64>,
{
    w.check_complex_degree(c, Degree::Edge)?;
    let h = c.h();
    let mut acc = 0.0;
    for slot in 0..c.n_active(Degree::Face) {
        if !c.is_boundary_slot(Degree::Face, slot) {
            continue;
        }
        let (axis, i, j, k) = c.face_coords(c.full_id(Degree::Face, slot));
        let u = axis.unit();
        // Outward sign: +1 if the active cell is on the low side.
        let lo_active = c.is_cell_active(i as i64 - u[0], j as i64 - u[1], k as i64 - u[2]);
        let s = if lo_active { 1.0 } else { -1.0 };

        let (t1, t2) = axis.others();
        let u1 = t1.unit();
        let u2 = t2.unit();
        let p = [i, j, k];
        let shift = |un: [i64; 3]| {
            [
                (p[0] as i64 + un[0]) as usize,
                (p[1] as i64 + un[1]) as usize,
                (p[2] as i64 + un[2]) as usize,
            ]
        };
        let wv = |axis: Axis, pos: [usize; 3]| -> f64 {
            let slot = c.slot(Degree::Edge, c.edge_id(axis, pos[0], pos[1], pos[2])).expect("face edge active");
            w.values()[slot]
        };
        // Tangential field components at the face center (circulation / h).
        let w_t1 = (wv(t1, p) + wv(t1, shift(u2))) / (2.0 * h);
        let w_t2 = (wv(t2, p) + wv(t2, shift(u1))) / (2.0 * h);
        let v_t1 = (v_at(t1, p)? + v_at(t1, shift(u2))?) / (2.0 * h);
        let v_t2 = (v_at(t2, p)? + v_at(t2, shift(u1))?) / (2.0 * h);
        // (n×w)·v with n = s·ê_axis and (axis, t1, t2) right-handed.
        acc += s * (w_t1 * v_t2 - w_t2 * v_t1) * h * h;
    }
    Ok(acc)
}

/// ∫_{∂Ω} (n×w)·v for two interior edge fields.
pub fn boundary_cross_pairing_interior(c: &Arc<CellComplex>, w: &Field, v: &Field) -> Result<f64> {
    v.check_complex_degree(c, Degree::Edge)?;
    boundary_cross_pairing(c, w, |axis, pos| {
        let slot = c
            .slot(Degree::Edge, c.edge_id(axis, pos[0], pos[1], pos[2]))
            .expect("face edge active");
        Ok(v.values()[slot])
    })
}

/// Circulation of w along γ_i, by the explicit lattice cycle (`direct`) and
/// by the boundary pairing -∫_{∂Ω} n×w·ρ'_i (`pairing`). The two agree in
/// the continuum; discretely the pairing converges at first order.
pub fn boundary_circulation(
    c: &Arc<CellComplex>,
    w: &Field,
    i: usize,
    ext: &ExteriorComplex,
    atlas: &TopologyAtlas,
) -> Result<(f64, f64)> {
    if i >= atlas.cycles_interior.len() || i >= ext.rho_prime.len() {
        return Err(HelioxError::InvalidParameter(format!("no exterior basis field {}", i)));
    }
    let direct = circulation(c, w, &atlas.cycles_interior[i])?;
    let rho = &ext.rho_prime[i];
    // The γ-circulation pairs against ρ' with a minus sign.
    let pairing = -boundary_cross_pairing(c, w, |axis, pos| ext.edge_value(rho, axis, pos))?;
    Ok((direct, pairing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, DomainRecipe};
    use crate::grid::GridSpec;
    use crate::harmonic::{compute_basis, cut_flux};

    fn torus(n: usize) -> (Arc<CellComplex>, TopologyAtlas) {
        build_domain(
            &DomainRecipe::SolidTorus { hole_width: None },
            GridSpec::cubed(n, 1.0 / n as f64).unwrap(),
        )
        .unwrap()
    }

    fn random_interior_potential(c: &Arc<CellComplex>, seed: u64) -> Field {
        let mut state = seed;
        let mut a = c.zero_field(Degree::Edge);
        for slot in 0..c.n_active(Degree::Edge) {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if !c.is_boundary_slot(Degree::Edge, slot) {
                a.values_mut()[slot] = ((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5;
            }
        }
        a
    }

    #[test]
    fn zero_field_has_zero_potential() {
        let (c, atlas) = torus(10);
        let basis = compute_basis(&c, &atlas).unwrap();
        let b = c.zero_field(Degree::Face);
        let bundle = vector_potential(&c, &b, &basis, &atlas).unwrap();
        assert_eq!(bundle.a.norm_inf(), 0.0);
    }

    #[test]
    fn potential_reproduces_curl_field() {
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        let a0 = random_interior_potential(&c, 21);
        let b = c.d(&a0).unwrap();
        let bundle = vector_potential(&c, &b, &basis, &atlas).unwrap();
        let resid = c.d(&bundle.a).unwrap().sub(&b).unwrap().norm_inf();
        assert!(resid <= 1e-10 * b.norm_inf().max(1.0), "resid {resid:e}");
    }

    #[test]
    fn potential_of_harmonic_field_carries_unit_boundary_circulation() {
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        let bundle = vector_potential(&c, &basis.flux_fields[0].clone(), &basis, &atlas).unwrap();
        let resid = c.d(&bundle.a).unwrap().sub(&basis.flux_fields[0]).unwrap().norm_inf();
        assert!(resid <= 1e-9, "curl residual {resid:e}");
        // Discrete Stokes: circulation around γ'₁ equals the unit cut flux.
        let circ = circulation(&c, &bundle.a, &atlas.cycles_boundary[0]).unwrap();
        assert!((circ - 1.0).abs() <= 1e-9, "gamma' circulation {circ}");
    }

    #[test]
    fn stokes_is_exact_on_integer_potentials() {
        let (c, atlas) = torus(10);
        // Integer-valued A: circulation along γ' and flux of dA through Σ
        // are the same integer, bit for bit.
        let mut a = c.zero_field(Degree::Edge);
        let mut state = 9u64;
        for v in a.values_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            *v = ((state >> 33) % 17) as f64 - 8.0;
        }
        let b = c.d(&a).unwrap();
        let circ = circulation(&c, &a, &atlas.cycles_boundary[0]).unwrap();
        let flux = cut_flux(&c, &b, &atlas.surfaces[0]).unwrap();
        assert_eq!(circ, flux);
    }

    #[test]
    fn gauge_shift_preserves_curl_and_adds_periods() {
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        let a = random_interior_potential(&c, 31);
        let mut phi = c.zero_field(Degree::Vertex);
        let mut state = 77u64;
        for v in phi.values_mut() {
            state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            *v = ((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5;
        }
        let shifted = gauge_shift(&c, &a, &phi, &[2.5], &basis).unwrap();
        let db = c.d(&shifted).unwrap().sub(&c.d(&a).unwrap()).unwrap();
        assert!(db.norm_inf() <= 1e-13 * (1.0 + a.norm_inf()));
        let circ0 = circulation(&c, &a, &atlas.cycles_interior[0]).unwrap();
        let circ1 = circulation(&c, &shifted, &atlas.cycles_interior[0]).unwrap();
        assert!((circ1 - circ0 - 2.5).abs() <= 1e-11);
    }

    #[test]
    fn gradient_has_no_circulation() {
        let (c, atlas) = torus(10);
        let mut phi = c.zero_field(Degree::Vertex);
        let mut state = 13u64;
        for v in phi.values_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            *v = ((state >> 33) % 23) as f64 - 11.0;
        }
        let dphi = c.d(&phi).unwrap();
        // Integer values: the telescoping sum is exact.
        for cy in atlas.cycles_interior.iter().chain(&atlas.cycles_boundary) {
            assert_eq!(circulation(&c, &dphi, cy).unwrap(), 0.0);
        }
    }

    #[test]
    fn harmonic_potential_is_linear() {
        let (c, atlas) = torus(10);
        let basis = compute_basis(&c, &atlas).unwrap();
        let h = &basis.flux_fields[0];
        let a1 = harmonic_potential(&c, h, &basis).unwrap();
        let a2 = harmonic_potential(&c, &h.scaled(2.0), &basis).unwrap();
        let mut diff = a1.scaled(2.0);
        diff.axpy(-1.0, &a2).unwrap();
        assert!(diff.norm_inf() <= 1e-12 * a2.norm_inf().max(1.0));
    }

    #[test]
    fn harmonic_potential_has_zero_rho_pairings() {
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        let a_h = harmonic_potential(&c, &basis.flux_fields[0], &basis).unwrap();
        let f = c.pair_11(&a_h, &basis.period_fields[0]).unwrap();
        assert!(f.abs() <= 1e-10 * a_h.norm_l2().max(1.0), "pairing {f:e}");
    }

    #[test]
    fn exterior_box_is_trivial() {
        let (c, atlas) = build_domain(&DomainRecipe::Box, GridSpec::cubed(8, 0.125).unwrap()).unwrap();
        let ext = build_exterior(&c, &atlas, 3).unwrap();
        assert!(ext.rho_prime.is_empty());
    }

    #[test]
    fn exterior_margin_validation() {
        let (c, atlas) = torus(10);
        assert!(build_exterior(&c, &atlas, 1).is_err());
    }

    #[test]
    fn exterior_periods_are_exact() {
        let (c, atlas) = torus(12);
        let ext = build_exterior(&c, &atlas, 3).unwrap();
        assert_eq!(ext.period_matrix, vec![1]);
        // Float circulation of ρ'₁ along the shared γ'₁ agrees.
        let mut circ = 0.0;
        for e in &atlas.cycles_boundary[0].edges {
            circ += e.sign as f64 * ext.edge_value(&ext.rho_prime[0], e.axis, e.pos).unwrap();
        }
        assert!((circ - 1.0).abs() <= 1e-12, "circ {circ}");
    }

    #[test]
    fn exterior_periods_shell() {
        let (c, atlas) = build_domain(
            &DomainRecipe::ToroidalShell { hole_width: Some(3) },
            GridSpec::cubed(14, 1.0 / 14.0).unwrap(),
        )
        .unwrap();
        let ext = build_exterior(&c, &atlas, 3).unwrap();
        assert_eq!(ext.period_matrix, vec![1, 0, 0, 1]);
    }

    #[test]
    fn boundary_circulation_of_rho_is_exact_to_roundoff() {
        // direct = 1 exactly. For w = ρ₁ the pairing is exact too: both
        // fields are cut-potential constructions and the gradient-gradient
        // part of the trace quadrature telescopes over the closed boundary.
        for n in [10usize, 16] {
            let (c, atlas) = torus(n);
            let basis = compute_basis(&c, &atlas).unwrap();
            let ext = build_exterior(&c, &atlas, 4).unwrap();
            let (direct, pairing) = boundary_circulation(&c, &basis.period_fields[0], 0, &ext, &atlas).unwrap();
            assert!((direct - 1.0).abs() <= 1e-12);
            assert!((pairing - 1.0).abs() <= 1e-10, "n={n}: pairing {pairing}");
        }
    }

    #[test]
    fn boundary_circulation_routes_exact_for_solved_potentials() {
        // Fields whose discrete curl is exactly tangential (solved
        // potentials) satisfy the pairing identity to roundoff: the
        // gradient part of the quadrature telescopes over the closed
        // boundary surface.
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        let ext = build_exterior(&c, &atlas, 4).unwrap();
        let bundle = vector_potential(&c, &basis.flux_fields[0].clone(), &basis, &atlas).unwrap();
        let (direct, pairing) = boundary_circulation(&c, &bundle.a, 0, &ext, &atlas).unwrap();
        assert!((direct - pairing).abs() <= 1e-12, "{direct} vs {pairing}");
    }

    #[test]
    fn boundary_circulation_routes_converge_for_sampled_fields() {
        // An analytically sampled azimuthal field has only O(h²)-small
        // discrete boundary curl, so the two routes differ by genuine
        // quadrature error that shrinks under refinement. Hole width scales
        // with n so the refinement levels share one physical domain.
        let mut errs = Vec::new();
        for n in [12usize, 24] {
            let (c, atlas) = build_domain(
                &DomainRecipe::SolidTorus { hole_width: Some(n / 4) },
                GridSpec::cubed(n, 1.0 / n as f64).unwrap(),
            )
            .unwrap();
            let ext = build_exterior(&c, &atlas, 4).unwrap();
            let w = sampled_azimuthal(&c);
            let (direct, pairing) = boundary_circulation(&c, &w, 0, &ext, &atlas).unwrap();
            errs.push((direct - pairing).abs());
        }
        assert!(errs[1] < errs[0], "no decay: {errs:?}");
        let order = (errs[0] / errs[1]).log2();
        assert!(order >= 0.9, "order {order:.2} from {errs:?}");
    }

    /// Edge circulations of (-(y-c), x-c, 0) / (2π r²): unit circulation
    /// around the hole axis, curl-free away from it.
    fn sampled_azimuthal(c: &Arc<CellComplex>) -> Field {
        let h = c.h();
        let spec = c.spec().clone();
        let cx = spec.origin[0] + 0.5 * spec.nx as f64 * h;
        let cy = spec.origin[1] + 0.5 * spec.ny as f64 * h;
        let mut w = c.zero_field(Degree::Edge);
        for slot in 0..c.n_active(Degree::Edge) {
            let (axis, i, j, _k) = c.edge_coords(c.full_id(Degree::Edge, slot));
            let u = axis.unit();
            let x = spec.origin[0] + (i as f64 + 0.5 * u[0] as f64) * h - cx;
            let y = spec.origin[1] + (j as f64 + 0.5 * u[1] as f64) * h - cy;
            let r2 = x * x + y * y;
            let m = [-y / r2, x / r2, 0.0];
            let comp = match axis {
                Axis::X => m[0],
                Axis::Y => m[1],
                Axis::Z => m[2],
            };
            w.values_mut()[slot] = comp * h / (2.0 * std::f64::consts::PI);
        }
        w
    }

    #[test]
    fn boundary_circulation_of_gradient_vanishes() {
        let (c, atlas) = torus(12);
        let ext = build_exterior(&c, &atlas, 3).unwrap();
        let mut phi = c.zero_field(Degree::Vertex);
        let mut state = 3u64;
        for v in phi.values_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            *v = ((state >> 33) % 13) as f64 - 6.0;
        }
        let dphi = c.d(&phi).unwrap();
        let (direct, pairing) = boundary_circulation(&c, &dphi, 0, &ext, &atlas).unwrap();
        assert_eq!(direct, 0.0);
        // The pairing route is quadrature; small but not exact.
        assert!(pairing.abs() <= 0.5 * phi.norm_inf(), "pairing {pairing}");
    }

    #[test]
    fn zero_field_boundary_circulation_is_zero() {
        let (c, atlas) = torus(10);
        let ext = build_exterior(&c, &atlas, 2).unwrap();
        let w = c.zero_field(Degree::Edge);
        let (direct, pairing) = boundary_circulation(&c, &w, 0, &ext, &atlas).unwrap();
        assert_eq!((direct, pairing), (0.0, 0.0));
    }
}

