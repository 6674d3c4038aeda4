//! Discrete harmonic Neumann basis of the multiply connected domain, in two
//! representations, and the flux decomposition B = B^Σ + B^H.
//!
//! Flux representatives h_i come from cell-centered cut potentials: a unit
//! flux jump across the cutting surface plus a potential making the field
//! exactly divergence-free and tangential. Period representatives ρ_i come
//! from vertex cut potentials with a unit circulation jump across the dual
//! cut; their periods around the generators are integers by construction.
//! The two realizations are not discrete Hodge duals of each other; each
//! carries the exactness the identities need.

use std::sync::Arc;

use crate::error::{HelioxError, Result};
use crate::geometry::{CuttingSurface, TopologyAtlas};
use crate::grid::{CellComplex, Degree, Field};
use crate::ops::{CellPoisson, VertexPoisson};
use crate::solver::{conjugate_gradient, CG_MAX_ITERS, CG_TOL};

/// Flux- and period-normalized harmonic representatives with their
/// normalization matrices.
pub struct HarmonicBasis {
    /// h[i]: flux-normalized 2-cochains, flux through Σ_j = δ_ij.
    pub flux_fields: Vec<Field>,
    /// rho[i]: 1-cochains with circulation δ_ik around γ_k.
    pub period_fields: Vec<Field>,
    /// g×g row-major; fluxes of the normalized h through the surfaces.
    pub flux_matrix: Vec<f64>,
    /// g×g row-major integer periods of rho around the interior generators,
    /// from the jump construction's crossing counts.
    pub period_matrix: Vec<i64>,
    pub solver_tolerance: f64,
}

impl HarmonicBasis {
    pub fn genus(&self) -> usize {
        self.flux_fields.len()
    }

    pub fn flux_matrix_entry(&self, i: usize, j: usize) -> f64 {
        self.flux_matrix[i * self.genus() + j]
    }

    pub fn period_matrix_entry(&self, i: usize, k: usize) -> i64 {
        self.period_matrix[i * self.genus() + k]
    }
}

/// B decomposed into the zero-cut-flux part and the harmonic part carrying
/// the cut fluxes.
pub struct Decomposition {
    pub b_sigma: Field,
    pub b_harm: Field,
    pub coefficients: Vec<f64>,
}

/// Signed flux of a face field through a cutting surface.
pub fn cut_flux(c: &Arc<CellComplex>, b: &Field, surface: &CuttingSurface) -> Result<f64> {
    b.check_complex_degree(c, Degree::Face)?;
    let mut acc = 0.0;
    for f in &surface.faces {
        let fid = c.face_id(f.axis, f.pos[0], f.pos[1], f.pos[2]);
        let slot = c
            .slot(Degree::Face, fid)
            .ok_or_else(|| HelioxError::AtlasMismatch("cutting surface face not active".into()))?;
        acc += f.sign as f64 * b.values()[slot];
    }
    Ok(acc)
}

/// All cut fluxes of a face field.
pub fn cut_fluxes(c: &Arc<CellComplex>, b: &Field, atlas: &TopologyAtlas) -> Result<Vec<f64>> {
    atlas.surfaces.iter().map(|s| cut_flux(c, b, s)).collect()
}

/// Raw (unnormalized) flux representative for one cutting surface: the
/// cut-potential field with unit flux jump across the surface.
fn raw_flux_field(c: &Arc<CellComplex>, surface: &CuttingSurface, op: &CellPoisson) -> Result<Field> {
    // Jump values per face slot.
    let mut jump_by_slot = vec![0.0f64; c.n_active(Degree::Face)];
    for f in &surface.faces {
        let fid = c.face_id(f.axis, f.pos[0], f.pos[1], f.pos[2]);
        let slot = c
            .slot(Degree::Face, fid)
            .ok_or_else(|| HelioxError::AtlasMismatch("cutting surface face not active".into()))?;
        if c.is_boundary_slot(Degree::Face, slot) {
            return Err(HelioxError::AtlasMismatch("cutting surface touches the boundary".into()));
        }
        jump_by_slot[slot] = f.sign as f64;
    }
    let mut jump_interior = Vec::with_capacity(op.interior_face_count());
    for slot in 0..c.n_active(Degree::Face) {
        if !c.is_boundary_slot(Degree::Face, slot) {
            jump_interior.push(jump_by_slot[slot]);
        }
    }
    // div(dθ + J) = 0  =>  L θ = div J (L assembled over interior faces).
    let rhs = op.divergence_of_interior(&jump_interior);
    let (theta, _rep) = conjugate_gradient(op, &rhs, CG_TOL, CG_MAX_ITERS)?;

    let mut h = c.zero_field(Degree::Face);
    for slot in 0..c.n_active(Degree::Face) {
        if c.is_boundary_slot(Degree::Face, slot) {
            continue; // tangential by construction
        }
        let (axis, i, j, k) = c.face_coords(c.full_id(Degree::Face, slot));
        let u = axis.unit();
        let hi = c
            .slot(Degree::Cell, c.cell_id(i, j, k))
            .expect("interior face has hi cell");
        let lo = c
            .slot(
                Degree::Cell,
                c.cell_id(
                    (i as i64 - u[0]) as usize,
                    (j as i64 - u[1]) as usize,
                    (k as i64 - u[2]) as usize,
                ),
            )
            .expect("interior face has lo cell");
        h.values_mut()[slot] = (theta[hi] - theta[lo]) + jump_by_slot[slot];
    }
    Ok(h)
}

/// Flux-normalized harmonic 2-cochain basis: d(h_i) = 0 to solver tolerance,
/// exactly tangential, flux through Σ_j equal to δ_ij.
pub fn compute_flux_basis(c: &Arc<CellComplex>, atlas: &TopologyAtlas) -> Result<Vec<Field>> {
    let g = atlas.surfaces.len();
    if g == 0 {
        return Ok(Vec::new());
    }
    let op = CellPoisson::new(c);
    let raw: Vec<Field> = atlas
        .surfaces
        .iter()
        .map(|s| raw_flux_field(c, s, &op))
        .collect::<Result<_>>()?;
    // F[i][j] = flux of raw_j through Σ_i; normalize so fluxes become δ.
    let mut f = vec![0.0; g * g];
    for i in 0..g {
        for j in 0..g {
            f[i * g + j] = cut_flux(c, &raw[j], &atlas.surfaces[i])?;
        }
    }
    let finv = invert_small(&f, g).ok_or(HelioxError::SingularFluxMatrix)?;
    let mut fields = Vec::with_capacity(g);
    for i in 0..g {
        let mut h = c.zero_field(Degree::Face);
        for k in 0..g {
            h.axpy(finv[k * g + i], &raw[k])?;
        }
        fields.push(h);
    }
    Ok(fields)
}

/// Period-normalized harmonic 1-cochains from vertex cut potentials: the
/// jump term pins the integer periods; the potential solve makes the
/// weighted adjoint divergence vanish.
pub fn compute_period_basis(c: &Arc<CellComplex>, atlas: &TopologyAtlas) -> Result<Vec<Field>> {
    let g = atlas.surfaces.len();
    if g == 0 {
        return Ok(Vec::new());
    }
    let op = VertexPoisson::new(c);
    let mut fields = Vec::with_capacity(g);
    for surface in &atlas.surfaces {
        let mut k_edge = vec![0.0f64; c.n_active(Degree::Edge)];
        for e in &surface.crossing_edges {
            let eid = c.edge_id(e.axis, e.pos[0], e.pos[1], e.pos[2]);
            let slot = c
                .slot(Degree::Edge, eid)
                .ok_or_else(|| HelioxError::AtlasMismatch("crossing edge not active".into()))?;
            k_edge[slot] = e.sign as f64;
        }
        // δ(dθ + K) = 0  =>  (d₀ᵀ M₁ d₀) θ = -d₀ᵀ M₁ K.
        let mut rhs = op.weighted_divergence(&k_edge);
        for v in &mut rhs {
            *v = -*v;
        }
        let (theta, _rep) = conjugate_gradient(&op, &rhs, CG_TOL, CG_MAX_ITERS)?;
        let theta_field = c.field_from_values(Degree::Vertex, theta)?;
        let mut rho = c.d(&theta_field)?;
        for (slot, k) in k_edge.iter().enumerate() {
            if *k != 0.0 {
                rho.values_mut()[slot] += k;
            }
        }
        fields.push(rho);
    }
    Ok(fields)
}

/// Build both representations and their normalization matrices.
pub fn compute_basis(c: &Arc<CellComplex>, atlas: &TopologyAtlas) -> Result<HarmonicBasis> {
    let g = atlas.surfaces.len();
    let flux_fields = compute_flux_basis(c, atlas)?;
    let period_fields = compute_period_basis(c, atlas)?;
    let mut flux_matrix = vec![0.0; g * g];
    for i in 0..g {
        for j in 0..g {
            flux_matrix[i * g + j] = cut_flux(c, &flux_fields[i], &atlas.surfaces[j])?;
        }
    }
    // Integer periods: the circulation of rho_i around γ_k is exactly the
    // signed crossing count of γ_k with the i-th dual cut (the gradient part
    // telescopes away in exact arithmetic).
    let mut period_matrix = vec![0i64; g * g];
    for i in 0..g {
        for k in 0..g {
            period_matrix[i * g + k] =
                crate::geometry::intersection_number(&atlas.cycles_interior[k], &atlas.surfaces[i]);
        }
    }
    Ok(HarmonicBasis {
        flux_fields,
        period_fields,
        flux_matrix,
        period_matrix,
        solver_tolerance: CG_TOL,
    })
}

/// Decompose a divergence-free tangential field: coefficients are the cut
/// fluxes themselves (flux-normalized basis), so the defining property of
/// the harmonic part — its cut fluxes agree with B's — is exact.
pub fn decompose(c: &Arc<CellComplex>, b: &Field, basis: &HarmonicBasis, atlas: &TopologyAtlas) -> Result<Decomposition> {
    b.check_complex_degree(c, Degree::Face)?;
    let scale = b.norm_inf().max(1.0);
    let div = c.divergence_residual(b)?;
    if div > 1e-8 * scale {
        return Err(HelioxError::NotDivergenceFree {
            residual: div,
            threshold: 1e-8 * scale,
        });
    }
    let bn = c.boundary_normal_residual(b)?;
    if bn > 1e-12 * scale {
        return Err(HelioxError::NotTangential { residual: bn });
    }
    let coefficients = cut_fluxes(c, b, atlas)?;
    let mut b_harm = c.zero_field(Degree::Face);
    for (ci, h) in coefficients.iter().zip(&basis.flux_fields) {
        b_harm.axpy(*ci, h)?;
    }
    let b_sigma = b.sub(&b_harm)?;
    Ok(Decomposition {
        b_sigma,
        b_harm,
        coefficients,
    })
}

/// Membership test for the zero-cut-flux subspace: divergence-free,
/// tangential, all cut fluxes below tolerance.
pub fn is_in_qperp(c: &Arc<CellComplex>, v: &Field, basis: &HarmonicBasis, atlas: &TopologyAtlas) -> Result<bool> {
    v.check_complex_degree(c, Degree::Face)?;
    let scale = v.norm_inf().max(1.0);
    let tol = 100.0 * basis.solver_tolerance * scale;
    if c.divergence_residual(v)? > tol {
        return Ok(false);
    }
    if c.boundary_normal_residual(v)? > tol {
        return Ok(false);
    }
    for surface in &atlas.surfaces {
        if cut_flux(c, v, surface)?.abs() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Invert a small row-major g×g matrix by Gauss-Jordan with partial
/// pivoting; None if singular.
pub(crate) fn invert_small(m: &[f64], g: usize) -> Option<Vec<f64>> {
    let mut a = m.to_vec();
    let mut inv = vec![0.0; g * g];
    for i in 0..g {
        inv[i * g + i] = 1.0;
    }
    for col in 0..g {
        let mut piv = col;
        for r in col + 1..g {
            if a[r * g + col].abs() > a[piv * g + col].abs() {
                piv = r;
            }
        }
        if a[piv * g + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..g {
                a.swap(col * g + k, piv * g + k);
                inv.swap(col * g + k, piv * g + k);
            }
        }
        let d = a[col * g + col];
        for k in 0..g {
            a[col * g + k] /= d;
            inv[col * g + k] /= d;
        }
        for r in 0..g {
            if r == col {
                continue;
            }
            let f = a[r * g + col];
            if f != 0.0 {
                for k in 0..g {
                    a[r * g + k] -= f * a[col * g + k];
                    inv[r * g + k] -= f * inv[col * g + k];
                }
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, DomainRecipe};
    use crate::grid::GridSpec;

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
    fn box_has_empty_basis() {
        let (c, atlas) = build_domain(&DomainRecipe::Box, GridSpec::cubed(8, 0.125).unwrap()).unwrap();
        let basis = compute_basis(&c, &atlas).unwrap();
        assert_eq!(basis.genus(), 0);
    }

    #[test]
    fn torus_flux_basis_properties() {
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        assert_eq!(basis.genus(), 1);
        let h = &basis.flux_fields[0];
        assert!((basis.flux_matrix_entry(0, 0) - 1.0).abs() <= 10.0 * CG_TOL);
        // Exactly tangential, divergence-free to solver tolerance.
        assert_eq!(c.boundary_normal_residual(h).unwrap(), 0.0);
        let scale = h.norm_inf();
        assert!(c.divergence_residual(h).unwrap() <= 1e-9 * scale.max(1.0));
    }

    #[test]
    fn shell_flux_matrix_is_identity_after_normalization() {
        let (c, atlas) = build_domain(
            &DomainRecipe::ToroidalShell { hole_width: Some(3) },
            GridSpec::cubed(12, 1.0 / 12.0).unwrap(),
        )
        .unwrap();
        let basis = compute_basis(&c, &atlas).unwrap();
        assert_eq!(basis.genus(), 2);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (basis.flux_matrix_entry(i, j) - want).abs() <= 1e-10,
                    "flux[{i}][{j}] = {}",
                    basis.flux_matrix_entry(i, j)
                );
            }
        }
    }

    #[test]
    fn period_matrix_is_exact_identity() {
        for (recipe, g) in [
            (DomainRecipe::SolidTorus { hole_width: None }, 1usize),
            (DomainRecipe::NfoldTorus { n: 2, hole_width: Some(3) }, 2),
            (DomainRecipe::ToroidalShell { hole_width: Some(3) }, 2),
        ] {
            let (c, atlas) = build_domain(&recipe, GridSpec::cubed(14, 1.0 / 14.0).unwrap()).unwrap();
            let basis = compute_basis(&c, &atlas).unwrap();
            for i in 0..g {
                for k in 0..g {
                    let want = if i == k { 1 } else { 0 };
                    assert_eq!(basis.period_matrix_entry(i, k), want, "{:?} ({i},{k})", recipe);
                }
            }
        }
    }

    #[test]
    fn rho_is_closed_everywhere() {
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        let rho = &basis.period_fields[0];
        let drho = c.d(rho).unwrap();
        // Closed on every active face: the jump cancels inside the dual cut
        // and the rim lies outside the complex.
        assert!(drho.norm_inf() <= 1e-12 * rho.norm_inf().max(1.0));
    }

    #[test]
    fn float_periods_match_integer_periods() {
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        let rho = &basis.period_fields[0];
        let mut circ = 0.0;
        for e in &atlas.cycles_interior[0].edges {
            let slot = c.slot(Degree::Edge, c.edge_id(e.axis, e.pos[0], e.pos[1], e.pos[2])).unwrap();
            circ += e.sign as f64 * rho.values()[slot];
        }
        assert!((circ - 1.0).abs() <= 1e-12);
    }

    /// Flux identity: pair_12(rho_i, v) equals the cut flux of v for
    /// divergence-free tangential v.
    #[test]
    fn flux_identity_for_curl_fields() {
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        let rho = &basis.period_fields[0];
        for trial in 0..20 {
            let a = random_interior_potential(&c, 11 + trial);
            let v = c.d(&a).unwrap();
            let lhs = c.pair_12(rho, &v).unwrap();
            let rhs = cut_flux(&c, &v, &atlas.surfaces[0]).unwrap();
            let scale = v.norm_l2().max(1.0);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * scale,
                "trial {trial}: {lhs} vs {rhs}"
            );
        }
    }

    /// Same identity with a harmonic component present.
    #[test]
    fn flux_identity_with_harmonic_component() {
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        let rho = &basis.period_fields[0];
        let a = random_interior_potential(&c, 5);
        let mut v = c.d(&a).unwrap();
        v.axpy(2.5, &basis.flux_fields[0]).unwrap();
        let lhs = c.pair_12(rho, &v).unwrap();
        let rhs = cut_flux(&c, &v, &atlas.surfaces[0]).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * v.norm_l2().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn decompose_reconstructs_and_zeroes_fluxes() {
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        let a = random_interior_potential(&c, 3);
        let mut b = c.d(&a).unwrap();
        b.axpy(2.0, &basis.flux_fields[0]).unwrap();

        let dec = decompose(&c, &b, &basis, &atlas).unwrap();
        // Reconstruction: one rounding in B - B_harm, one in the sum, so at
        // most a couple of ulps of the field scale per face.
        let recon = dec.b_sigma.add(&dec.b_harm).unwrap();
        let scale = b.norm_inf();
        assert!(recon
            .values()
            .iter()
            .zip(b.values())
            .all(|(x, y)| (x - y).abs() <= 1e-15 * scale));
        // Coefficient 0 is flux(dA) + 2.
        let flux_da = cut_flux(&c, &c.d(&a).unwrap(), &atlas.surfaces[0]).unwrap();
        assert!((dec.coefficients[0] - (flux_da + 2.0)).abs() <= 1e-12 * (1.0 + flux_da.abs()));
        // Residual part has no cut flux.
        let f = cut_flux(&c, &dec.b_sigma, &atlas.surfaces[0]).unwrap();
        assert!(f.abs() <= 10.0 * CG_TOL * b.norm_inf().max(1.0));
        assert!(is_in_qperp(&c, &dec.b_sigma, &basis, &atlas).unwrap());
        assert!(!is_in_qperp(&c, &basis.flux_fields[0], &basis, &atlas).unwrap());
    }

    #[test]
    fn decompose_is_linear() {
        let (c, atlas) = torus(10);
        let basis = compute_basis(&c, &atlas).unwrap();
        let h = &basis.flux_fields[0];
        let dec1 = decompose(&c, &h.scaled(1.5), &basis, &atlas).unwrap();
        let dec2 = decompose(&c, &h.scaled(3.0), &basis, &atlas).unwrap();
        for (x, y) in dec1.b_harm.values().iter().zip(dec2.b_harm.values()) {
            assert!((2.0 * x - y).abs() <= 1e-13 * (1.0 + y.abs()));
        }
        assert!((dec1.coefficients[0] - 1.5).abs() <= 1e-10);
    }

    #[test]
    fn decompose_rejects_divergent_input() {
        let (c, atlas) = torus(10);
        let basis = compute_basis(&c, &atlas).unwrap();
        let mut b = c.zero_field(Degree::Face);
        let interior = (0..c.n_active(Degree::Face))
            .find(|&s| !c.is_boundary_slot(Degree::Face, s))
            .unwrap();
        b.values_mut()[interior] = 1.0;
        assert!(matches!(
            decompose(&c, &b, &basis, &atlas),
            Err(HelioxError::NotDivergenceFree { .. })
        ));
    }

    #[test]
    fn degenerate_genus_zero_decomposition() {
        let (c, atlas) = build_domain(&DomainRecipe::Box, GridSpec::cubed(8, 0.125).unwrap()).unwrap();
        let basis = compute_basis(&c, &atlas).unwrap();
        let a = random_interior_potential(&c, 17);
        let b = c.d(&a).unwrap();
        let dec = decompose(&c, &b, &basis, &atlas).unwrap();
        assert!(dec.coefficients.is_empty());
        assert!(dec.b_harm.values().iter().all(|&v| v == 0.0));
        assert!(dec.b_sigma.values().iter().zip(b.values()).all(|(x, y)| x == y));
    }
}
