//! Helicity functionals: the classical volume integral H, the gauge-
//! invariant Υ for multiply connected domains, the Z functional with its
//! boundary term, and the boundary/circulation integral identity checker.
//!
//! Υ(B) = ∫ A·B − Σ_i (∮_{γ_i} A)(∫_{Σ_i} B·n), with circulations taken
//! along the explicit interior lattice cycles; the exterior-pairing route is
//! kept as a convergence cross-check only.

use std::sync::Arc;

use crate::error::{HelioxError, Result};
use crate::geometry::TopologyAtlas;
use crate::grid::{CellComplex, Degree, Field};
use crate::harmonic::{cut_fluxes, decompose, HarmonicBasis};
use crate::potential::{boundary_cross_pairing_interior, circulation, harmonic_potential};

/// Diagnostic bundle around one (A, B) pair.
#[derive(Clone, Debug)]
pub struct HelicityReport {
    pub h_classical: f64,
    pub upsilon: f64,
    pub z: f64,
    /// ∮_{γ_i} A along each interior generator.
    pub circulations: Vec<f64>,
    /// ∫_{Σ_i} B·n through each cutting surface.
    pub cut_fluxes: Vec<f64>,
    pub gauge_phi_norm: f64,
    pub gauge_periods: Vec<f64>,
}

fn check_curl(c: &Arc<CellComplex>, a: &Field, b: &Field) -> Result<()> {
    let resid = c.d(a)?.sub(b)?.norm_inf();
    let scale = b.norm_inf().max(1.0);
    if resid > 1e-8 * scale {
        return Err(HelioxError::InvalidParameter(format!(
            "potential does not reproduce the field: curl residual {:e}",
            resid
        )));
    }
    Ok(())
}

/// The classical helicity volume integral ∫ A·B.
pub fn classical_helicity(c: &Arc<CellComplex>, a: &Field, b: &Field) -> Result<f64> {
    check_curl(c, a, b)?;
    c.pair_12(a, b)
}

/// The gauge-invariant helicity and its companion diagnostics. Supplying
/// the harmonic potential avoids a solve; otherwise it is computed when the
/// domain has handles.
pub fn upsilon_report(
    c: &Arc<CellComplex>,
    b: &Field,
    a: &Field,
    basis: &HarmonicBasis,
    atlas: &TopologyAtlas,
    a_harm: Option<&Field>,
) -> Result<HelicityReport> {
    check_curl(c, a, b)?;
    let h_classical = c.pair_12(a, b)?;
    let fluxes = cut_fluxes(c, b, atlas)?;
    let circulations: Vec<f64> = atlas
        .cycles_interior
        .iter()
        .map(|cy| circulation(c, a, cy))
        .collect::<Result<_>>()?;
    let mut upsilon = h_classical;
    for (ci, phi) in circulations.iter().zip(&fluxes) {
        upsilon -= ci * phi;
    }
    let z = if basis.genus() == 0 {
        h_classical
    } else {
        let ah_owned;
        let ah = match a_harm {
            Some(f) => f,
            None => {
                let dec = decompose(c, b, basis, atlas)?;
                ah_owned = harmonic_potential(c, &dec.b_harm, basis)?;
                &ah_owned
            }
        };
        z_functional(c, b, a, ah)?
    };
    Ok(HelicityReport {
        h_classical,
        upsilon,
        z,
        circulations,
        cut_fluxes: fluxes,
        gauge_phi_norm: 0.0,
        gauge_periods: vec![0.0; atlas.genus],
    })
}

/// Z(B, A) = ∫ A·B − ∫_{∂Ω} A^Σ×n·A^H with A^Σ = A − A^H. The boundary
/// term uses the same tangential trace rule as the circulation pairings.
pub fn z_functional(c: &Arc<CellComplex>, b: &Field, a: &Field, a_harm: &Field) -> Result<f64> {
    check_curl(c, a, b)?;
    let volume = c.pair_12(a, b)?;
    let a_sigma = a.sub(a_harm)?;
    // ∫ (A^Σ×n)·A^H = −∫ (n×A^Σ)·A^H.
    let boundary = -boundary_cross_pairing_interior(c, &a_sigma, a_harm)?;
    Ok(volume - boundary)
}

/// Both sides of the boundary integral identity: the surface term
/// ∫_{∂Ω}(w×n)·v against the circulation products
/// Σ_i (∮_{γ_i}w)(∮_{γ'_i}v) − Σ_i (∮_{γ'_i}w)(∮_{γ_i}v),
/// circulations taken as direct cycle sums.
pub fn iden_check(c: &Arc<CellComplex>, w: &Field, v: &Field, atlas: &TopologyAtlas) -> Result<(f64, f64)> {
    let lhs = -boundary_cross_pairing_interior(c, w, v)?;
    let mut rhs = 0.0;
    for i in 0..atlas.genus {
        let w_gamma = circulation(c, w, &atlas.cycles_interior[i])?;
        let w_gamma_p = circulation(c, w, &atlas.cycles_boundary[i])?;
        let v_gamma = circulation(c, v, &atlas.cycles_interior[i])?;
        let v_gamma_p = circulation(c, v, &atlas.cycles_boundary[i])?;
        rhs += w_gamma * v_gamma_p - w_gamma_p * v_gamma;
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, DomainRecipe};
    use crate::grid::{Axis, GridSpec};
    use crate::harmonic::{compute_basis, cut_flux};
    use crate::potential::{gauge_shift, vector_potential};

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

    fn random_vertex_field(c: &Arc<CellComplex>, seed: u64) -> Field {
        let mut state = seed;
        let mut phi = c.zero_field(Degree::Vertex);
        for v in phi.values_mut() {
            state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            *v = ((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5;
        }
        phi
    }

    #[test]
    fn zero_fields_have_zero_helicity() {
        let (c, _atlas) = torus(10);
        let a = c.zero_field(Degree::Edge);
        let b = c.zero_field(Degree::Face);
        assert_eq!(classical_helicity(&c, &a, &b).unwrap(), 0.0);
    }

    #[test]
    fn curl_mismatch_is_rejected() {
        let (c, atlas) = torus(10);
        let basis = compute_basis(&c, &atlas).unwrap();
        let a = c.zero_field(Degree::Edge);
        let b = basis.flux_fields[0].clone();
        assert!(classical_helicity(&c, &a, &b).is_err());
    }

    /// Closed-form oracle on the box: A = (P, Q, 0) built from sin² bumps
    /// has ∫ A·curl A = 9π L² / 128 with L the active box extent.
    #[test]
    fn classical_helicity_matches_closed_form_on_box() {
        // Guarded so wall-edge samples are exactly zero (sin(π) is not).
        let bump = |t: f64| {
            if t <= 0.0 || t >= 1.0 {
                0.0
            } else {
                (std::f64::consts::PI * t).sin().powi(2)
            }
        };
        let mut errs = Vec::new();
        for n in [12usize, 24] {
            let spec = GridSpec::cubed(n, 1.0 / n as f64).unwrap();
            let (c, _atlas) = build_domain(&DomainRecipe::Box, spec).unwrap();
            let h = c.h();
            let ell = (n - 2) as f64 * h;
            let x0 = h;
            let uval = |x: f64| (x - x0) / ell;
            let mut a = c.zero_field(Degree::Edge);
            for slot in 0..c.n_active(Degree::Edge) {
                let (axis, i, j, k) = c.edge_coords(c.full_id(Degree::Edge, slot));
                let u = axis.unit();
                let x = (i as f64 + 0.5 * u[0] as f64) * h;
                let y = (j as f64 + 0.5 * u[1] as f64) * h;
                let z = (k as f64 + 0.5 * u[2] as f64) * h;
                let (ux, uy, uz) = (uval(x), uval(y), uval(z));
                let w3 = bump(ux) * bump(uy) * bump(uz);
                let comp = match axis {
                    Axis::X => w3,
                    Axis::Y => w3 * (2.0 * std::f64::consts::PI * uz).sin(),
                    Axis::Z => 0.0,
                };
                a.values_mut()[slot] = comp * h;
            }
            let b = c.d(&a).unwrap();
            assert_eq!(c.boundary_normal_residual(&b).unwrap(), 0.0);
            let hel = classical_helicity(&c, &a, &b).unwrap();
            let exact = 9.0 * std::f64::consts::PI * ell * ell / 128.0;
            errs.push((hel - exact).abs());
        }
        // Second-order convergence to the closed form.
        let order = (errs[0] / errs[1]).log2();
        assert!(order >= 1.8, "order {order:.2}, errors {errs:?}");
    }

    #[test]
    fn upsilon_equals_h_on_simply_connected_domain() {
        let (c, atlas) = build_domain(&DomainRecipe::Box, GridSpec::cubed(8, 0.125).unwrap()).unwrap();
        let basis = compute_basis(&c, &atlas).unwrap();
        let a = random_interior_potential(&c, 4);
        let b = c.d(&a).unwrap();
        let rep = upsilon_report(&c, &b, &a, &basis, &atlas, None).unwrap();
        assert_eq!(rep.upsilon.to_bits(), rep.h_classical.to_bits());
        assert_eq!(rep.z.to_bits(), rep.h_classical.to_bits());
    }

    /// The central contract: Υ is independent of the vector potential.
    #[test]
    fn upsilon_is_gauge_invariant() {
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        let a_harm_unit = crate::potential::harmonic_potential(&c, &basis.flux_fields[0], &basis).unwrap();
        for seed in 0..25 {
            // B = d(R) + c·h with its potential assembled solve-free.
            let r = random_interior_potential(&c, 100 + seed);
            let coef = ((seed as f64) - 12.0) / 5.0;
            let mut b = c.d(&r).unwrap();
            b.axpy(coef, &basis.flux_fields[0]).unwrap();
            let mut a = r.clone();
            a.axpy(coef, &a_harm_unit).unwrap();

            let phi = random_vertex_field(&c, 200 + seed);
            let p = [((seed % 7) as f64) - 3.0];
            let a2 = gauge_shift(&c, &a, &phi, &p, &basis).unwrap();

            let rep1 = upsilon_report(&c, &b, &a, &basis, &atlas, Some(&a_harm_unit)).unwrap();
            let rep2 = upsilon_report(&c, &b, &a2, &basis, &atlas, Some(&a_harm_unit)).unwrap();
            let scale = (a.norm_l2() * b.norm_l2()).max(1.0);
            assert!(
                (rep1.upsilon - rep2.upsilon).abs() <= 1e-10 * scale,
                "seed {seed}: {} vs {}",
                rep1.upsilon,
                rep2.upsilon
            );
        }
    }

    /// The classical H is *not* gauge invariant: a period shift moves it by
    /// exactly p·Φ.
    #[test]
    fn classical_h_shifts_by_flux_under_period_gauge() {
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        let b = basis.flux_fields[0].clone();
        let bundle = vector_potential(&c, &b, &basis, &atlas).unwrap();
        let phi0 = c.zero_field(Degree::Vertex);
        let shifted = gauge_shift(&c, &bundle.a, &phi0, &[1.0], &basis).unwrap();
        let h1 = classical_helicity(&c, &bundle.a, &b).unwrap();
        let h2 = classical_helicity(&c, &shifted, &b).unwrap();
        let flux = cut_flux(&c, &b, &atlas.surfaces[0]).unwrap();
        assert!((flux - 1.0).abs() <= 1e-10);
        assert!(
            ((h2 - h1) - flux).abs() <= 1e-10 * (1.0 + flux.abs()),
            "H shift {} vs flux {}",
            h2 - h1,
            flux
        );
    }

    #[test]
    fn upsilon_brute_force_oracle() {
        // Independent re-summation of the volume pairing and the cycle
        // circulations, written out longhand.
        let (c, atlas) = torus(12);
        let basis = compute_basis(&c, &atlas).unwrap();
        let r = random_interior_potential(&c, 9);
        let mut b = c.d(&r).unwrap();
        b.axpy(1.25, &basis.flux_fields[0]).unwrap();
        let a_h = crate::potential::harmonic_potential(&c, &basis.flux_fields[0], &basis).unwrap();
        let mut a = r.clone();
        a.axpy(1.25, &a_h).unwrap();

        let rep = upsilon_report(&c, &b, &a, &basis, &atlas, Some(&a_h)).unwrap();

        let mut vol = 0.0;
        for slot in 0..c.n_active(Degree::Edge) {
            let (axis, i, j, k) = c.edge_coords(c.full_id(Degree::Edge, slot));
            let mut bsum = 0.0;
            for fid in c.edge_n8_face_ids(axis, i, j, k).into_iter().flatten() {
                if let Some(fslot) = c.slot(Degree::Face, fid) {
                    bsum += b.values()[fslot];
                }
            }
            vol += a.values()[slot] * bsum / 8.0;
        }
        let mut circ = 0.0;
        for e in &atlas.cycles_interior[0].edges {
            let slot = c.slot(Degree::Edge, c.edge_id(e.axis, e.pos[0], e.pos[1], e.pos[2])).unwrap();
            circ += e.sign as f64 * a.values()[slot];
        }
        let mut flux = 0.0;
        for f in &atlas.surfaces[0].faces {
            let slot = c.slot(Degree::Face, c.face_id(f.axis, f.pos[0], f.pos[1], f.pos[2])).unwrap();
            flux += f.sign as f64 * b.values()[slot];
        }
        let expected = vol - circ * flux;
        assert!(
            (rep.upsilon - expected).abs() <= 1e-12 * (1.0 + expected.abs()),
            "{} vs {}",
            rep.upsilon,
            expected
        );
    }

    #[test]
    fn upsilon_scales_quadratically() {
        let (c, atlas) = torus(10);
        let basis = compute_basis(&c, &atlas).unwrap();
        let r = random_interior_potential(&c, 77);
        let mut b = c.d(&r).unwrap();
        b.axpy(0.5, &basis.flux_fields[0]).unwrap();
        let a_h = crate::potential::harmonic_potential(&c, &basis.flux_fields[0], &basis).unwrap();
        let mut a = r.clone();
        a.axpy(0.5, &a_h).unwrap();
        let rep1 = upsilon_report(&c, &b, &a, &basis, &atlas, None).unwrap();
        let rep2 = upsilon_report(&c, &b.scaled(3.0), &a.scaled(3.0), &basis, &atlas, None).unwrap();
        assert!(
            (rep2.upsilon - 9.0 * rep1.upsilon).abs() <= 1e-11 * (1.0 + rep2.upsilon.abs()),
            "{} vs {}",
            rep2.upsilon,
            9.0 * rep1.upsilon
        );
    }

    #[test]
    fn iden_check_antisymmetry_is_exact() {
        let (c, atlas) = torus(12);
        let w = random_interior_potential(&c, 41);
        let (lhs, rhs) = iden_check(&c, &w, &w, &atlas).unwrap();
        // (w×n)·w vanishes per face in exact arithmetic because the two
        // products commute; the sums are exactly zero.
        assert_eq!(lhs, 0.0);
        assert_eq!(rhs, 0.0);
        let v = random_interior_potential(&c, 42);
        let (lwv, rwv) = iden_check(&c, &w, &v, &atlas).unwrap();
        let (lvw, rvw) = iden_check(&c, &v, &w, &atlas).unwrap();
        assert_eq!(lwv, -lvw);
        assert_eq!(rwv, -rvw);
    }

    #[test]
    fn iden_check_gradient_rhs_vanishes() {
        let (c, atlas) = torus(12);
        let mut phi = c.zero_field(Degree::Vertex);
        let mut state = 5u64;
        for v in phi.values_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            *v = ((state >> 33) % 19) as f64 - 9.0;
        }
        let w = c.d(&phi).unwrap();
        let v = random_interior_potential(&c, 50);
        let (lhs, rhs) = iden_check(&c, &w, &v, &atlas).unwrap();
        // Integer φ: every circulation of dφ telescopes to exactly zero.
        assert_eq!(rhs, 0.0);
        // The surface quadrature of a gradient against v is small but not
        // exactly zero.
        assert!(lhs.abs() <= 1.0 * phi.norm_inf() * v.norm_inf());
    }

    /// ΔZ = ΔΥ for pairs with the same harmonic content (the stationarity
    /// situation of the dissipation theorem). With a shared harmonic
    /// potential the discrete identity is exact to roundoff: the boundary
    /// quadrature telescopes for solved potentials and the harmonic
    /// circulation terms cancel in the difference.
    #[test]
    fn z_difference_tracks_upsilon_difference() {
        let mut errs = Vec::new();
        for n in [12usize, 24] {
            let (c, atlas) = build_domain(
                &DomainRecipe::SolidTorus { hole_width: Some(n / 4) },
                GridSpec::cubed(n, 1.0 / n as f64).unwrap(),
            )
            .unwrap();
            let basis = compute_basis(&c, &atlas).unwrap();
            // Shared harmonic part, different curl parts sampled from one
            // smooth potential family.
            let smooth = sampled_bump_potential(&c);
            let b0 = {
                let mut b = c.d(&smooth.scaled(0.4)).unwrap();
                b.axpy(1.0, &basis.flux_fields[0]).unwrap();
                b
            };
            let b1 = {
                let mut b = c.d(&smooth).unwrap();
                b.axpy(1.0, &basis.flux_fields[0]).unwrap();
                b
            };
            let p0 = vector_potential(&c, &b0, &basis, &atlas).unwrap();
            let p1 = vector_potential(&c, &b1, &basis, &atlas).unwrap();
            let a_h = crate::potential::harmonic_potential(&c, &basis.flux_fields[0], &basis).unwrap();
            let r0 = upsilon_report(&c, &b0, &p0.a, &basis, &atlas, Some(&a_h)).unwrap();
            let r1 = upsilon_report(&c, &b1, &p1.a, &basis, &atlas, Some(&a_h)).unwrap();
            let dz = r1.z - r0.z;
            let du = r1.upsilon - r0.upsilon;
            let scale = r1.upsilon.abs().max(1.0);
            errs.push((dz - du).abs() / scale);
        }
        for (i, e) in errs.iter().enumerate() {
            assert!(*e <= 1e-12, "level {i}: |dZ - dUpsilon| = {e:e}");
        }
    }

    /// Smooth compactly supported edge potential sampled analytically, for
    /// refinement studies that need one continuum field across grids.
    fn sampled_bump_potential(c: &Arc<CellComplex>) -> Field {
        let bump = |t: f64| {
            if t <= 0.0 || t >= 1.0 {
                0.0
            } else {
                (std::f64::consts::PI * t).sin().powi(2)
            }
        };
        let spec = c.spec().clone();
        let h = c.h();
        let ell = [
            (spec.nx - 2) as f64 * h,
            (spec.ny - 2) as f64 * h,
            (spec.nz - 2) as f64 * h,
        ];
        let mut a = c.zero_field(Degree::Edge);
        for slot in 0..c.n_active(Degree::Edge) {
            let (axis, i, j, k) = c.edge_coords(c.full_id(Degree::Edge, slot));
            let u = axis.unit();
            let x = (i as f64 + 0.5 * u[0] as f64) * h;
            let y = (j as f64 + 0.5 * u[1] as f64) * h;
            let z = (k as f64 + 0.5 * u[2] as f64) * h;
            let (ux, uy, uz) = ((x - h) / ell[0], (y - h) / ell[1], (z - h) / ell[2]);
            let w3 = bump(ux) * bump(uy) * bump(uz);
            let comp = match axis {
                Axis::X => w3 * (2.0 * std::f64::consts::PI * uy).cos(),
                Axis::Y => w3,
                Axis::Z => w3 * (2.0 * std::f64::consts::PI * ux).sin(),
            };
            a.values_mut()[slot] = comp * h;
        }
        for slot in 0..c.n_active(Degree::Edge) {
            if c.is_boundary_slot(Degree::Edge, slot) {
                a.values_mut()[slot] = 0.0;
            }
        }
        a
    }
}
