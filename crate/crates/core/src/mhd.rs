//! Staggered-grid incompressible viscous resistive MHD with constrained
//! transport, and the helicity dissipation / conservation diagnostics.
//!
//! The single most important scheme decision: the electromotive force is
//! forced to zero on every boundary edge. That realizes u = 0 on the wall
//! together with the natural condition on the curl of B, and it makes the
//! cut fluxes and the boundary circulations of the tracked potential
//! conserved quantities of the update, step by step.
//!
//! Alongside B the simulation advances the vector potential by dA/dt = -E,
//! so d(A) = B holds at every step and the helicity functionals never need
//! a solve during a run.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HelioxError, Result};
use crate::geometry::TopologyAtlas;
use crate::grid::{Axis, CellComplex, Degree, Field};
use crate::harmonic::{cut_fluxes, HarmonicBasis};
use crate::helicity::upsilon_report;
use crate::ops::CellPoisson;
use crate::potential::harmonic_potential;
use crate::solver::{conjugate_gradient, CG_MAX_ITERS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Kinematic,
    Coupled,
}

/// Named analytic or seeded-random initial data.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialField {
    Zero,
    /// "bump" (compact two-component potential) or "abc" (windowed
    /// three-component swirl).
    Named { name: String, amplitude: f64 },
    Random { seed: u64, amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InitialCondition {
    /// Recipe for the vector potential of the curl part of B.
    pub b_potential: InitialField,
    /// Coefficients of the harmonic part (length = genus).
    pub harmonic_coefficients: Vec<f64>,
    /// Recipe for the initial velocity.
    pub u: InitialField,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    pub eta: f64,
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    pub mode: SimMode,
    /// Diagnostics every `cadence` steps (first and last always recorded).
    pub cadence: usize,
}

impl SimConfig {
    /// Stability guard: dt must not exceed 0.25 h² / max(η, ν, h·|u|max).
    pub fn cfl_bound(&self, h: f64, umax: f64) -> f64 {
        let denom = self.eta.max(self.nu).max(h * umax).max(1e-300);
        0.25 * h * h / denom
    }
}

#[derive(Clone, Debug)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub t: f64,
    pub h_classical: f64,
    pub upsilon: f64,
    pub z: f64,
    pub energy_kinetic: f64,
    pub energy_magnetic: f64,
    pub energy_total: f64,
    /// Cumulative trapezoid of η‖curl B‖².
    pub diss_ohmic_cum: f64,
    /// Cumulative trapezoid of ν‖∇u‖².
    pub diss_viscous_cum: f64,
    /// Cumulative trapezoid of 2η ∫ B·curl B (the helicity dissipation).
    pub helicity_diss_cum: f64,
    /// [Υ(t) − Υ(0)] + D(t), normalized by max(|Υ(0)|, |D(t)|, ε).
    pub balance_residual: f64,
    pub cut_fluxes: Vec<f64>,
    pub circulations: Vec<f64>,
    pub harmonic_coefficients: Vec<f64>,
}

/// One MHD run: owns its state; stepping is sequential in time.
pub struct Simulation {
    pub complex: Arc<CellComplex>,
    pub atlas: TopologyAtlas,
    pub basis: HarmonicBasis,
    pub config: SimConfig,
    pub t: f64,
    pub step_index: usize,
    pub b: Field,
    pub u: Field,
    /// Tracked vector potential with d(a) = b at every step.
    pub a: Field,
    /// Stationary harmonic potential of the initial harmonic part.
    pub a_harm0: Field,
    pub history: Vec<DiagnosticsRow>,
    upsilon0: f64,
    rate_hel_prev: f64,
    rate_ohm_prev: f64,
    rate_visc_prev: f64,
    diss_hel: f64,
    diss_ohm: f64,
    diss_visc: f64,
    poisson: CellPoisson,
    projection_tol: f64,
}

/// Build (B₀, u₀, A₀) from an initial condition: B₀ = d(A₀) + Σ cᵢ h_i is
/// divergence-free and tangential by construction; u₀ is projected to
/// divergence-free with zero boundary faces.
pub fn initial_field(
    c: &Arc<CellComplex>,
    atlas: &TopologyAtlas,
    basis: &HarmonicBasis,
    init: &InitialCondition,
) -> Result<(Field, Field, Field)> {
    if init.harmonic_coefficients.len() != basis.genus() {
        return Err(HelioxError::InvalidParameter(format!(
            "{} harmonic coefficients for genus {}",
            init.harmonic_coefficients.len(),
            basis.genus()
        )));
    }
    let a_curl = build_edge_potential(c, &init.b_potential)?;
    let mut b = c.d(&a_curl)?;
    let mut a = a_curl;
    for (ci, h) in init.harmonic_coefficients.iter().zip(&basis.flux_fields) {
        if *ci != 0.0 {
            b.axpy(*ci, h)?;
            let ah = harmonic_potential(c, h, basis)?;
            a.axpy(*ci, &ah)?;
        }
    }
    let _ = atlas;
    let u = build_face_velocity(c, &init.u)?;
    Ok((b, u, a))
}

fn domain_window(c: &CellComplex, x: f64, y: f64, z: f64) -> (f64, f64, f64, f64) {
    // Map physical coordinates to [0,1]³ over the active bounding box and
    // produce a window that vanishes (exactly) on and outside the walls.
    let spec = c.spec();
    let h = spec.h;
    let ex = (spec.nx - 2) as f64 * h;
    let ey = (spec.ny - 2) as f64 * h;
    let ez = (spec.nz - 2) as f64 * h;
    let ux = (x - h) / ex;
    let uy = (y - h) / ey;
    let uz = (z - h) / ez;
    let bump = |t: f64| {
        if t <= 0.0 || t >= 1.0 {
            0.0
        } else {
            (std::f64::consts::PI * t).sin().powi(2)
        }
    };
    (bump(ux) * bump(uy) * bump(uz), ux, uy, uz)
}

fn named_vector(c: &CellComplex, name: &str, amplitude: f64, x: f64, y: f64, z: f64) -> Result<[f64; 3]> {
    let (w3, ux, uy, uz) = domain_window(c, x, y, z);
    let tau = 2.0 * std::f64::consts::PI;
    match name {
        "bump" => Ok([
            amplitude * w3,
            amplitude * w3 * (tau * uz).sin(),
            0.0,
        ]),
        "abc" => Ok([
            amplitude * w3 * ((tau * uz).sin() + (tau * uy).cos()),
            amplitude * w3 * ((tau * ux).sin() + (tau * uz).cos()),
            amplitude * w3 * ((tau * uy).sin() + (tau * ux).cos()),
        ]),
        other => Err(HelioxError::UnknownInitialField(other.to_string())),
    }
}

fn build_edge_potential(c: &Arc<CellComplex>, init: &InitialField) -> Result<Field> {
    let h = c.h();
    let mut a = c.zero_field(Degree::Edge);
    match init {
        InitialField::Zero => {}
        InitialField::Named { name, amplitude } => {
            for slot in 0..c.n_active(Degree::Edge) {
                let (axis, i, j, k) = c.edge_coords(c.full_id(Degree::Edge, slot));
                let u = axis.unit();
                let x = (i as f64 + 0.5 * u[0] as f64) * h;
                let y = (j as f64 + 0.5 * u[1] as f64) * h;
                let z = (k as f64 + 0.5 * u[2] as f64) * h;
                let v = named_vector(c, name, *amplitude, x, y, z)?;
                a.values_mut()[slot] = v[axis.index()] * h;
            }
        }
        InitialField::Random { seed, amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for slot in 0..c.n_active(Degree::Edge) {
                let r: f64 = rng.gen_range(-1.0..1.0);
                if !c.is_boundary_slot(Degree::Edge, slot) {
                    a.values_mut()[slot] = amplitude * r * h;
                }
            }
            // Smoothing keeps desk-scale runs resolved; applied to the
            // potential so the curl stays exactly divergence-free.
            for _ in 0..3 {
                smooth_edge_field(c, &mut a);
            }
        }
    }
    for slot in 0..c.n_active(Degree::Edge) {
        if c.is_boundary_slot(Degree::Edge, slot) {
            a.values_mut()[slot] = 0.0;
        }
    }
    Ok(a)
}

fn smooth_edge_field(c: &Arc<CellComplex>, a: &mut Field) {
    let old = a.clone();
    for slot in 0..c.n_active(Degree::Edge) {
        if c.is_boundary_slot(Degree::Edge, slot) {
            continue;
        }
        let (axis, i, j, k) = c.edge_coords(c.full_id(Degree::Edge, slot));
        let mut acc = 2.0 * old.values()[slot];
        let mut count = 2.0;
        for step in [[1i64, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]] {
            let q = [i as i64 + step[0], j as i64 + step[1], k as i64 + step[2]];
            if q.iter().any(|&v| v < 0) {
                continue;
            }
            let d = c.family_dims(Degree::Edge, axis);
            if !d.contains(q[0], q[1], q[2]) {
                continue;
            }
            let nb = c.family_offset(Degree::Edge, axis) + d.flat(q[0] as usize, q[1] as usize, q[2] as usize);
            if let Some(ns) = c.slot(Degree::Edge, nb) {
                acc += old.values()[ns];
                count += 1.0;
            }
        }
        a.values_mut()[slot] = acc / count;
    }
}

fn build_face_velocity(c: &Arc<CellComplex>, init: &InitialField) -> Result<Field> {
    let h = c.h();
    let mut u = c.zero_field(Degree::Face);
    let mut nonzero = false;
    match init {
        InitialField::Zero => {}
        InitialField::Named { name, amplitude } => {
            nonzero = true;
            for slot in 0..c.n_active(Degree::Face) {
                if c.is_boundary_slot(Degree::Face, slot) {
                    continue;
                }
                let (axis, i, j, k) = c.face_coords(c.full_id(Degree::Face, slot));
                let un = axis.unit();
                let x = (i as f64 + 0.5 * (1 - un[0]) as f64) * h;
                let y = (j as f64 + 0.5 * (1 - un[1]) as f64) * h;
                let z = (k as f64 + 0.5 * (1 - un[2]) as f64) * h;
                let v = named_vector(c, name, *amplitude, x, y, z)?;
                u.values_mut()[slot] = v[axis.index()] * h * h;
            }
        }
        InitialField::Random { seed, amplitude } => {
            nonzero = true;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
            for slot in 0..c.n_active(Degree::Face) {
                let r: f64 = rng.gen_range(-1.0..1.0);
                if !c.is_boundary_slot(Degree::Face, slot) {
                    u.values_mut()[slot] = amplitude * r * h * h;
                }
            }
        }
    }
    if nonzero {
        project_divergence_free(c, &mut u, 1e-10)?;
    }
    Ok(u)
}

/// Pressure projection: subtract a cell-potential gradient across interior
/// faces so the cell divergence drops to the solver tolerance.
fn project_divergence_free(c: &Arc<CellComplex>, u: &mut Field, tol: f64) -> Result<()> {
    let op = CellPoisson::new(c);
    let div = c.d(u)?;
    let rhs: Vec<f64> = div.values().iter().map(|v| -v).collect();
    let (p, _rep) = conjugate_gradient(&op, &rhs, tol, CG_MAX_ITERS)?;
    for slot in 0..c.n_active(Degree::Face) {
        if c.is_boundary_slot(Degree::Face, slot) {
            continue;
        }
        let (axis, i, j, k) = c.face_coords(c.full_id(Degree::Face, slot));
        let un = axis.unit();
        let hi = c.slot(Degree::Cell, c.cell_id(i, j, k)).expect("interior face");
        let lo = c
            .slot(
                Degree::Cell,
                c.cell_id(
                    (i as i64 - un[0]) as usize,
                    (j as i64 - un[1]) as usize,
                    (k as i64 - un[2]) as usize,
                ),
            )
            .expect("interior face");
        u.values_mut()[slot] -= p[hi] - p[lo];
    }
    Ok(())
}

impl Simulation {
    pub fn new(
        c: &Arc<CellComplex>,
        atlas: TopologyAtlas,
        basis: HarmonicBasis,
        config: SimConfig,
        init: &InitialCondition,
    ) -> Result<Simulation> {
        let mut config = config;
        if config.dt < 0.0 || !config.dt.is_finite() {
            return Err(HelioxError::InvalidParameter("dt must be nonnegative and finite".into()));
        }
        if config.eta < 0.0 || config.nu < 0.0 {
            return Err(HelioxError::InvalidParameter("eta and nu must be nonnegative".into()));
        }
        let (b, u, a) = initial_field(c, &atlas, &basis, init)?;
        let h = c.h();
        let umax = u.norm_inf() / (h * h);
        let bound = config.cfl_bound(h, umax);
        if config.dt == 0.0 {
            // Auto: run at the stability guard itself.
            config.dt = bound;
        } else if config.dt > bound * (1.0 + 1e-12) {
            return Err(HelioxError::CflViolation { dt: config.dt, bound });
        }
        let mut a_harm0 = c.zero_field(Degree::Edge);
        for (ci, hf) in init.harmonic_coefficients.iter().zip(&basis.flux_fields) {
            if *ci != 0.0 {
                let ah = harmonic_potential(c, hf, &basis)?;
                a_harm0.axpy(*ci, &ah)?;
            }
        }
        let poisson = CellPoisson::new(c);
        let mut sim = Simulation {
            complex: Arc::clone(c),
            atlas,
            basis,
            config,
            t: 0.0,
            step_index: 0,
            b,
            u,
            a,
            a_harm0,
            history: Vec::new(),
            upsilon0: 0.0,
            rate_hel_prev: 0.0,
            rate_ohm_prev: 0.0,
            rate_visc_prev: 0.0,
            diss_hel: 0.0,
            diss_ohm: 0.0,
            diss_visc: 0.0,
            poisson,
            projection_tol: 1e-10,
        };
        let (rh, ro, rv) = sim.rates()?;
        sim.rate_hel_prev = rh;
        sim.rate_ohm_prev = ro;
        sim.rate_visc_prev = rv;
        let row0 = sim.diagnostics_row()?;
        sim.upsilon0 = row0.upsilon;
        let mut row0 = row0;
        row0.balance_residual = 0.0;
        sim.history.push(row0);
        Ok(sim)
    }

    /// Curl of B as an interior-edge cochain, zero on boundary edges — the
    /// same restriction the electromotive force carries, which is what the
    /// discrete dissipation identity pairs against.
    fn interior_curl(&self) -> Result<Field> {
        let c = &self.complex;
        let mut curl = c.curl_to_edges(&self.b)?;
        for slot in 0..c.n_active(Degree::Edge) {
            if c.is_boundary_slot(Degree::Edge, slot) {
                curl.values_mut()[slot] = 0.0;
            }
        }
        Ok(curl)
    }

    fn rates(&self) -> Result<(f64, f64, f64)> {
        let c = &self.complex;
        let curl = self.interior_curl()?;
        let rate_hel = 2.0 * self.config.eta * c.pair_12(&curl, &self.b)?;
        let rate_ohm = self.config.eta * c.pair_11(&curl, &curl)?;
        let rate_visc = if self.config.mode == SimMode::Coupled && self.config.nu > 0.0 {
            let lap = velocity_laplacian(c, &self.u);
            -self.config.nu * c.pair_22(&self.u, &lap)?
        } else {
            0.0
        };
        Ok((rate_hel, rate_ohm, rate_visc))
    }

    /// Electromotive force on edges: -u×B + η curl B, zero on every
    /// boundary edge.
    fn emf(&self) -> Result<Field> {
        let c = &self.complex;
        let h = c.h();
        let inv_h2 = 1.0 / (h * h);
        let eta = self.config.eta;
        let curl = c.curl_to_edges(&self.b)?;
        let mut e = c.zero_field(Degree::Edge);
        let kinematic_zero_u = self.u.norm_inf() == 0.0;
        for slot in 0..c.n_active(Degree::Edge) {
            if c.is_boundary_slot(Degree::Edge, slot) {
                continue;
            }
            let mut circ = eta * curl.values()[slot];
            if !kinematic_zero_u {
                let (axis, i, j, k) = c.edge_coords(c.full_id(Degree::Edge, slot));
                let (t1, t2) = axis.others();
                // Field values of the t1/t2 components at the edge, from the
                // two faces of each orientation containing the edge.
                let avg2 = |f: &Field, normal: Axis, shift: Axis| -> f64 {
                    let us = shift.unit();
                    let p = [i as i64, j as i64, k as i64];
                    let mut acc = 0.0;
                    for q in [p, [p[0] - us[0], p[1] - us[1], p[2] - us[2]]] {
                        if let Some(fid) = c.face_lookup(normal, q) {
                            if let Some(fslot) = c.slot(Degree::Face, fid) {
                                acc += f.values()[fslot];
                            }
                        }
                    }
                    0.5 * acc * inv_h2
                };
                // (u×B)·ê_axis = u_t1 B_t2 − u_t2 B_t1 for the right-handed
                // (axis, t1, t2) frame.
                let u1 = avg2(&self.u, t1, t2);
                let u2 = avg2(&self.u, t2, t1);
                let b1 = avg2(&self.b, t1, t2);
                let b2 = avg2(&self.b, t2, t1);
                circ += -(u1 * b2 - u2 * b1) * h;
            }
            e.values_mut()[slot] = circ;
        }
        Ok(e)
    }

    /// One explicit step: momentum update with projection in coupled mode,
    /// then the constrained-transport induction update for B and A.
    pub fn step(&mut self) -> Result<()> {
        let dt_full = self.config.dt;
        let dt = dt_full.min(self.config.t_end - self.t).max(0.0);
        if dt == 0.0 {
            return Ok(());
        }
        let c = Arc::clone(&self.complex);
        if self.config.mode == SimMode::Coupled {
            let rhs = momentum_rhs(&c, &self.u, &self.b, self.config.nu)?;
            self.u.axpy(dt, &rhs)?;
            project_divergence_free(&c, &mut self.u, self.projection_tol)?;
        }
        let e = self.emf()?;
        let de = c.d(&e)?;
        self.b.axpy(-dt, &de)?;
        self.a.axpy(-dt, &e)?;
        self.t += dt;
        self.step_index += 1;
        if !self.b.is_finite() || !self.u.is_finite() {
            return Err(HelioxError::NanDetected { step: self.step_index });
        }
        // Trapezoidal dissipation accumulation at every step.
        let (rh, ro, rv) = self.rates()?;
        self.diss_hel += 0.5 * dt * (self.rate_hel_prev + rh);
        self.diss_ohm += 0.5 * dt * (self.rate_ohm_prev + ro);
        self.diss_visc += 0.5 * dt * (self.rate_visc_prev + rv);
        self.rate_hel_prev = rh;
        self.rate_ohm_prev = ro;
        self.rate_visc_prev = rv;
        Ok(())
    }

    pub fn diagnostics_row(&self) -> Result<DiagnosticsRow> {
        let c = &self.complex;
        let rep = upsilon_report(c, &self.b, &self.a, &self.basis, &self.atlas, Some(&self.a_harm0))?;
        let ek = 0.5 * c.pair_22(&self.u, &self.u)?;
        let em = 0.5 * c.pair_22(&self.b, &self.b)?;
        let d = self.diss_hel;
        let denom = self.upsilon0.abs().max(d.abs()).max(1e-30);
        let residual = ((rep.upsilon - self.upsilon0) + d) / denom;
        Ok(DiagnosticsRow {
            step: self.step_index,
            t: self.t,
            h_classical: rep.h_classical,
            upsilon: rep.upsilon,
            z: rep.z,
            energy_kinetic: ek,
            energy_magnetic: em,
            energy_total: ek + em,
            diss_ohmic_cum: self.diss_ohm,
            diss_viscous_cum: self.diss_visc,
            helicity_diss_cum: d,
            balance_residual: residual,
            cut_fluxes: rep.cut_fluxes.clone(),
            circulations: rep.circulations.clone(),
            harmonic_coefficients: cut_fluxes(c, &self.b, &self.atlas)?,
        })
    }

    /// Step to t_end, recording diagnostics at the configured cadence.
    pub fn run(&mut self) -> Result<()> {
        let cadence = self.config.cadence.max(1);
        while self.t < self.config.t_end * (1.0 - 1e-12) {
            self.step()?;
            let at_end = self.t >= self.config.t_end * (1.0 - 1e-12);
            if self.step_index % cadence == 0 || at_end {
                let row = self.diagnostics_row()?;
                self.history.push(row);
            }
        }
        Ok(())
    }

    pub fn upsilon_initial(&self) -> f64 {
        self.upsilon0
    }
}

/// Advection + Lorentz + viscous right-hand side for the MAC momentum
/// equation, as raw face fluxes per unit time. Boundary faces stay zero.
fn momentum_rhs(c: &Arc<CellComplex>, u: &Field, b: &Field, nu: f64) -> Result<Field> {
    let h = c.h();
    let inv_h2 = 1.0 / (h * h);
    let curl = c.curl_to_edges(b)?;
    let inv_h3 = 1.0 / (h * h * h);
    let mut out = c.zero_field(Degree::Face);
    let lap = velocity_laplacian(c, u);

    let uval = |slot: usize| u.values()[slot] * inv_h2;
    for slot in 0..c.n_active(Degree::Face) {
        if c.is_boundary_slot(Degree::Face, slot) {
            continue;
        }
        let (axis, i, j, k) = c.face_coords(c.full_id(Degree::Face, slot));
        let un = axis.unit();
        let p = [i as i64, j as i64, k as i64];
        let center = uval(slot);

        // Conservative central advection: -d/dx_a (u_a u_n) over the two
        // cells sharing the face, minus the transverse flux differences.
        let face_at = |normal: Axis, q: [i64; 3]| -> Option<usize> {
            c.face_lookup(normal, q).and_then(|fid| c.slot(Degree::Face, fid))
        };
        // Along the face normal.
        let u_plus = face_at(axis, [p[0] + un[0], p[1] + un[1], p[2] + un[2]]).map(uval).unwrap_or(0.0);
        let u_minus = face_at(axis, [p[0] - un[0], p[1] - un[1], p[2] - un[2]]).map(uval).unwrap_or(0.0);
        let f_e = 0.25 * (center + u_plus) * (center + u_plus);
        let f_w = 0.25 * (center + u_minus) * (center + u_minus);
        let mut adv = (f_e - f_w) / h;
        // Transverse directions.
        for t in [axis.others().0, axis.others().1] {
            let ut = t.unit();
            // Transport velocity at the two transverse cell corners: the
            // average of the two t-faces adjacent to this face's cells.
            let vt_hi = {
                let a1 = face_at(t, [p[0] + ut[0], p[1] + ut[1], p[2] + ut[2]]).map(uval).unwrap_or(0.0);
                let a2 = face_at(t, [p[0] + ut[0] - un[0], p[1] + ut[1] - un[1], p[2] + ut[2] - un[2]])
                    .map(uval)
                    .unwrap_or(0.0);
                0.5 * (a1 + a2)
            };
            let vt_lo = {
                let a1 = face_at(t, p).map(uval).unwrap_or(0.0);
                let a2 = face_at(t, [p[0] - un[0], p[1] - un[1], p[2] - un[2]]).map(uval).unwrap_or(0.0);
                0.5 * (a1 + a2)
            };
            let un_hi = face_at(axis, [p[0] + ut[0], p[1] + ut[1], p[2] + ut[2]]).map(uval).unwrap_or(0.0);
            let un_lo = face_at(axis, [p[0] - ut[0], p[1] - ut[1], p[2] - ut[2]]).map(uval).unwrap_or(0.0);
            let f_hi = vt_hi * 0.5 * (center + un_hi);
            let f_lo = vt_lo * 0.5 * (center + un_lo);
            adv += (f_hi - f_lo) / h;
        }

        // Lorentz force (curl B) × B at the face: curl components from the
        // face's own edges, B components from the four neighbour faces.
        let (t1, t2) = axis.others();
        let edge_avg = |eaxis: Axis, shift: Axis| -> f64 {
            let us = shift.unit();
            let e1 = c
                .slot(Degree::Edge, c.edge_id(eaxis, i, j, k))
                .expect("face edge active");
            let q = [
                (p[0] + us[0]) as usize,
                (p[1] + us[1]) as usize,
                (p[2] + us[2]) as usize,
            ];
            let e2 = c.slot(Degree::Edge, c.edge_id(eaxis, q[0], q[1], q[2])).expect("face edge active");
            // Raw incidence-transpose curl over h³ gives the field value.
            0.5 * (curl.values()[e1] + curl.values()[e2]) * h * inv_h3 * h * h
        };
        let j1 = edge_avg(t1, t2);
        let j2 = edge_avg(t2, t1);
        let face_avg4 = |normal: Axis, tdir: Axis| -> f64 {
            let utd = tdir.unit();
            let mut acc = 0.0;
            for qa in [p, [p[0] - un[0], p[1] - un[1], p[2] - un[2]]] {
                for qb in [qa, [qa[0] + utd[0], qa[1] + utd[1], qa[2] + utd[2]]] {
                    if let Some(fs) = face_at(normal, qb) {
                        acc += b.values()[fs];
                    }
                }
            }
            0.25 * acc * inv_h2
        };
        let b1 = face_avg4(t1, t1);
        let b2 = face_avg4(t2, t2);
        let lorentz = j1 * b2 - j2 * b1;

        let visc = nu * lap.values()[slot] * inv_h2;
        out.values_mut()[slot] = (-adv + lorentz + visc) * h * h;
    }
    Ok(out)
}

/// Component-wise 7-point Laplacian of the face velocity with no-slip
/// mirror ghosts at tangential walls, in field units per h².
fn velocity_laplacian(c: &Arc<CellComplex>, u: &Field) -> Field {
    let h = c.h();
    let inv_h2 = 1.0 / (h * h);
    let mut out = c.zero_field(Degree::Face);
    for slot in 0..c.n_active(Degree::Face) {
        if c.is_boundary_slot(Degree::Face, slot) {
            continue;
        }
        let (axis, i, j, k) = c.face_coords(c.full_id(Degree::Face, slot));
        let p = [i as i64, j as i64, k as i64];
        let center = u.values()[slot] * inv_h2;
        let mut acc = 0.0;
        for dir in [Axis::X, Axis::Y, Axis::Z] {
            let ud = dir.unit();
            for s in [1i64, -1] {
                let q = [p[0] + s * ud[0], p[1] + s * ud[1], p[2] + s * ud[2]];
                let nb = c
                    .face_lookup(axis, q)
                    .and_then(|fid| c.slot(Degree::Face, fid))
                    .map(|ns| u.values()[ns] * inv_h2)
                    // No-slip mirror across a tangential wall.
                    .unwrap_or(-center);
                acc += nb - center;
            }
        }
        // Raw flux units: multiply by h² again; caller divides as needed.
        out.values_mut()[slot] = acc / (h * h) * (h * h);
    }
    out
}

/// Balance residual series r(t) = [Υ(t) − Υ(0)] + D(t), normalized.
pub fn helicity_balance(history: &[DiagnosticsRow]) -> Vec<(f64, f64)> {
    history.iter().map(|row| (row.t, row.balance_residual)).collect()
}

pub struct BoundCheck {
    pub holds: bool,
    pub worst_margin: f64,
}

/// The dissipation bound |Υ(t) − Υ(0)| ≤ 3√(tη)(‖u₀‖² + ‖B₀‖²) at every
/// recorded time. With η = 0 the check degenerates to |ΔΥ| ≤ solver slack.
pub fn dissipation_bound_check(history: &[DiagnosticsRow], eta: f64) -> BoundCheck {
    if history.is_empty() {
        return BoundCheck {
            holds: false,
            worst_margin: f64::NEG_INFINITY,
        };
    }
    let u0sq = 2.0 * history[0].energy_kinetic;
    let b0sq = 2.0 * history[0].energy_magnetic;
    let upsilon0 = history[0].upsilon;
    let mut worst = f64::INFINITY;
    let mut holds = true;
    for row in history.iter().skip(1) {
        let delta = (row.upsilon - upsilon0).abs();
        let bound = if eta > 0.0 {
            3.0 * (row.t * eta).sqrt() * (u0sq + b0sq)
        } else {
            1e-10 * upsilon0.abs().max(1.0)
        };
        let margin = bound - delta;
        worst = worst.min(margin);
        if margin <= 0.0 {
            holds = false;
        }
    }
    BoundCheck {
        holds,
        worst_margin: worst,
    }
}

pub struct IdealLimitRow {
    pub eta: f64,
    pub max_abs_delta_upsilon: f64,
}

pub struct IdealLimitTable {
    pub rows: Vec<IdealLimitRow>,
    /// Least-squares slope of ln|ΔΥ| against ln η over the positive-η rows.
    pub slope: f64,
}

/// Run the same initial data across a resistivity list and tabulate the
/// worst helicity drift per η. Rows come back sorted by decreasing η.
pub fn ideal_limit_study(
    c: &Arc<CellComplex>,
    atlas: &TopologyAtlas,
    basis_builder: impl Fn() -> Result<HarmonicBasis>,
    base: &SimConfig,
    init: &InitialCondition,
    etas: &[f64],
) -> Result<IdealLimitTable> {
    if etas.len() < 3 {
        return Err(HelioxError::InvalidParameter("ideal-limit study needs at least 3 resistivities".into()));
    }
    let mut sorted: Vec<f64> = etas.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut rows = Vec::with_capacity(sorted.len());
    for &eta in &sorted {
        let mut cfg = base.clone();
        cfg.eta = eta;
        let basis = basis_builder()?;
        let mut sim = Simulation::new(c, atlas.clone(), basis, cfg, init)?;
        sim.run()?;
        let u0 = sim.upsilon_initial();
        let mut worst = 0.0f64;
        for row in &sim.history {
            worst = worst.max((row.upsilon - u0).abs());
        }
        rows.push(IdealLimitRow {
            eta,
            max_abs_delta_upsilon: worst,
        });
    }
    // ln-ln fit over eta > 0.
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.eta > 0.0 && r.max_abs_delta_upsilon > 0.0)
        .map(|r| (r.eta.ln(), r.max_abs_delta_upsilon.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::NAN
    };
    Ok(IdealLimitTable { rows, slope })
}
