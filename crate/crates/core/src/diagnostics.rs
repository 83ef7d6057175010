//! Scalar functionals of a state, their time integrals, and a discrete audit
//! of the virial identity
//!
//! ```text
//! d/dt M + (A_f - B_f) + (A_g - B_g) + L = 0,
//! M   = int [ int v f dv * int_{-inf}^x F dy + int v g dv * int_{-inf}^x G dy ] dx,
//! A_s = int (int v s dv)^2 dx,   B_s = int S * int v^2 s dv dx,
//! L   = -1/4 int E^2 (F + G) dx,
//! ```
//!
//! valid for the classical system with unit masses. All spatial integrals are
//! midpoint sums with the cell-centered field.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{compute_moments, species_moments, transport_flux, FieldState, MomentProfile};
use crate::integrator::{centered_field, density};
use crate::phase_space::{kinetic_energy, ModelKind, PhaseGrid, SpeciesState, SystemState};

/// Default radius of the local-charge window.
pub const LOCAL_RADIUS: f64 = 2.0;

/// Vacuum floor for the moment-interpolation ratios.
pub const ENERGY_FLOOR: f64 = 1e-12;

/// Constant of the velocity-splitting bound `F^4 <= c ||f||_inf^2 k`.
///
/// For a fixed sup-norm the variance kernel `k = int int (w - v)^2 f f` is
/// smallest when `f` is uniform on an interval, where `F^4 = 6 ||f||^2 k`.
pub const SPLIT_CONSTANT: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `int E^2 (F + G) dx`
    pub q: f64,
    /// `max |E|`
    pub e_inf: f64,
    /// `3 Q`, the pointwise bound on `|E|^3`.
    pub e_inf_cubed_bound: f64,
    /// `int (F^4 + G^4) dx`
    pub l4: f64,
    /// `(int (F^{7/4} + G^{7/4}) dx)^4`
    pub l74: f64,
    pub local_charge_f: f64,
    pub local_charge_g: f64,
    /// `int [F int v^2 f dv - (int v f dv)^2] dx`
    pub kdefect_f: f64,
    pub kdefect_g: f64,
    pub mass_f: f64,
    pub mass_g: f64,
    pub energy_total: f64,
    /// `dQ/dt = -2 int j E (F + G) dx + 2 int rho E int u (f + g) dv dx`
    pub dqdt: f64,
}

/// The four integrands accumulated in time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Integrands {
    pub q: f64,
    pub l4: f64,
    pub l74: f64,
    pub e_inf3: f64,
}

impl DiagnosticsRecord {
    pub fn integrands(&self) -> Integrands {
        Integrands {
            q: self.q,
            l4: self.l4,
            l74: self.l74,
            e_inf3: self.e_inf.powi(3),
        }
    }
}

fn q_functional(ec: &[f64], df: &[f64], dg: &[f64], dx: f64) -> f64 {
    ec.iter()
        .zip(df.iter().zip(dg))
        .map(|(e, (f, g))| e * e * (f + g))
        .sum::<f64>()
        * dx
}

fn lp_terms(df: &[f64], dg: &[f64], dx: f64) -> (f64, f64) {
    let l4 = df.iter().chain(dg).map(|x| x.powi(4)).sum::<f64>() * dx;
    let l74 = (df.iter().chain(dg).map(|x| x.powf(1.75)).sum::<f64>() * dx).powi(4);
    (l4, l74)
}

/// Integrands only, without the moment work of a full record.
pub fn integrands(state: &SystemState) -> Integrands {
    let grid = &state.grid;
    let df = density(&state.f, grid);
    let dg = density(&state.g, grid);
    let rho: Vec<f64> = df.iter().zip(&dg).map(|(a, b)| a - b).collect();
    let fs = FieldState::from_rho(rho, Vec::new(), grid);
    let ec = fs.e_centered();
    let (l4, l74) = lp_terms(&df, &dg, grid.dx());
    Integrands {
        q: q_functional(&ec, &df, &dg, grid.dx()),
        l4,
        l74,
        e_inf3: fs.e_sup().powi(3),
    }
}

/// Total energy: kinetic (model-dependent) plus `1/2 int E^2 dx`.
pub fn total_energy(state: &SystemState, e_centered: &[f64]) -> f64 {
    let grid = &state.grid;
    let mut kinetic = 0.0;
    for s in [&state.f, &state.g] {
        let ke: Vec<f64> = grid
            .v_nodes()
            .iter()
            .map(|&v| kinetic_energy(v, state.model, s.mass))
            .collect();
        for row in s.values.chunks_exact(grid.n_v) {
            kinetic += row.iter().zip(&ke).map(|(f, k)| f * k).sum::<f64>();
        }
    }
    kinetic * grid.cell_area() + 0.5 * e_centered.iter().map(|e| e * e).sum::<f64>() * grid.dx()
}

fn kdefect_from_moments(d: &[f64], first: &[f64], second: &[f64], dx: f64) -> f64 {
    d.iter()
        .zip(first.iter().zip(second))
        .map(|(f0, (f1, f2))| f0 * f2 - f1 * f1)
        .sum::<f64>()
        * dx
}

/// Moment-formula defect `int [F int v^2 s dv - (int v s dv)^2] dx`.
pub fn kdefect(s: &SpeciesState, grid: &PhaseGrid) -> f64 {
    let [d, first, second, _] = species_moments(s, grid);
    kdefect_from_moments(&d, &first, &second, grid.dx())
}

/// `1/2 int k dx` with `k = int int (w - v)^2 s(v) s(w) dv dw` summed
/// directly over all momentum pairs. Cost is `O(n_x n_v^2)`.
pub fn kdefect_bruteforce(s: &SpeciesState, grid: &PhaseGrid) -> f64 {
    let vs = grid.v_nodes();
    let dv = grid.dv();
    let mut total = 0.0;
    for row in s.values.chunks_exact(grid.n_v) {
        let mut cell = 0.0;
        for l in 0..row.len() {
            if row[l] == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for j in 0..l {
                let d = vs[l] - vs[j];
                inner += d * d * row[j];
            }
            cell += inner * row[l];
        }
        // sum over j < l equals half the full double sum
        total += cell;
    }
    total * dv * dv * grid.dx()
}

/// Full set of scalar diagnostics for one state.
pub fn record(state: &SystemState, radius: f64) -> Result<DiagnosticsRecord> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "local-charge radius must be positive, got {radius}"
        )));
    }
    let grid = &state.grid;
    let dx = grid.dx();
    let m = compute_moments(state);
    let fs = FieldState::from_moments(state, &m);
    let ec = fs.e_centered();
    let (df, dg) = (&m.density_f, &m.density_g);

    let q = q_functional(&ec, df, dg, dx);
    let (l4, l74) = lp_terms(df, dg, dx);

    let mut local_f = 0.0;
    let mut local_g = 0.0;
    for i in 0..grid.n_x {
        if grid.x(i).abs() < radius {
            local_f += df[i];
            local_g += dg[i];
        }
    }

    let flux_sum: Vec<f64> = transport_flux(&state.f, state)
        .iter()
        .zip(transport_flux(&state.g, state))
        .map(|(a, b)| a + b)
        .collect();
    let mut dqdt = 0.0;
    for i in 0..grid.n_x {
        dqdt += -2.0 * fs.j[i] * ec[i] * (df[i] + dg[i]) + 2.0 * fs.rho[i] * ec[i] * flux_sum[i];
    }

    Ok(DiagnosticsRecord {
        t: state.t,
        q,
        e_inf: fs.e_sup(),
        e_inf_cubed_bound: 3.0 * q,
        l4,
        l74,
        local_charge_f: local_f * dx,
        local_charge_g: local_g * dx,
        kdefect_f: kdefect_from_moments(df, &m.first_f, &m.second_f, dx),
        kdefect_g: kdefect_from_moments(dg, &m.first_g, &m.second_g, dx),
        mass_f: state.mass_f(),
        mass_g: state.mass_g(),
        energy_total: total_energy(state, &ec),
        dqdt: dqdt * dx,
    })
}

/// Largest value over cells and species of `F^4 / (||s||_inf^2 k)`, the
/// ratio controlled by [`SPLIT_CONSTANT`]. Cells with `F` below
/// `floor * max F` are skipped.
pub fn split_bound_ratio(state: &SystemState, floor: f64) -> f64 {
    let grid = &state.grid;
    let mut worst = 0.0f64;
    for s in [&state.f, &state.g] {
        let sup = s.max_value();
        if sup == 0.0 {
            continue;
        }
        let [d, first, second, _] = species_moments(s, grid);
        let d_max = d.iter().copied().fold(0.0, f64::max);
        for i in 0..grid.n_x {
            if d[i] <= floor * d_max {
                continue;
            }
            let k = 2.0 * (d[i] * second[i] - first[i] * first[i]);
            let ratio = if k > 0.0 {
                d[i].powi(4) / (sup * sup * k)
            } else {
                f64::INFINITY
            };
            worst = worst.max(ratio);
        }
    }
    worst
}

/// Maxima of `int |v| (f + g) dv / e^{2/3}` and `F / e^{1/3}`, `G / e^{1/3}`
/// over non-vacuum cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InterpolationReport {
    /// Number of cells with `e` above the floor.
    pub cells: usize,
    pub speed_ratio: Option<f64>,
    pub density_ratio_f: Option<f64>,
    pub density_ratio_g: Option<f64>,
}

pub fn moment_interpolation_check(m: &MomentProfile, floor: f64) -> InterpolationReport {
    let mut rep = InterpolationReport::default();
    let bump = |slot: &mut Option<f64>, x: f64| *slot = Some(slot.map_or(x, |y: f64| y.max(x)));
    for i in 0..m.energy.len() {
        let e = m.energy[i];
        if !(e > floor) {
            continue;
        }
        rep.cells += 1;
        let c1 = e.cbrt();
        bump(&mut rep.speed_ratio, m.abs_first[i] / (c1 * c1));
        bump(&mut rep.density_ratio_f, m.density_f[i] / c1);
        bump(&mut rep.density_ratio_g, m.density_g[i] / c1);
    }
    rep
}

/// Trapezoidal time integrals of the decaying functionals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeIntegrals {
    pub int_q: f64,
    pub int_l4: f64,
    pub int_l74: f64,
    pub int_einf3: f64,
    last: Option<Integrands>,
}

impl TimeIntegrals {
    /// Adds the interval ending at `cur`, `dt` after the previous sample.
    /// The first sample only seeds the trapezoid.
    pub fn add(&mut self, cur: Integrands, dt: f64) -> Result<()> {
        if let Some(prev) = self.last {
            if !(dt > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "dt must be positive, got {dt}"
                )));
            }
            let h = 0.5 * dt;
            self.int_q += h * (prev.q + cur.q);
            self.int_l4 += h * (prev.l4 + cur.l4);
            self.int_l74 += h * (prev.l74 + cur.l74);
            self.int_einf3 += h * (prev.e_inf3 + cur.e_inf3);
        }
        self.last = Some(cur);
        Ok(())
    }
}

pub fn accumulate(ti: &TimeIntegrals, rec: &DiagnosticsRecord, dt: f64) -> Result<TimeIntegrals> {
    let mut next = ti.clone();
    next.add(rec.integrands(), dt)?;
    Ok(next)
}

/// The terms of the virial identity at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VirialTerms {
    pub m: f64,
    pub a_f: f64,
    pub a_g: f64,
    pub b_f: f64,
    pub b_g: f64,
    pub l: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VirialLedger {
    pub t_mid: f64,
    pub m_prev: f64,
    pub m_next: f64,
    pub dm_dt: f64,
    /// `A`, `B`, `L` averaged over the two endpoint states.
    pub a_f: f64,
    pub a_g: f64,
    pub b_f: f64,
    pub b_g: f64,
    pub l: f64,
    pub residual: f64,
}

fn check_virial_model(state: &SystemState) -> Result<()> {
    if state.model != ModelKind::Classical {
        return Err(Error::UnsupportedModel(
            "the virial identity is audited for the classical system only".into(),
        ));
    }
    if state.f.mass != 1.0 || state.g.mass != 1.0 {
        return Err(Error::UnsupportedModel(
            "the virial identity is audited for unit species masses only".into(),
        ));
    }
    Ok(())
}

/// Running integral `int_{-inf}^{x_i} S dy` at cell centers.
fn cumulative_at_centers(d: &[f64], dx: f64) -> Vec<f64> {
    let mut acc = 0.0;
    d.iter()
        .map(|v| {
            let c = acc + 0.5 * v * dx;
            acc += v * dx;
            c
        })
        .collect()
}

pub fn virial_terms(state: &SystemState) -> Result<VirialTerms> {
    check_virial_model(state)?;
    let dx = state.grid.dx();
    let m = compute_moments(state);
    let ec = centered_field(state);
    let cf = cumulative_at_centers(&m.density_f, dx);
    let cg = cumulative_at_centers(&m.density_g, dx);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dx;
    Ok(VirialTerms {
        m: dot(&m.first_f, &cf) + dot(&m.first_g, &cg),
        a_f: dot(&m.first_f, &m.first_f),
        a_g: dot(&m.first_g, &m.first_g),
        b_f: dot(&m.density_f, &m.second_f),
        b_g: dot(&m.density_g, &m.second_g),
        l: -0.25 * q_functional(&ec, &m.density_f, &m.density_g, dx),
    })
}

/// `L` in its undifferentiated form `1/2 int rho ([int F]^2 - [int G]^2) dx`.
pub fn virial_l_direct(state: &SystemState) -> f64 {
    let grid = &state.grid;
    let dx = grid.dx();
    let df = density(&state.f, grid);
    let dg = density(&state.g, grid);
    let cf = cumulative_at_centers(&df, dx);
    let cg = cumulative_at_centers(&dg, dx);
    (0..grid.n_x)
        .map(|i| 0.5 * (df[i] - dg[i]) * (cf[i] * cf[i] - cg[i] * cg[i]))
        .sum::<f64>()
        * dx
}

/// Evaluates the identity across one step: `dM/dt` by differencing, the
/// remaining terms averaged over the endpoints.
pub fn audit_virial(prev: &SystemState, next: &SystemState, dt: f64) -> Result<VirialLedger> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let a = virial_terms(prev)?;
    let b = virial_terms(next)?;
    let avg = |x: f64, y: f64| 0.5 * (x + y);
    let dm_dt = (b.m - a.m) / dt;
    let (a_f, a_g) = (avg(a.a_f, b.a_f), avg(a.a_g, b.a_g));
    let (b_f, b_g) = (avg(a.b_f, b.b_f), avg(a.b_g, b.b_g));
    let l = avg(a.l, b.l);
    Ok(VirialLedger {
        t_mid: 0.5 * (prev.t + next.t),
        m_prev: a.m,
        m_next: b.m,
        dm_dt,
        a_f,
        a_g,
        b_f,
        b_g,
        l,
        residual: dm_dt + (a_f - b_f) + (a_g - b_g) + l,
    })
}
