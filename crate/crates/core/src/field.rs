//! Velocity moments, charge and current densities, and the free-space
//! electric field `E(x) = (charge left of x - charge right of x) / 2`.
//!
//! Field convention: `FieldState::e[i]` is the field on the right edge of
//! position cell `i`, i.e. at `x_min + (i + 1) dx`, built from the running
//! midpoint sum in which cell `i` contributes fully. With `e_left` the field
//! at `x_min`, the discrete Gauss law `(e[i] - e[i - 1]) / dx = rho[i]` holds
//! exactly up to rounding. Cell-centered values, used by the dynamics and the
//! diagnostics, are the mean of the two edge values (the half-cell
//! correction); they satisfy `(ec[i+1] - ec[i]) / dx = (rho[i] + rho[i+1]) / 2`.

use crate::error::{Error, Result};
use crate::phase_space::{speed, PhaseGrid, SpeciesState, SystemState};

/// Per-position velocity moments of both species.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentProfile {
    /// `F = int f dv`
    pub density_f: Vec<f64>,
    /// `G = int g dv`
    pub density_g: Vec<f64>,
    /// `int v f dv`
    pub first_f: Vec<f64>,
    pub first_g: Vec<f64>,
    /// `int v^2 f dv`
    pub second_f: Vec<f64>,
    pub second_g: Vec<f64>,
    /// Kinetic-energy density `e = int v^2 (f + g) dv`.
    pub energy: Vec<f64>,
    /// `int |v| (f + g) dv`, needed by the moment-interpolation monitor.
    pub abs_first: Vec<f64>,
}

/// Zeroth, first and second `v`-moments of one species at every `x`.
pub(crate) fn species_moments(s: &SpeciesState, grid: &PhaseGrid) -> [Vec<f64>; 4] {
    let dv = grid.dv();
    let vs = grid.v_nodes();
    let mut m0 = vec![0.0; grid.n_x];
    let mut m1 = vec![0.0; grid.n_x];
    let mut m2 = vec![0.0; grid.n_x];
    let mut mabs = vec![0.0; grid.n_x];
    for (i, row) in s.values.chunks_exact(grid.n_v).enumerate() {
        let (mut a0, mut a1, mut a2, mut aa) = (0.0, 0.0, 0.0, 0.0);
        for (&val, &v) in row.iter().zip(&vs) {
            a0 += val;
            a1 += v * val;
            a2 += v * v * val;
            aa += v.abs() * val;
        }
        m0[i] = a0 * dv;
        m1[i] = a1 * dv;
        m2[i] = a2 * dv;
        mabs[i] = aa * dv;
    }
    [m0, m1, m2, mabs]
}

pub fn compute_moments(state: &SystemState) -> MomentProfile {
    let [df, ff, sf, af] = species_moments(&state.f, &state.grid);
    let [dg, fg, sg, ag] = species_moments(&state.g, &state.grid);
    let energy = sf.iter().zip(&sg).map(|(a, b)| a + b).collect();
    let abs_first = af.iter().zip(&ag).map(|(a, b)| a + b).collect();
    MomentProfile {
        density_f: df,
        density_g: dg,
        first_f: ff,
        first_g: fg,
        second_f: sf,
        second_g: sg,
        energy,
        abs_first,
    }
}

/// `rho = F - G`.
pub fn compute_rho(m: &MomentProfile) -> Result<Vec<f64>> {
    if m.density_f.len() != m.density_g.len() {
        return Err(Error::LengthMismatch(m.density_f.len(), m.density_g.len()));
    }
    Ok(m.density_f
        .iter()
        .zip(&m.density_g)
        .map(|(f, g)| f - g)
        .collect())
}

/// Right-edge field values `E[i] = (C[i] - (C_total - C[i])) / 2`, where
/// `C[i] = dx * sum_{k <= i} rho[k]`. Works for non-neutral `rho`.
pub fn compute_field(rho: &[f64], grid: &PhaseGrid) -> Vec<f64> {
    let dx = grid.dx();
    let total: f64 = rho.iter().sum::<f64>() * dx;
    let half = 0.5 * total;
    let mut acc = 0.0;
    rho.iter()
        .map(|r| {
            acc += r * dx;
            acc - half
        })
        .collect()
}

/// Current density `j = int u_f f dv - int u_g g dv`, with `u` the species
/// transport speed, so that `rho_t + j_x = 0` holds in both models.
pub fn compute_current(state: &SystemState) -> Vec<f64> {
    let jf = transport_flux(&state.f, state);
    let jg = transport_flux(&state.g, state);
    jf.iter().zip(&jg).map(|(a, b)| a - b).collect()
}

/// `int u(v) s dv` at every `x`.
pub(crate) fn transport_flux(s: &SpeciesState, state: &SystemState) -> Vec<f64> {
    let grid = &state.grid;
    let dv = grid.dv();
    let us: Vec<f64> = (0..grid.n_v)
        .map(|j| speed(grid.v(j), state.model, s.mass))
        .collect();
    s.values
        .chunks_exact(grid.n_v)
        .map(|row| row.iter().zip(&us).map(|(f, u)| f * u).sum::<f64>() * dv)
        .collect()
}

/// Charge density, edge and centered electric field, and current.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub rho: Vec<f64>,
    /// Field on the right edge of each cell.
    pub e: Vec<f64>,
    /// Field at `x_min`, equal to minus half the total charge.
    pub e_left: f64,
    pub j: Vec<f64>,
}

impl FieldState {
    pub fn from_state(state: &SystemState) -> Self {
        Self::from_moments(state, &compute_moments(state))
    }

    pub fn from_moments(state: &SystemState, m: &MomentProfile) -> Self {
        let rho = compute_rho(m).expect("moment profile built from a single grid");
        Self::from_rho(rho, compute_current(state), &state.grid)
    }

    pub fn from_rho(rho: Vec<f64>, j: Vec<f64>, grid: &PhaseGrid) -> Self {
        let e = compute_field(&rho, grid);
        let total: f64 = rho.iter().sum::<f64>() * grid.dx();
        FieldState {
            rho,
            e,
            e_left: -0.5 * total,
            j,
        }
    }

    /// Field at cell centers.
    pub fn e_centered(&self) -> Vec<f64> {
        centered(&self.e, self.e_left)
    }

    /// Maximum of `|E|` over the grid. The discrete field is piecewise
    /// linear between edges, so the edges carry the supremum.
    pub fn e_sup(&self) -> f64 {
        self.e.iter().fold(self.e_left.abs(), |m, e| m.max(e.abs()))
    }

    /// Largest mismatch of the discrete Gauss law, relative to `max |rho|`
    /// (absolute when `rho` vanishes).
    pub fn gauss_law_defect(&self, grid: &PhaseGrid) -> f64 {
        let dx = grid.dx();
        let scale = self.rho.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let mut prev = self.e_left;
        let mut worst = 0.0f64;
        for (e, r) in self.e.iter().zip(&self.rho) {
            worst = worst.max(((e - prev) / dx - r).abs());
            prev = *e;
        }
        worst / scale
    }
}

/// Averages edge values onto cell centers.
pub fn centered(edges: &[f64], left: f64) -> Vec<f64> {
    let mut prev = left;
    edges
        .iter()
        .map(|&e| {
            let c = 0.5 * (prev + e);
            prev = e;
            c
        })
        .collect()
}
