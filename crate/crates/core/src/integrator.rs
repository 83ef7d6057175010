//! Strang-split semi-Lagrangian time stepping.
//!
//! Both sub-flows are shears of phase space: the x-flow moves every momentum
//! row by `u(v) dt`, the v-flow moves every position column by `+-E(x) dt`.
//! Each row/column is advanced by tracing the characteristic back and
//! interpolating. Values entering from outside the grid are zero.

use serde::{Deserialize, Serialize};

use crate::error::{Boundary, Error, Result};
use crate::field::{centered, compute_field};
use crate::phase_space::{species_mass, speed, ModelKind, PhaseGrid, SpeciesState, SystemState};

/// Default mass fraction tolerated in the two outermost cells of any side.
pub const SUPPORT_TOL: f64 = 1e-8;

/// Default fraction of the stability-style time scale used for `dt`.
pub const DEFAULT_CFL: f64 = 0.25;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    #[default]
    /// Two-point linear interpolation: positive and mass-conservative.
    Linear,
    /// Four-point Lagrange interpolation with negative values clipped to 0.
    /// With `renormalize`, each row is rescaled after clipping so that it
    /// keeps the mass of the unclipped interpolant.
    CubicClipped { renormalize: bool },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepParams {
    pub dt: f64,
    pub interpolation: Interpolation,
    pub support_tol: f64,
}

impl StepParams {
    pub fn new(dt: f64, interpolation: Interpolation) -> Result<Self> {
        let p = StepParams {
            dt,
            interpolation,
            support_tol: SUPPORT_TOL,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.support_tol > 0.0 && self.support_tol < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "support_tol must lie in (0, 1), got {}",
                self.support_tol
            )));
        }
        Ok(())
    }
}

/// Four-point interpolation stencil for one line with constant shift:
/// `out[i] = sum_m w[m] * src[i + offset + m - 1]`, zero outside the line.
#[derive(Clone, Copy, Debug)]
struct Stencil {
    offset: isize,
    w: [f64; 4],
}

impl Stencil {
    fn new(shift: f64, len: usize, interp: Interpolation) -> Self {
        // Departure point of node i is i - shift = (i + offset) + a, a in [0, 1).
        let back = -shift;
        let o = back.floor();
        if !(o.abs() <= (len + 4) as f64) {
            return Stencil {
                offset: 0,
                w: [0.0; 4],
            };
        }
        let a = back - o;
        let w = match interp {
            Interpolation::Linear => [0.0, 1.0 - a, a, 0.0],
            Interpolation::CubicClipped { .. } => [
                -a * (a - 1.0) * (a - 2.0) / 6.0,
                (a + 1.0) * (a - 1.0) * (a - 2.0) / 2.0,
                -(a + 1.0) * a * (a - 2.0) / 2.0,
                (a + 1.0) * a * (a - 1.0) / 6.0,
            ],
        };
        Stencil {
            offset: o as isize,
            w,
        }
    }

    fn reach(&self) -> usize {
        self.offset.unsigned_abs() + 2
    }
}

/// Clips negatives for the cubic scheme; returns the value to store and
/// accumulates the raw and clipped sums used by renormalization.
#[inline(always)]
fn clip(val: f64, interp: Interpolation, raw: &mut f64, kept: &mut f64) -> f64 {
    match interp {
        Interpolation::Linear => val,
        Interpolation::CubicClipped { .. } => {
            *raw += val;
            let v = val.max(0.0);
            *kept += v;
            v
        }
    }
}

#[inline]
fn renorm_scale(interp: Interpolation, raw: f64, kept: f64) -> Option<f64> {
    match interp {
        Interpolation::CubicClipped { renormalize: true } if kept > 0.0 && raw != kept => {
            Some(raw.max(0.0) / kept)
        }
        _ => None,
    }
}

/// Moves the content of `src` by `shift` cells (positive: towards higher
/// indices) and writes the result into `dst`.
pub fn shift_line(src: &[f64], dst: &mut [f64], shift: f64, interp: Interpolation) {
    debug_assert_eq!(src.len(), dst.len());
    if shift == 0.0 {
        dst.copy_from_slice(src);
        return;
    }
    let n = src.len();
    let st = Stencil::new(shift, n, interp);
    let pad = st.reach();
    let mut padded = vec![0.0; n + 2 * pad];
    padded[pad..pad + n].copy_from_slice(src);
    let (mut raw, mut kept) = (0.0, 0.0);
    let w = st.w;
    for (i, out) in dst.iter_mut().enumerate() {
        let b = (i as isize + st.offset - 1 + pad as isize) as usize;
        let p = &padded[b..b + 4];
        let val = w[0] * p[0] + w[1] * p[1] + w[2] * p[2] + w[3] * p[3];
        *out = clip(val, interp, &mut raw, &mut kept);
    }
    if let Some(scale) = renorm_scale(interp, raw, kept) {
        dst.iter_mut().for_each(|x| *x *= scale);
    }
}

/// Free transport in `x` for time `dt` at the species' transport speed.
pub fn advect_x(
    s: &SpeciesState,
    dt: f64,
    model: ModelKind,
    grid: &PhaseGrid,
    interp: Interpolation,
) -> SpeciesState {
    let (nx, nv) = (grid.n_x, grid.n_v);
    if dt == 0.0 {
        return s.clone();
    }
    let dx = grid.dx();
    let stencils: Vec<Stencil> = (0..nv)
        .map(|j| Stencil::new(speed(grid.v(j), model, s.mass) * dt / dx, nx, interp))
        .collect();
    let pad = stencils.iter().map(Stencil::reach).max().unwrap_or(2);
    let mut padded = vec![0.0; (nx + 2 * pad) * nv];
    padded[pad * nv..(pad + nx) * nv].copy_from_slice(&s.values);

    let mut values = vec![0.0; nx * nv];
    let mut raw = vec![0.0; nv];
    let mut kept = vec![0.0; nv];
    for (i, row) in values.chunks_exact_mut(nv).enumerate() {
        for (j, out) in row.iter_mut().enumerate() {
            let st = &stencils[j];
            let b = (i as isize + st.offset - 1 + pad as isize) as usize * nv + j;
            let val = st.w[0] * padded[b]
                + st.w[1] * padded[b + nv]
                + st.w[2] * padded[b + 2 * nv]
                + st.w[3] * padded[b + 3 * nv];
            *out = clip(val, interp, &mut raw[j], &mut kept[j]);
        }
    }
    let scales: Vec<f64> = (0..nv)
        .map(|j| renorm_scale(interp, raw[j], kept[j]).unwrap_or(1.0))
        .collect();
    if scales.iter().any(|&c| c != 1.0) {
        for row in values.chunks_exact_mut(nv) {
            row.iter_mut().zip(&scales).for_each(|(x, c)| *x *= c);
        }
    }
    SpeciesState {
        values,
        mass: s.mass,
        charge: s.charge,
    }
}

/// Acceleration in `v` by the cell-centered field `e`: each column moves by
/// `charge * e[i] * dt`.
pub fn advect_v(
    s: &SpeciesState,
    e: &[f64],
    dt: f64,
    grid: &PhaseGrid,
    interp: Interpolation,
) -> SpeciesState {
    let dv = grid.dv();
    let q = s.charge.sign();
    let mut values = vec![0.0; s.values.len()];
    for ((src, dst), &ei) in s
        .values
        .chunks_exact(grid.n_v)
        .zip(values.chunks_exact_mut(grid.n_v))
        .zip(e)
    {
        shift_line(src, dst, q * ei * dt / dv, interp);
    }
    SpeciesState {
        values,
        mass: s.mass,
        charge: s.charge,
    }
}

/// `F = int s dv` per position cell.
pub(crate) fn density(s: &SpeciesState, grid: &PhaseGrid) -> Vec<f64> {
    let dv = grid.dv();
    s.values
        .chunks_exact(grid.n_v)
        .map(|row| row.iter().sum::<f64>() * dv)
        .collect()
}

/// Cell-centered field of a state.
pub fn centered_field(state: &SystemState) -> Vec<f64> {
    let grid = &state.grid;
    let rho: Vec<f64> = density(&state.f, grid)
        .iter()
        .zip(density(&state.g, grid))
        .map(|(a, b)| a - b)
        .collect();
    let e = compute_field(&rho, grid);
    let e_left = -0.5 * rho.iter().sum::<f64>() * grid.dx();
    centered(&e, e_left)
}

/// One Strang step: half x-flow, field from the mid-step density, full
/// v-flow, half x-flow.
pub fn step(state: &SystemState, p: &StepParams) -> Result<SystemState> {
    let next = step_unchecked(state, p.dt, p.interpolation);
    if let Some((species, boundary)) = escape_boundary(&next, p.support_tol) {
        return Err(Error::SupportEscape {
            species,
            boundary,
            t: next.t,
        });
    }
    Ok(next)
}

/// Strang step without the support check. `dt` may be negative.
pub fn step_unchecked(state: &SystemState, dt: f64, interp: Interpolation) -> SystemState {
    let grid = &state.grid;
    let half = 0.5 * dt;
    let mut mid = SystemState {
        f: advect_x(&state.f, half, state.model, grid, interp),
        g: advect_x(&state.g, half, state.model, grid, interp),
        t: state.t + half,
        grid: *grid,
        model: state.model,
    };
    let e = centered_field(&mid);
    mid.f = advect_v(&mid.f, &e, dt, grid, interp);
    mid.g = advect_v(&mid.g, &e, dt, grid, interp);
    SystemState {
        f: advect_x(&mid.f, half, state.model, grid, interp),
        g: advect_x(&mid.g, half, state.model, grid, interp),
        t: state.t + dt,
        grid: *grid,
        model: state.model,
    }
}

/// First species/side whose two outermost cells hold more than `tol` of the
/// species mass.
pub fn escape_boundary(state: &SystemState, tol: f64) -> Option<(&'static str, Boundary)> {
    let grid = &state.grid;
    let (nx, nv) = (grid.n_x, grid.n_v);
    let sides = [
        (Boundary::XLeft, 0..nx.min(2), 0..nv),
        (Boundary::XRight, nx.saturating_sub(2)..nx, 0..nv),
        (Boundary::VLow, 0..nx, 0..nv.min(2)),
        (Boundary::VHigh, 0..nx, nv.saturating_sub(2)..nv),
    ];
    for (name, s) in state.species() {
        let limit = tol * species_mass(s, grid);
        for (boundary, is, js) in sides.iter().cloned() {
            let m: f64 = is
                .flat_map(|i| s.values[i * nv + js.start..i * nv + js.end].iter())
                .sum::<f64>()
                * grid.cell_area();
            if m > limit {
                return Some((name, boundary));
            }
        }
    }
    None
}

pub fn support_escape(state: &SystemState, tol: f64) -> bool {
    escape_boundary(state, tol).is_some()
}

/// `cfl * min(dx / u_max, dv / E_bound)` with `E_bound = (M_f + M_g) / 2`
/// the uniform field bound.
pub fn default_dt(state: &SystemState, cfl: f64) -> f64 {
    let grid = &state.grid;
    let u_max = [state.f.mass, state.g.mass]
        .iter()
        .map(|&m| speed(grid.v_max - 0.5 * grid.dv(), state.model, m).abs())
        .fold(0.0, f64::max);
    let e_bound = 0.5 * (state.mass_f() + state.mass_g());
    let mut limit = grid.dx() / u_max;
    if e_bound > 0.0 {
        limit = limit.min(grid.dv() / e_bound);
    }
    cfl * limit
}
