//! Discrete phase space: the cell-centered (x, v) grid, the two species
//! densities, and construction of neutral compactly supported initial data.
//!
//! Densities are stored x-major: `values[i * n_v + j]` is the density at
//! position node `i` and momentum node `j`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for the neutrality invariant.
pub const NEUTRALITY_TOL: f64 = 1e-10;

/// Uniform cell-centered grid on `[x_min, x_max] x [-v_max, v_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub v_max: f64,
    pub n_v: usize,
}

impl PhaseGrid {
    pub fn new(x_min: f64, x_max: f64, n_x: usize, v_max: f64, n_v: usize) -> Result<Self> {
        let grid = PhaseGrid {
            x_min,
            x_max,
            n_x,
            v_max,
            n_v,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min) {
            return Err(Error::InvalidParameter(format!(
                "x-range [{}, {}] is empty or non-finite",
                self.x_min, self.x_max
            )));
        }
        if !(self.v_max.is_finite() && self.v_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "v_max must be positive, got {}",
                self.v_max
            )));
        }
        if self.n_x == 0 || self.n_v == 0 {
            return Err(Error::InvalidParameter(
                "grid must have at least one cell in each direction".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_x as f64
    }

    #[inline]
    pub fn dv(&self) -> f64 {
        2.0 * self.v_max / self.n_v as f64
    }

    /// Area of one phase-space cell.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dv()
    }

    /// Center of position cell `i`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    /// Center of momentum cell `j`.
    #[inline]
    pub fn v(&self, j: usize) -> f64 {
        -self.v_max + (j as f64 + 0.5) * self.dv()
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x(i)).collect()
    }

    pub fn v_nodes(&self) -> Vec<f64> {
        (0..self.n_v).map(|j| self.v(j)).collect()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_x * self.n_v
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_v + j
    }
}

/// Which transport law the species follow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Classical,
    Relativistic,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Classical => "classical",
            ModelKind::Relativistic => "relativistic",
        }
    }
}

/// Sign of a species' unit charge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Charge {
    Positive,
    Negative,
}

impl Charge {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Charge::Positive => 1.0,
            Charge::Negative => -1.0,
        }
    }
}

/// Particle velocity as a function of momentum: `v / m` (classical) or
/// `v / sqrt(m^2 + v^2)` (relativistic).
pub fn transport_speed(v: f64, model: ModelKind, mass: f64) -> Result<f64> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "species mass must be positive, got {mass}"
        )));
    }
    Ok(speed(v, model, mass))
}

/// Unchecked `transport_speed` for inner loops; `mass` is validated upstream.
#[inline]
pub(crate) fn speed(v: f64, model: ModelKind, mass: f64) -> f64 {
    match model {
        ModelKind::Classical => v / mass,
        ModelKind::Relativistic => v / mass.hypot(v),
    }
}

/// Kinetic energy of one particle of momentum `v`.
#[inline]
pub(crate) fn kinetic_energy(v: f64, model: ModelKind, mass: f64) -> f64 {
    match model {
        ModelKind::Classical => 0.5 * v * v / mass,
        // sqrt(m^2 + v^2) - m, written to avoid cancellation for small v
        ModelKind::Relativistic => v * v / (mass.hypot(v) + mass),
    }
}

/// Phase-space density of one species.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeciesState {
    pub values: Vec<f64>,
    pub mass: f64,
    pub charge: Charge,
}

impl SpeciesState {
    pub fn zeros(grid: &PhaseGrid, mass: f64, charge: Charge) -> Self {
        SpeciesState {
            values: vec![0.0; grid.len()],
            mass,
            charge,
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Midpoint-rule total mass of a species.
pub fn species_mass(s: &SpeciesState, grid: &PhaseGrid) -> f64 {
    s.values.iter().sum::<f64>() * grid.cell_area()
}

/// The positive species `f`, the negative species `g`, and the clock.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub f: SpeciesState,
    pub g: SpeciesState,
    pub t: f64,
    pub grid: PhaseGrid,
    pub model: ModelKind,
}

impl SystemState {
    pub fn new(
        f: SpeciesState,
        g: SpeciesState,
        grid: PhaseGrid,
        model: ModelKind,
    ) -> Result<Self> {
        grid.validate()?;
        for (name, s) in [("f", &f), ("g", &g)] {
            if s.values.len() != grid.len() {
                return Err(Error::LengthMismatch(s.values.len(), grid.len()));
            }
            if !(s.mass > 0.0 && s.mass.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "species {name} mass must be positive, got {}",
                    s.mass
                )));
            }
            if s.values.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "species {name} density must be finite and non-negative"
                )));
            }
        }
        if f.charge != Charge::Positive || g.charge != Charge::Negative {
            return Err(Error::InvalidParameter(
                "f must carry positive charge and g negative charge".into(),
            ));
        }
        Ok(SystemState {
            f,
            g,
            t: 0.0,
            grid,
            model,
        })
    }

    pub fn species(&self) -> [(&'static str, &SpeciesState); 2] {
        [("f", &self.f), ("g", &self.g)]
    }

    pub fn mass_f(&self) -> f64 {
        species_mass(&self.f, &self.grid)
    }

    pub fn mass_g(&self) -> f64 {
        species_mass(&self.g, &self.grid)
    }

    /// `|M_f - M_g| / M_f`.
    pub fn neutrality_defect(&self) -> f64 {
        let mf = self.mass_f();
        (mf - self.mass_g()).abs() / mf
    }

    pub fn is_neutral(&self, tol: f64) -> bool {
        self.neutrality_defect() <= tol
    }
}

/// Squared-cosine bump in `x` times squared-cosine bump in `v`.
///
/// The profile is C^1 and vanishes identically outside
/// `|x - x_center| < x_half_width`, `|v - v_center| < v_half_width`.
/// Its exact phase-space integral is `amplitude * x_half_width * v_half_width`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpParams {
    pub x_center: f64,
    pub x_half_width: f64,
    #[serde(default)]
    pub v_center: f64,
    pub v_half_width: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_amplitude() -> f64 {
    1.0
}

impl BumpParams {
    pub fn eval(&self, x: f64, v: f64) -> f64 {
        self.amplitude
            * cos2_window(x - self.x_center, self.x_half_width)
            * cos2_window(v - self.v_center, self.v_half_width)
    }

    /// Exact integral over the plane.
    pub fn exact_mass(&self) -> f64 {
        self.amplitude * self.x_half_width * self.v_half_width
    }

    fn validate(&self, grid: &PhaseGrid, name: &str) -> Result<()> {
        let ok = self.x_half_width > 0.0
            && self.v_half_width > 0.0
            && self.amplitude > 0.0
            && [
                self.x_center,
                self.v_center,
                self.x_half_width,
                self.v_half_width,
                self.amplitude,
            ]
            .iter()
            .all(|p| p.is_finite());
        if !ok {
            return Err(Error::Config(format!(
                "species {name}: widths and amplitude must be positive and finite"
            )));
        }
        let inside = self.x_center - self.x_half_width > grid.x_min
            && self.x_center + self.x_half_width < grid.x_max
            && self.v_center - self.v_half_width > -grid.v_max
            && self.v_center + self.v_half_width < grid.v_max;
        if !inside {
            return Err(Error::Config(format!(
                "species {name}: bump support touches the grid boundary"
            )));
        }
        Ok(())
    }
}

#[inline]
fn cos2_window(y: f64, half_width: f64) -> f64 {
    if y.abs() >= half_width {
        0.0
    } else {
        let c = (0.5 * PI * y / half_width).cos();
        c * c
    }
}

/// Samples a bump on the grid nodes.
pub fn sample_bump(grid: &PhaseGrid, bump: &BumpParams) -> Vec<f64> {
    let mut values = vec![0.0; grid.len()];
    for i in 0..grid.n_x {
        let x = grid.x(i);
        let wx = bump.amplitude * cos2_window(x - bump.x_center, bump.x_half_width);
        if wx == 0.0 {
            continue;
        }
        let row = &mut values[i * grid.n_v..(i + 1) * grid.n_v];
        for (j, out) in row.iter_mut().enumerate() {
            *out = wx * cos2_window(grid.v(j) - bump.v_center, bump.v_half_width);
        }
    }
    values
}

/// Builds `f` and `g` from two bumps and rescales `g` so the total
/// charges match.
pub fn init_two_bump(
    grid: &PhaseGrid,
    f_bump: &BumpParams,
    g_bump: &BumpParams,
    model: ModelKind,
    mass_g: f64,
) -> Result<SystemState> {
    grid.validate()?;
    f_bump.validate(grid, "f")?;
    g_bump.validate(grid, "g")?;
    if !(mass_g > 0.0 && mass_g.is_finite()) {
        return Err(Error::Config(format!(
            "mass_g must be positive, got {mass_g}"
        )));
    }

    let f = SpeciesState {
        values: sample_bump(grid, f_bump),
        mass: 1.0,
        charge: Charge::Positive,
    };
    let mut g = SpeciesState {
        values: sample_bump(grid, g_bump),
        mass: mass_g,
        charge: Charge::Negative,
    };

    let mf = species_mass(&f, grid);
    let mg = species_mass(&g, grid);
    if mf <= 0.0 || mg <= 0.0 {
        return Err(Error::Config(
            "a bump falls between grid nodes; refine the grid or widen the bump".into(),
        ));
    }
    // Scale so that sum(g) reproduces sum(f) exactly as far as rounding allows.
    let sum_f: f64 = f.values.iter().sum();
    let sum_g: f64 = g.values.iter().sum();
    let scale = sum_f / sum_g;
    g.values.iter_mut().for_each(|x| *x *= scale);

    SystemState::new(f, g, *grid, model)
}
