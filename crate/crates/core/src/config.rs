//! Run configuration: a TOML file with top-level run keys and `[grid]`,
//! `[f]`, `[g]` and optional `[oracle]` sections.
//!
//! ```toml
//! model = "classical"
//! t_final = 40.0
//! cfl = 0.25
//! interpolation = "cubic"
//!
//! [grid]
//! x_min = -40.0
//! x_max = 40.0
//! n_x = 256
//! v_max = 1.2
//! n_v = 256
//!
//! [f]
//! x_center = -0.5
//! x_half_width = 2.0
//! v_half_width = 0.5
//!
//! [g]
//! x_center = 0.5
//! x_half_width = 1.5
//! v_half_width = 0.6
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::diagnostics::LOCAL_RADIUS;
use crate::error::{Error, Result};
use crate::integrator::{Interpolation, DEFAULT_CFL, SUPPORT_TOL};
use crate::phase_space::{init_two_bump, BumpParams, ModelKind, PhaseGrid, SystemState};

/// Environment variable that replaces `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "VP1D_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationKind {
    Linear,
    #[serde(alias = "cubic-clipped")]
    Cubic,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub v_max: f64,
    pub n_v: usize,
}

impl GridConfig {
    pub fn to_grid(&self) -> PhaseGrid {
        PhaseGrid {
            x_min: self.x_min,
            x_max: self.x_max,
            n_x: self.n_x,
            v_max: self.v_max,
            n_v: self.n_v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Particles per species.
    pub particles: usize,
    pub t_final: f64,
    /// Particle time step; defaults to the grid step.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Number of equal intervals between comparison times.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Largest accepted relative difference.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_samples() -> usize {
    20
}

fn default_tolerance() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default = "one")]
    pub mass_g: f64,
    pub t_final: f64,
    /// Fixed time step. Mutually exclusive with `cfl`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub cfl: Option<f64>,
    #[serde(default = "default_interpolation")]
    pub interpolation: InterpolationKind,
    /// Cubic only: restore each line's unclipped mass after clipping.
    #[serde(default)]
    pub renormalize: bool,
    /// Write a CSV row every `cadence` steps (and at the final step).
    #[serde(default = "one_usize")]
    pub cadence: usize,
    #[serde(default = "default_radius")]
    pub local_radius: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Write a phase-space snapshot every this many steps; 0 disables.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "default_support_tol")]
    pub support_tol: f64,
    pub grid: GridConfig,
    pub f: BumpParams,
    pub g: BumpParams,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
}

fn default_model() -> ModelKind {
    ModelKind::Classical
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_interpolation() -> InterpolationKind {
    InterpolationKind::Linear
}
fn default_radius() -> f64 {
    LOCAL_RADIUS
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}
fn default_support_tol() -> f64 {
    SUPPORT_TOL
}

impl RunConfig {
    /// Parses and validates a configuration from TOML text.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(src).map_err(|e| Error::Config(e.to_string().trim_end().to_owned()))?;
        cfg.validate_with_source(Some(src))?;
        Ok(cfg)
    }

    /// Reads a configuration file and applies the output-directory
    /// environment override.
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&src)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))?;
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_source(None)
    }

    fn validate_with_source(&self, src: Option<&str>) -> Result<()> {
        let fail = |section: Option<&str>, key: &str, msg: String| -> Error {
            let line = src
                .and_then(|s| key_line(s, section, key))
                .map(|l| format!(" (line {l})"))
                .unwrap_or_default();
            let name = match section {
                Some(sec) => format!("{sec}.{key}"),
                None => key.to_owned(),
            };
            Error::Config(format!("field `{name}`{line}: {msg}"))
        };
        let positive = |v: f64| v > 0.0 && v.is_finite();

        if !positive(self.mass_g) {
            return Err(fail(
                None,
                "mass_g",
                format!("must be positive, got {}", self.mass_g),
            ));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(fail(
                None,
                "t_final",
                format!("must be >= 0, got {}", self.t_final),
            ));
        }
        match (self.dt, self.cfl) {
            (Some(_), Some(_)) => {
                return Err(fail(
                    None,
                    "cfl",
                    "set either `dt` or `cfl`, not both".into(),
                ));
            }
            (Some(dt), None) if !positive(dt) => {
                return Err(fail(None, "dt", format!("must be positive, got {dt}")));
            }
            (None, Some(c)) if !(c > 0.0 && c <= 10.0) => {
                return Err(fail(None, "cfl", format!("must lie in (0, 10], got {c}")));
            }
            _ => {}
        }
        if self.cadence == 0 {
            return Err(fail(None, "cadence", "must be at least 1".into()));
        }
        if !positive(self.local_radius) {
            return Err(fail(
                None,
                "local_radius",
                format!("must be positive, got {}", self.local_radius),
            ));
        }
        if !(self.support_tol > 0.0 && self.support_tol < 1.0) {
            return Err(fail(
                None,
                "support_tol",
                format!("must lie in (0, 1), got {}", self.support_tol),
            ));
        }

        let g = &self.grid;
        if !(g.x_min.is_finite() && g.x_max.is_finite() && g.x_max > g.x_min) {
            return Err(fail(Some("grid"), "x_max", "must exceed x_min".into()));
        }
        if g.n_x < 4 {
            return Err(fail(
                Some("grid"),
                "n_x",
                format!("must be at least 4, got {}", g.n_x),
            ));
        }
        if g.n_v < 4 {
            return Err(fail(
                Some("grid"),
                "n_v",
                format!("must be at least 4, got {}", g.n_v),
            ));
        }
        if !positive(g.v_max) {
            return Err(fail(
                Some("grid"),
                "v_max",
                format!("must be positive, got {}", g.v_max),
            ));
        }

        for (sec, b) in [("f", &self.f), ("g", &self.g)] {
            for (key, val) in [
                ("x_half_width", b.x_half_width),
                ("v_half_width", b.v_half_width),
                ("amplitude", b.amplitude),
            ] {
                if !positive(val) {
                    return Err(fail(Some(sec), key, format!("must be positive, got {val}")));
                }
            }
            if !(b.x_center.is_finite() && b.v_center.is_finite()) {
                return Err(fail(Some(sec), "x_center", "centers must be finite".into()));
            }
            if b.x_center - b.x_half_width <= g.x_min || b.x_center + b.x_half_width >= g.x_max {
                return Err(fail(
                    Some(sec),
                    "x_half_width",
                    "bump support must lie strictly inside [x_min, x_max]".into(),
                ));
            }
            if b.v_center.abs() + b.v_half_width >= g.v_max {
                return Err(fail(
                    Some(sec),
                    "v_half_width",
                    "bump support must lie strictly inside [-v_max, v_max]".into(),
                ));
            }
        }

        if let Some(o) = &self.oracle {
            if o.particles == 0 {
                return Err(fail(
                    Some("oracle"),
                    "particles",
                    "must be at least 1".into(),
                ));
            }
            if !positive(o.t_final) {
                return Err(fail(
                    Some("oracle"),
                    "t_final",
                    format!("must be positive, got {}", o.t_final),
                ));
            }
            if let Some(dt) = o.dt {
                if !positive(dt) {
                    return Err(fail(
                        Some("oracle"),
                        "dt",
                        format!("must be positive, got {dt}"),
                    ));
                }
            }
            if o.samples == 0 {
                return Err(fail(Some("oracle"), "samples", "must be at least 1".into()));
            }
            if !positive(o.tolerance) {
                return Err(fail(
                    Some("oracle"),
                    "tolerance",
                    format!("must be positive, got {}", o.tolerance),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> PhaseGrid {
        self.grid.to_grid()
    }

    pub fn interpolation(&self) -> Interpolation {
        match self.interpolation {
            InterpolationKind::Linear => Interpolation::Linear,
            InterpolationKind::Cubic => Interpolation::CubicClipped {
                renormalize: self.renormalize,
            },
        }
    }

    pub fn initial_state(&self) -> Result<SystemState> {
        init_two_bump(&self.grid(), &self.f, &self.g, self.model, self.mass_g)
    }

    /// Time step for a run from `state` to `t_final`: the configured `dt`
    /// or the CFL-based default, shrunk so that whole steps land on
    /// `t_final`. Returns `(dt, n_steps)`.
    pub fn time_step(&self, state: &SystemState) -> (f64, usize) {
        let raw = self.dt.unwrap_or_else(|| {
            crate::integrator::default_dt(state, self.cfl.unwrap_or(DEFAULT_CFL))
        });
        steps_for(self.t_final, raw)
    }
}

/// Whole number of steps of at most `dt_max` covering `[0, t]`.
pub fn steps_for(t: f64, dt_max: f64) -> (f64, usize) {
    if t <= 0.0 {
        return (dt_max, 0);
    }
    let n = (t / dt_max - 1e-9).ceil().max(1.0) as usize;
    (t / n as f64, n)
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

/// 1-based line on which `key` is assigned inside `section` (or at top
/// level when `section` is `None`).
fn key_line(src: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    let mut section_line = None;
    for (n, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.trim_end_matches(']').trim().to_owned();
            if section == Some(name.as_str()) {
                section_line = Some(n + 1);
            }
            current = Some(name);
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        if let Some(rest) = line.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some(n + 1);
            }
        }
    }
    section_line
}
