//! Time loop, grid-versus-particle comparison and snapshot diagnosis.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::{steps_for, RunConfig};
use crate::diagnostics::{
    audit_virial, integrands, moment_interpolation_check, record, split_bound_ratio, Integrands,
    InterpolationReport, TimeIntegrals, ENERGY_FLOOR,
};
use crate::error::{Error, Result};
use crate::field::{compute_moments, FieldState};
use crate::integrator::{centered_field, density, escape_boundary, step, StepParams};
use crate::output::{snapshot_name, write_snapshot, TimeseriesRow, TIMESERIES_FILE};
use crate::phase_space::{PhaseGrid, SystemState};
use crate::pic::{binned_density, field_at_points, pic_advance, q_functional, sample};

/// Upper limit on the number of steps of one run.
pub const MAX_STEPS: usize = 100_000_000;

/// What an observer sees after every step (and once for the initial
/// state, with `prev == None`).
pub struct StepView<'a> {
    pub step: usize,
    pub dt: f64,
    pub prev: Option<&'a SystemState>,
    pub state: &'a SystemState,
    pub integrands: Integrands,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub rows: Vec<TimeseriesRow>,
    pub final_state: SystemState,
    pub dt: f64,
    pub n_steps: usize,
    pub integrals: TimeIntegrals,
}

struct RowSink {
    writer: Option<csv::Writer<fs::File>>,
    rows: Vec<TimeseriesRow>,
}

impl RowSink {
    fn push(&mut self, row: TimeseriesRow) -> Result<()> {
        if let Some(w) = self.writer.as_mut() {
            w.serialize(&row)?;
        }
        self.rows.push(row);
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if let Some(w) = self.writer.as_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

fn build_row(
    state: &SystemState,
    radius: f64,
    ti: &TimeIntegrals,
    dqdt_fd: f64,
    virial_residual: f64,
) -> Result<TimeseriesRow> {
    let r = record(state, radius)?;
    Ok(TimeseriesRow {
        t: r.t,
        q: r.q,
        e_inf: r.e_inf,
        e_inf3: r.e_inf.powi(3),
        three_q: r.e_inf_cubed_bound,
        l4: r.l4,
        l74: r.l74,
        local_charge_f: r.local_charge_f,
        local_charge_g: r.local_charge_g,
        kdefect_f: r.kdefect_f,
        kdefect_g: r.kdefect_g,
        mass_f: r.mass_f,
        mass_g: r.mass_g,
        energy_total: r.energy_total,
        dqdt_formula: r.dqdt,
        dqdt_fd,
        int_q: ti.int_q,
        int_l4: ti.int_l4,
        int_einf3: ti.int_einf3,
        virial_residual,
    })
}

fn virial_or_nan(prev: &SystemState, next: &SystemState, dt: f64) -> f64 {
    audit_virial(prev, next, dt)
        .map(|v| v.residual)
        .unwrap_or(f64::NAN)
}

fn check_finite(state: &SystemState, step: usize) -> Result<()> {
    for (name, s) in state.species() {
        if !s.is_finite() {
            return Err(Error::NonFinite {
                species: name,
                step,
                t: state.t,
            });
        }
    }
    Ok(())
}

/// Runs the configured simulation from its initial condition.
///
/// With `output` set, `timeseries.csv` and any snapshots are written
/// there; rows are flushed even when the run aborts. `observer` is called
/// for the initial state and after every step.
pub fn run(
    cfg: &RunConfig,
    output: Option<&Path>,
    observer: &mut dyn FnMut(&StepView) -> Result<()>,
) -> Result<RunSummary> {
    cfg.validate()?;
    let state = cfg.initial_state()?;
    run_from(cfg, state, output, observer)
}

/// As [`run`], from a given initial state on the configured grid.
pub fn run_from(
    cfg: &RunConfig,
    initial: SystemState,
    output: Option<&Path>,
    observer: &mut dyn FnMut(&StepView) -> Result<()>,
) -> Result<RunSummary> {
    let writer = match output {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(csv::Writer::from_path(dir.join(TIMESERIES_FILE))?)
        }
        None => None,
    };
    let mut sink = RowSink {
        writer,
        rows: Vec::new(),
    };
    let result = time_loop(cfg, initial, output, &mut sink, observer);
    sink.flush()?;
    let (final_state, dt, n_steps, integrals) = result?;
    Ok(RunSummary {
        rows: sink.rows,
        final_state,
        dt,
        n_steps,
        integrals,
    })
}

fn time_loop(
    cfg: &RunConfig,
    initial: SystemState,
    output: Option<&Path>,
    sink: &mut RowSink,
    observer: &mut dyn FnMut(&StepView) -> Result<()>,
) -> Result<(SystemState, f64, usize, TimeIntegrals)> {
    check_finite(&initial, 0)?;
    let (dt, n_steps) = cfg.time_step(&initial);
    if n_steps > MAX_STEPS {
        return Err(Error::InvalidParameter(format!(
            "{n_steps} steps of dt = {dt:e} needed; refusing more than {MAX_STEPS}"
        )));
    }
    let params = StepParams {
        dt,
        interpolation: cfg.interpolation(),
        support_tol: cfg.support_tol,
    };
    params.validate()?;
    let radius = cfg.local_radius;
    let snapshot = |state: &SystemState, k: usize| -> Result<()> {
        match output {
            Some(dir) if cfg.snapshot_every > 0 && k.is_multiple_of(cfg.snapshot_every) => {
                write_snapshot(&dir.join(snapshot_name(k)), state)
            }
            _ => Ok(()),
        }
    };

    let mut ti = TimeIntegrals::default();
    let mut cur_ig = integrands(&initial);
    ti.add(cur_ig, dt)?;
    observer(&StepView {
        step: 0,
        dt,
        prev: None,
        state: &initial,
        integrands: cur_ig,
    })?;
    snapshot(&initial, 0)?;
    if n_steps == 0 {
        sink.push(build_row(&initial, radius, &ti, f64::NAN, f64::NAN)?)?;
        return Ok((initial, dt, 0, ti));
    }

    // Row 0 is written once step 1 exists: its differences look forward.
    let mut pending_first = Some(ti.clone());
    let mut prev = initial;
    for k in 1..=n_steps {
        let next = step(&prev, &params)?;
        check_finite(&next, k)?;
        let prev_ig = cur_ig;
        cur_ig = integrands(&next);
        ti.add(cur_ig, dt)?;
        observer(&StepView {
            step: k,
            dt,
            prev: Some(&prev),
            state: &next,
            integrands: cur_ig,
        })?;
        let dq_fd = (cur_ig.q - prev_ig.q) / dt;
        if let Some(ti0) = pending_first.take() {
            let residual = virial_or_nan(&prev, &next, dt);
            sink.push(build_row(&prev, radius, &ti0, dq_fd, residual)?)?;
        }
        if k.is_multiple_of(cfg.cadence) || k == n_steps {
            let residual = virial_or_nan(&prev, &next, dt);
            sink.push(build_row(&next, radius, &ti, dq_fd, residual)?)?;
        }
        snapshot(&next, k)?;
        prev = next;
    }
    Ok((prev, dt, n_steps, ti))
}

/// Profiles of one solver at one comparison time.
#[derive(Clone, Debug)]
pub struct ProfileSample {
    pub t: f64,
    pub grid: PhaseGrid,
    pub density_f: Vec<f64>,
    pub density_g: Vec<f64>,
    /// Field at the cell centers.
    pub field: Vec<f64>,
    pub q: f64,
}

fn grid_sample(state: &SystemState) -> ProfileSample {
    let grid = state.grid;
    let density_f = density(&state.f, &grid);
    let density_g = density(&state.g, &grid);
    let field = centered_field(state);
    let q = field
        .iter()
        .zip(density_f.iter().zip(&density_g))
        .map(|(e, (f, g))| e * e * (f + g))
        .sum::<f64>()
        * grid.dx();
    ProfileSample {
        t: state.t,
        grid,
        density_f,
        density_g,
        field,
        q,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub t: f64,
    pub rel_f: f64,
    pub rel_g: f64,
    pub rel_e: f64,
    pub rel_q: f64,
    pub q_grid: f64,
    pub q_oracle: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub max_rel_f: f64,
    pub max_rel_g: f64,
    pub max_rel_e: f64,
    pub max_rel_q: f64,
    pub tolerance: f64,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        [
            self.max_rel_f,
            self.max_rel_g,
            self.max_rel_e,
            self.max_rel_q,
        ]
        .iter()
        .all(|&v| v <= self.tolerance)
    }
}

/// Relative differences between two sampled histories.
///
/// Densities use the L1 distance over the L1 norm of the reference at the
/// same time. The field uses the sup distance and `Q` the absolute
/// difference, both over the sup of the reference across all times, since
/// either can pass through zero.
pub fn compare_samples(
    reference: &[ProfileSample],
    other: &[ProfileSample],
    tolerance: f64,
) -> Result<CompareReport> {
    if reference.len() != other.len() {
        return Err(Error::Config(format!(
            "sample counts differ: {} vs {}",
            reference.len(),
            other.len()
        )));
    }
    let l1 = |a: &[f64]| a.iter().map(|x| x.abs()).sum::<f64>();
    let l1_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let sup = |a: &[f64]| a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let e_scale = reference.iter().map(|s| sup(&s.field)).fold(0.0, f64::max);
    let q_scale = reference.iter().map(|s| s.q).fold(0.0, f64::max);
    let ratio = |num: f64, den: f64| {
        if den > 0.0 {
            num / den
        } else if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };

    let mut rows = Vec::with_capacity(reference.len());
    for (a, b) in reference.iter().zip(other) {
        if a.grid != b.grid {
            return Err(Error::Config(format!(
                "grids differ between runs: {:?} vs {:?}",
                a.grid, b.grid
            )));
        }
        if (a.t - b.t).abs() > 1e-9 * a.t.abs().max(1.0) {
            return Err(Error::Config(format!(
                "sample times differ: {} vs {}",
                a.t, b.t
            )));
        }
        let sup_diff = a
            .field
            .iter()
            .zip(&b.field)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        rows.push(CompareRow {
            t: a.t,
            rel_f: ratio(l1_diff(&a.density_f, &b.density_f), l1(&a.density_f)),
            rel_g: ratio(l1_diff(&a.density_g, &b.density_g), l1(&a.density_g)),
            rel_e: ratio(sup_diff, e_scale),
            rel_q: ratio((a.q - b.q).abs(), q_scale),
            q_grid: a.q,
            q_oracle: b.q,
        });
    }
    let max = |f: fn(&CompareRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    Ok(CompareReport {
        max_rel_f: max(|r| r.rel_f),
        max_rel_g: max(|r| r.rel_g),
        max_rel_e: max(|r| r.rel_e),
        max_rel_q: max(|r| r.rel_q),
        rows,
        tolerance,
    })
}

/// Runs the grid solver and the particle oracle from the same initial
/// condition and compares them at equally spaced times.
///
/// Writes `compare.csv` when `output` is set. Returns
/// [`Error::ToleranceExceeded`] if any difference is above the configured
/// tolerance.
pub fn compare(cfg: &RunConfig, output: Option<&Path>) -> Result<CompareReport> {
    cfg.validate()?;
    let oracle = cfg
        .oracle
        .ok_or_else(|| Error::Config("compare needs an [oracle] section".into()))?;
    let initial = cfg.initial_state()?;
    let grid = initial.grid;
    let interval = oracle.t_final / oracle.samples as f64;
    let raw_dt = cfg.dt.unwrap_or_else(|| {
        crate::integrator::default_dt(&initial, cfg.cfl.unwrap_or(crate::integrator::DEFAULT_CFL))
    });
    let (dt_grid, per_grid) = steps_for(interval, raw_dt);
    let (dt_pic, per_pic) = steps_for(interval, oracle.dt.unwrap_or(raw_dt));
    let params = StepParams {
        dt: dt_grid,
        interpolation: cfg.interpolation(),
        support_tol: cfg.support_tol,
    };
    params.validate()?;

    let mut grid_samples = vec![grid_sample(&initial)];
    let mut state = initial.clone();
    let mut k_total = 0;
    for k in 1..=oracle.samples {
        for _ in 0..per_grid {
            state = step(&state, &params)?;
            k_total += 1;
            check_finite(&state, k_total)?;
        }
        state.t = k as f64 * interval;
        grid_samples.push(grid_sample(&state));
    }

    let centers = grid.x_nodes();
    let oracle_sample = |ens: &crate::pic::ParticleEnsemble, t: f64| ProfileSample {
        t,
        grid,
        density_f: binned_density(&ens.f, &grid),
        density_g: binned_density(&ens.g, &grid),
        field: field_at_points(ens, &centers),
        q: q_functional(ens),
    };
    let mut ens = sample(&initial, oracle.particles, cfg.seed)?;
    let mut pic_samples = vec![oracle_sample(&ens, 0.0)];
    for k in 1..=oracle.samples {
        ens = pic_advance(&ens, dt_pic, per_pic)?;
        pic_samples.push(oracle_sample(&ens, k as f64 * interval));
    }

    let report = compare_samples(&grid_samples, &pic_samples, oracle.tolerance)?;
    if let Some(dir) = output {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("compare.csv"))?;
        for row in &report.rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    if !report.passed() {
        return Err(Error::ToleranceExceeded(format!(
            "max relative differences F {:.4}, G {:.4}, E {:.4}, Q {:.4} exceed {}",
            report.max_rel_f,
            report.max_rel_g,
            report.max_rel_e,
            report.max_rel_q,
            report.tolerance
        )));
    }
    Ok(report)
}

/// Diagnostics of a single stored state.
#[derive(Clone, Debug)]
pub struct Diagnosis {
    pub record: crate::diagnostics::DiagnosticsRecord,
    pub gauss_law_defect: f64,
    pub neutrality_defect: f64,
    pub split_ratio: f64,
    pub interpolation: InterpolationReport,
    pub escape: Option<String>,
}

pub fn diagnose(state: &SystemState, radius: f64, support_tol: f64) -> Result<Diagnosis> {
    let m = compute_moments(state);
    let fs = FieldState::from_moments(state, &m);
    Ok(Diagnosis {
        record: record(state, radius)?,
        gauss_law_defect: fs.gauss_law_defect(&state.grid),
        neutrality_defect: state.neutrality_defect(),
        split_ratio: split_bound_ratio(state, 1e-6),
        interpolation: moment_interpolation_check(&m, ENERGY_FLOOR),
        escape: escape_boundary(state, support_tol).map(|(s, b)| format!("{s} at {b}")),
    })
}

impl std::fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let r = &self.record;
        let opt = |v: Option<f64>| v.map_or("n/a".to_owned(), |x| format!("{x:.6e}"));
        writeln!(f, "t = {}", r.t)?;
        writeln!(f, "Q = {:.6e}", r.q)?;
        writeln!(f, "E_inf = {:.6e}", r.e_inf)?;
        writeln!(
            f,
            "E_inf^3 / 3Q = {:.6e}",
            r.e_inf.powi(3) / r.e_inf_cubed_bound
        )?;
        writeln!(f, "L4 = {:.6e}", r.l4)?;
        writeln!(f, "L74 = {:.6e}", r.l74)?;
        writeln!(f, "local_charge_F = {:.6e}", r.local_charge_f)?;
        writeln!(f, "local_charge_G = {:.6e}", r.local_charge_g)?;
        writeln!(f, "kdefect_f = {:.6e}", r.kdefect_f)?;
        writeln!(f, "kdefect_g = {:.6e}", r.kdefect_g)?;
        writeln!(f, "mass_f = {:.15e}", r.mass_f)?;
        writeln!(f, "mass_g = {:.15e}", r.mass_g)?;
        writeln!(f, "energy_total = {:.15e}", r.energy_total)?;
        writeln!(f, "dQdt_formula = {:.6e}", r.dqdt)?;
        writeln!(f, "gauss_law_defect = {:.3e}", self.gauss_law_defect)?;
        writeln!(f, "neutrality_defect = {:.3e}", self.neutrality_defect)?;
        writeln!(f, "split_ratio = {:.6e}", self.split_ratio)?;
        writeln!(
            f,
            "speed_ratio_max = {}",
            opt(self.interpolation.speed_ratio)
        )?;
        writeln!(
            f,
            "density_ratio_f_max = {}",
            opt(self.interpolation.density_ratio_f)
        )?;
        writeln!(
            f,
            "density_ratio_g_max = {}",
            opt(self.interpolation.density_ratio_g)
        )?;
        write!(
            f,
            "support = {}",
            self.escape.as_deref().unwrap_or("interior")
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    const SMALL: &str = r#"
t_final = 0.5
dt = 0.05
cadence = 2
interpolation = "cubic"

[grid]
x_min = -8.0
x_max = 8.0
n_x = 32
v_max = 2.0
n_v = 32

[f]
x_center = -0.5
x_half_width = 2.0
v_half_width = 0.8
amplitude = 0.3

[g]
x_center = 0.5
x_half_width = 1.5
v_half_width = 0.8
amplitude = 0.3
"#;

    fn none(_: &StepView) -> Result<()> {
        Ok(())
    }

    #[test]
    fn row_cadence_and_final_row() {
        let cfg = RunConfig::from_toml_str(SMALL).unwrap();
        let s = run(&cfg, None, &mut none).unwrap();
        assert_eq!(s.n_steps, 10);
        let ts: Vec<f64> = s.rows.iter().map(|r| r.t).collect();
        assert_eq!(ts.len(), 6);
        assert_eq!(ts[0], 0.0);
        assert!((ts[5] - 0.5).abs() < 1e-12);
        assert!(s
            .rows
            .iter()
            .all(|r| r.dqdt_fd.is_finite() && r.virial_residual.is_finite()));
        assert_eq!(s.rows.last().unwrap().int_q, s.integrals.int_q);
    }

    #[test]
    fn zero_final_time_gives_one_row() {
        let cfg =
            RunConfig::from_toml_str(&SMALL.replace("t_final = 0.5", "t_final = 0.0")).unwrap();
        let s = run(&cfg, None, &mut none).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.rows[0].t, 0.0);
        assert!(s.rows[0].dqdt_fd.is_nan());
    }

    #[test]
    fn observer_sees_every_step() {
        let cfg = RunConfig::from_toml_str(SMALL).unwrap();
        let mut seen = Vec::new();
        run(&cfg, None, &mut |v: &StepView| {
            seen.push((v.step, v.prev.is_some()));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), 11);
        assert_eq!(seen[0], (0, false));
        assert!(seen[1..].iter().all(|&(_, p)| p));
    }

    #[test]
    fn relativistic_run_has_no_virial_column() {
        let src = format!("model = \"relativistic\"\n{SMALL}");
        let cfg = RunConfig::from_toml_str(&src).unwrap();
        let s = run(&cfg, None, &mut none).unwrap();
        assert!(s.rows.iter().all(|r| r.virial_residual.is_nan()));
        assert!(s.rows.iter().all(|r| r.dqdt_fd.is_finite()));
    }

    #[test]
    fn escape_aborts_with_boundary() {
        let src = SMALL.replace("t_final = 0.5", "t_final = 20.0");
        let cfg = RunConfig::from_toml_str(&src).unwrap();
        match run(&cfg, None, &mut none) {
            Err(Error::SupportEscape { t, .. }) => assert!(t > 0.0 && t < 20.0),
            other => panic!("expected escape, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_state_aborts() {
        let cfg = RunConfig::from_toml_str(SMALL).unwrap();
        let mut s = cfg.initial_state().unwrap();
        s.g.values[5] = f64::NAN;
        match run_from(&cfg, s, None, &mut none) {
            Err(
                e @ Error::NonFinite {
                    species: "g",
                    step: 0,
                    ..
                },
            ) => assert_eq!(e.exit_code(), 4),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_grids_rejected() {
        let cfg = RunConfig::from_toml_str(SMALL).unwrap();
        let s = cfg.initial_state().unwrap();
        let a = vec![grid_sample(&s)];
        let mut b = a.clone();
        b[0].grid.n_x = 64;
        assert!(matches!(
            compare_samples(&a, &b, 0.1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identical_samples_compare_to_zero() {
        let cfg = RunConfig::from_toml_str(SMALL).unwrap();
        let s = cfg.initial_state().unwrap();
        let a = vec![grid_sample(&s)];
        let r = compare_samples(&a, &a, 1e-12).unwrap();
        assert!(r.passed());
        assert_eq!(r.max_rel_f, 0.0);
        assert_eq!(r.max_rel_q, 0.0);
    }

    #[test]
    fn compare_small_ensemble() {
        let src = format!(
            "{SMALL}\n[oracle]\nparticles = 20000\nt_final = 1.0\nsamples = 4\ntolerance = 0.2\n"
        );
        let cfg = RunConfig::from_toml_str(&src).unwrap();
        let r = compare(&cfg, None).unwrap();
        assert_eq!(r.rows.len(), 5);
        assert!(r.max_rel_q < 0.2, "{r:?}");
    }

    #[test]
    fn diagnosis_of_initial_state() {
        let cfg = RunConfig::from_toml_str(SMALL).unwrap();
        let s = cfg.initial_state().unwrap();
        let d = diagnose(&s, 2.0, 1e-8).unwrap();
        assert!(d.gauss_law_defect < 1e-12);
        assert!(d.escape.is_none());
        let text = d.to_string();
        assert!(text.contains("Q = "));
        assert!(text.contains("support = interior"));
    }
}
