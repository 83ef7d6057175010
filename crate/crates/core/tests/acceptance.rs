//! Acceptance suite. Runs every criterion on the benchmark configuration
//! and prints one PASS/FAIL line per criterion; exits nonzero on any
//! failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlasov1d::config::RunConfig;
use vlasov1d::diagnostics::{audit_virial, kdefect, kdefect_bruteforce, total_energy};
use vlasov1d::driver::{compare, run, StepView};
use vlasov1d::field::FieldState;
use vlasov1d::integrator::{centered_field, step, Interpolation, StepParams};
use vlasov1d::phase_space::{Charge, ModelKind, PhaseGrid, SpeciesState, SystemState};
use vlasov1d::Result;

const GAUSS_TOL: f64 = 1e-12;
const MASS_TOL: f64 = 1e-8;
const ENERGY_TOL: f64 = 0.01;
const NEUTRALITY_TOL: f64 = 1e-10;
const EQ4_TOL: f64 = 1e-6;
const KDEFECT_TOL: f64 = 1e-10;
const KDEFECT_STATES: usize = 24;
const VIRIAL_FACTOR: f64 = 3.0;
const VIRIAL_WINDOW: f64 = 4.0;
const DECAY_FRACTION: f64 = 0.5;
const ORACLE_TOL: f64 = 0.1;
const MIN_ORDER: f64 = 1.8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn benchmark_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/benchmark.toml")
}

fn benchmark() -> RunConfig {
    RunConfig::from_toml_str(&std::fs::read_to_string(benchmark_path()).unwrap()).unwrap()
}

/// Per-step monitors collected over the benchmark run.
#[derive(Default)]
struct Monitors {
    gauss: f64,
    mass_f0: f64,
    mass_g0: f64,
    mass_drift: f64,
    energy0: f64,
    energy_drift: f64,
    neutrality: f64,
    eq4_excess: f64,
    eq4_ratio: f64,
    e_running_max: f64,
    e_last: f64,
    virial_audits: usize,
    virial_sign_violations: usize,
    virial_residual_window: f64,
}

impl Monitors {
    fn observe(&mut self, v: &StepView) -> Result<()> {
        let s = v.state;
        let grid = &s.grid;
        let fs = FieldState::from_state(s);
        self.gauss = self.gauss.max(fs.gauss_law_defect(grid));

        let (mf, mg) = (s.mass_f(), s.mass_g());
        let ec = centered_field(s);
        let energy = total_energy(s, &ec);
        if v.step == 0 {
            self.mass_f0 = mf;
            self.mass_g0 = mg;
            self.energy0 = energy;
        }
        self.mass_drift = self
            .mass_drift
            .max(((mf - self.mass_f0) / self.mass_f0).abs())
            .max(((mg - self.mass_g0) / self.mass_g0).abs());
        self.energy_drift = self
            .energy_drift
            .max(((energy - self.energy0) / self.energy0).abs());
        self.neutrality = self.neutrality.max(s.neutrality_defect());

        // One cell's worth of the Q integrand bounds its quadrature error.
        let ig = v.integrands;
        let e_inf = ig.e_inf3.cbrt();
        let dv = grid.dv();
        let peak =
            s.f.values
                .chunks_exact(grid.n_v)
                .zip(s.g.values.chunks_exact(grid.n_v))
                .map(|(a, b)| (a.iter().sum::<f64>() + b.iter().sum::<f64>()) * dv)
                .fold(0.0, f64::max);
        let allowance = 3.0 * grid.dx() * e_inf * e_inf * peak;
        self.eq4_excess = self
            .eq4_excess
            .max(ig.e_inf3 - 3.0 * ig.q - EQ4_TOL - allowance);
        if ig.q > 0.0 {
            self.eq4_ratio = self.eq4_ratio.max(ig.e_inf3 / (3.0 * ig.q));
        }
        self.e_running_max = self.e_running_max.max(e_inf);
        self.e_last = e_inf;

        if let Some(prev) = v.prev {
            let l = audit_virial(prev, s, v.dt)?;
            self.virial_audits += 1;
            if !(l.l <= 0.0 && l.a_f <= l.b_f && l.a_g <= l.b_g) {
                self.virial_sign_violations += 1;
            }
            if s.t <= VIRIAL_WINDOW + 1e-12 {
                self.virial_residual_window = self.virial_residual_window.max(l.residual.abs());
            }
        }
        Ok(())
    }
}

/// Largest virial residual over `[0, VIRIAL_WINDOW]` with `n` cells per
/// axis, the number of sign violations and the number of audits.
fn virial_window(n: usize) -> (f64, usize, usize) {
    let mut cfg = benchmark();
    cfg.grid.n_x = n;
    cfg.grid.n_v = n;
    cfg.t_final = VIRIAL_WINDOW;
    let mut m = Monitors::default();
    run(&cfg, None, &mut |v| m.observe(v)).unwrap();
    (
        m.virial_residual_window,
        m.virial_sign_violations,
        m.virial_audits,
    )
}

fn random_states(count: usize) -> Vec<SystemState> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..count)
        .map(|k| {
            let n_x = rng.random_range(4..=24);
            let n_v = if k == 0 {
                256
            } else {
                rng.random_range(8..=256)
            };
            let v_max = rng.random_range(0.5..6.0);
            let grid = PhaseGrid::new(-3.0, 5.0, n_x, v_max, n_v).unwrap();
            let mut species = |charge| {
                let mut s = SpeciesState::zeros(&grid, 1.0, charge);
                let shift = rng.random_range(-0.5..0.5) * v_max;
                for i in 0..n_x {
                    for j in 0..n_v {
                        let v = grid.v(j);
                        let envelope = (-(v - shift).powi(2) / v_max).exp();
                        s.values[grid.index(i, j)] = envelope * rng.random_range(0.0..2.0);
                    }
                }
                s
            };
            let f = species(Charge::Positive);
            let g = species(Charge::Negative);
            SystemState {
                f,
                g,
                t: 0.0,
                grid,
                model: ModelKind::Classical,
            }
        })
        .collect()
}

fn gaussian_state(n: usize) -> SystemState {
    let grid = PhaseGrid::new(-10.0, 10.0, n, 4.0, n).unwrap();
    let fill = |x0: f64, sx: f64, v0: f64, sv: f64| -> Vec<f64> {
        let mut vals = vec![0.0; grid.len()];
        for i in 0..n {
            for j in 0..n {
                let (x, v) = (grid.x(i), grid.v(j));
                let a = (x - x0).powi(2) / (2.0 * sx * sx) + (v - v0).powi(2) / (2.0 * sv * sv);
                vals[grid.index(i, j)] = 0.3 * (-a).exp();
            }
        }
        vals
    };
    let f = SpeciesState {
        values: fill(-0.5, 1.0, 0.1, 0.4),
        mass: 1.0,
        charge: Charge::Positive,
    };
    let mut g = SpeciesState {
        values: fill(0.5, 0.8, -0.1, 0.5),
        mass: 1.0,
        charge: Charge::Negative,
    };
    let scale = f.values.iter().sum::<f64>() / g.values.iter().sum::<f64>();
    g.values.iter_mut().for_each(|x| *x *= scale);
    SystemState::new(f, g, grid, ModelKind::Classical).unwrap()
}

fn evolve(n: usize, dt: f64, t: f64) -> SystemState {
    let p = StepParams::new(dt, Interpolation::CubicClipped { renormalize: true }).unwrap();
    let mut s = gaussian_state(n);
    for _ in 0..(t / dt).round() as usize {
        s = step(&s, &p).unwrap();
    }
    s
}

/// Phase-space mass in `nb x nb` blocks per species: an observable that
/// means the same thing on every grid.
fn block_masses(s: &SystemState, nb: usize) -> Vec<f64> {
    let n = s.grid.n_x;
    let r = n / nb;
    let mut out = vec![0.0; 2 * nb * nb];
    for (k, sp) in [&s.f, &s.g].into_iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                out[k * nb * nb + (i / r) * nb + j / r] +=
                    sp.values[i * n + j] * s.grid.cell_area();
            }
        }
    }
    out
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn observed_order(levels: &[Vec<f64>]) -> f64 {
    (l1(&levels[0], &levels[1]) / l1(&levels[1], &levels[2])).log2()
}

fn main() {
    let start = Instant::now();
    let cfg = benchmark();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();

    let mut mon = Monitors::default();
    let summary = run(&cfg, Some(dir_a.path()), &mut |v| mon.observe(v)).expect("benchmark run");
    let rows = &summary.rows;
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();

    results.push((
        1,
        "discrete Gauss law",
        outcome(
            mon.gauss <= GAUSS_TOL,
            format!("max relative defect {:.2e}", mon.gauss),
        ),
    ));

    results.push((
        2,
        "conservation",
        outcome(
            mon.mass_drift <= MASS_TOL
                && mon.energy_drift <= ENERGY_TOL
                && mon.neutrality <= NEUTRALITY_TOL,
            format!(
                "mass drift {:.2e}, energy drift {:.3e}, neutrality {:.2e}",
                mon.mass_drift, mon.energy_drift, mon.neutrality
            ),
        ),
    ));

    results.push((
        3,
        "pointwise field bound E_inf^3 <= 3Q",
        outcome(
            mon.eq4_excess <= 0.0,
            format!(
                "max E_inf^3/3Q {:.4}, worst excess {:.2e}",
                mon.eq4_ratio, mon.eq4_excess
            ),
        ),
    ));

    let states = random_states(KDEFECT_STATES);
    let mut worst_k: f64 = 0.0;
    for s in &states {
        for (_, sp) in s.species() {
            let a = kdefect(sp, &s.grid);
            let b = kdefect_bruteforce(sp, &s.grid);
            worst_k = worst_k.max((a - b).abs() / b.abs());
        }
    }
    results.push((
        4,
        "moment defect equals pair sum",
        outcome(
            worst_k <= KDEFECT_TOL,
            format!(
                "{} states, max relative difference {:.2e}",
                states.len(),
                worst_k
            ),
        ),
    ));

    let coarse = mon.virial_residual_window;
    let (fine, fine_viol, fine_audits) = virial_window(2 * cfg.grid.n_x);
    let factor = coarse / fine;
    let violations = mon.virial_sign_violations + fine_viol;
    results.push((
        5,
        "virial identity audit",
        outcome(
            factor >= VIRIAL_FACTOR && violations == 0,
            format!(
                "max |residual| on [0, {VIRIAL_WINDOW}] {coarse:.3e} -> {fine:.3e} (factor {factor:.2}); \
                 sign violations {violations} in {} audits",
                mon.virial_audits + fine_audits
            ),
        ),
    ));

    let t_end = summary.final_state.t;
    let at = |t: f64| {
        rows.iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .unwrap()
    };
    let (r1, r2, r3) = (at(0.25 * t_end), at(0.5 * t_end), at(t_end));
    let tail = |f: fn(&vlasov1d::output::TimeseriesRow) -> f64| (f(r3) - f(r2), f(r2) - f(r1));
    let (q_late, q_early) = tail(|r| r.int_q);
    let (e_late, e_early) = tail(|r| r.int_einf3);
    let (l_late, l_early) = tail(|r| r.int_l4);
    let lc0 = rows[0].local_charge_f;
    let lc_end = r3.local_charge_f;
    let decay_ok = q_late < q_early
        && e_late < e_early
        && l_late < l_early
        && mon.e_last < DECAY_FRACTION * mon.e_running_max
        && lc_end < DECAY_FRACTION * lc0;
    results.push((
        6,
        "decay trends",
        outcome(
            decay_ok,
            format!(
                "tail/previous window: int_Q {:.3}, int_Einf3 {:.3}, int_L4 {:.3}; \
                 E_inf(T)/max {:.3}; local charge ratio {:.3}",
                q_late / q_early,
                e_late / e_early,
                l_late / l_early,
                mon.e_last / mon.e_running_max,
                lc_end / lc0
            ),
        ),
    ));

    let report = compare(&cfg, None);
    let oracle_outcome = match report {
        Ok(r) => outcome(
            r.max_rel_q <= ORACLE_TOL && r.max_rel_f <= ORACLE_TOL,
            format!(
                "sup relative difference Q {:.3e}, F {:.3e} (G {:.3e}, E {:.3e})",
                r.max_rel_q, r.max_rel_f, r.max_rel_g, r.max_rel_e
            ),
        ),
        Err(e) => outcome(false, e.to_string()),
    };
    results.push((7, "grid versus particle oracle", oracle_outcome));

    let t_conv = 2.0;
    let space: Vec<Vec<f64>> = [64, 128, 256]
        .iter()
        .map(|&n| block_masses(&evolve(n, 0.01, t_conv), 16))
        .collect();
    let time: Vec<Vec<f64>> = [0.4, 0.2, 0.1]
        .iter()
        .map(|&dt| {
            let s = evolve(256, dt, t_conv);
            s.f.values.iter().chain(&s.g.values).copied().collect()
        })
        .collect();
    let (p_space, p_time) = (observed_order(&space), observed_order(&time));
    results.push((
        8,
        "convergence order",
        outcome(
            p_space >= MIN_ORDER && p_time >= MIN_ORDER,
            format!("dx/dv refinement {p_space:.3}, dt refinement {p_time:.3}"),
        ),
    ));

    run(&cfg, Some(dir_b.path()), &mut |_| Ok(())).expect("second benchmark run");
    let a = std::fs::read(dir_a.path().join("timeseries.csv")).unwrap();
    let b = std::fs::read(dir_b.path().join("timeseries.csv")).unwrap();
    results.push((
        9,
        "determinism",
        outcome(
            a == b && !a.is_empty(),
            format!("{} bytes, identical: {}", a.len(), a == b),
        ),
    ));

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} [{tag}] {name}: {}", o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria passed in {:.1} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
