use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vlasov1d::config::RunConfig;
use vlasov1d::diagnostics::LOCAL_RADIUS;
use vlasov1d::driver::{compare, diagnose, run};
use vlasov1d::integrator::SUPPORT_TOL;
use vlasov1d::output::read_snapshot;
use vlasov1d::Result;

/// Two-species 1D1V Vlasov-Poisson simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write timeseries.csv (and snapshots) to the
    /// output directory.
    Run { config: PathBuf },
    /// Run the grid solver and the particle oracle side by side and
    /// write compare.csv.
    Compare { config: PathBuf },
    /// Print diagnostics of a phase-space snapshot.
    Diagnose {
        snapshot: PathBuf,
        /// Local-charge radius.
        #[arg(long, default_value_t = LOCAL_RADIUS)]
        radius: f64,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let out = cfg.output_dir.clone();
            let summary = run(&cfg, Some(&out), &mut |_| Ok(()))?;
            let last = summary.rows.last().expect("a run writes at least one row");
            println!(
                "{} steps of dt = {:.6e} to t = {}; int_Q = {:.6e}, int_Einf3 = {:.6e}",
                summary.n_steps, summary.dt, last.t, last.int_q, last.int_einf3
            );
            println!(
                "wrote {}",
                out.join(vlasov1d::output::TIMESERIES_FILE).display()
            );
        }
        Command::Compare { config } => {
            let cfg = RunConfig::load(&config)?;
            let out = cfg.output_dir.clone();
            let report = compare(&cfg, Some(&out))?;
            println!(
                "max relative difference: F {:.4e}, G {:.4e}, E {:.4e}, Q {:.4e} (tolerance {})",
                report.max_rel_f,
                report.max_rel_g,
                report.max_rel_e,
                report.max_rel_q,
                report.tolerance
            );
        }
        Command::Diagnose { snapshot, radius } => {
            let state = read_snapshot(&snapshot)?;
            println!("{}", diagnose(&state, radius, SUPPORT_TOL)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
