use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use w2pt_cli::config::RunConfig;
use w2pt_cli::output::OUTPUT_ROOT_ENV;

#[derive(Parser)]
#[command(name = "w2pt", version, about = "Evolve field correlators through a growing cavity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run { config: PathBuf },
    /// Run a config once per value of one parameter and aggregate the results.
    Sweep {
        config: PathBuf,
        /// ramp_time, sharpness, wall_width or mode_number
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `1,3,10`.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Validate a config, including the CFL gate, without running it.
    Check { config: PathBuf },
    /// Compare the band and two-pass engines on a tiny grid.
    Oracle { config: PathBuf },
}

fn env_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let out = w2pt_cli::run(&cfg, Some(&config), "run", env_root())?;
            println!("{}", out.dir.display());
            println!("{}", serde_json::to_string_pretty(&out.manifest.summary)?);
        }
        Command::Sweep { config, param, values } => {
            let cfg = RunConfig::load(&config)?;
            let cfg = w2pt_cli::sweep_config(&cfg, &param, &w2pt_cli::parse_values(&values)?)?;
            let out = w2pt_cli::run(&cfg, Some(&config), "sweep", env_root())?;
            println!("{}", out.dir.display());
            println!("{}", serde_json::to_string_pretty(&out.manifest.summary)?);
        }
        Command::Check { config } => {
            let plan = w2pt_cli::check(&RunConfig::load(&config)?)?;
            let grid = plan.setup.grid()?;
            let time = plan.setup.time_grid()?;
            println!(
                "ok: {} with {} points, {} time levels (dt = {})",
                plan.scenario.name(),
                grid.n_points(),
                time.n_steps(),
                time.dt()
            );
        }
        Command::Oracle { config } => {
            let c = w2pt_cli::oracle(&RunConfig::load(&config)?)?;
            println!(
                "ok: {}x{} grid, dt = {}, max |band − two-pass| = {:e} (max |W| = {:e})",
                c.nx, c.nt, c.dt, c.max_abs_diff, c.max_abs
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(w2pt_cli::exit_code(&e) as u8)
        }
    }
}
