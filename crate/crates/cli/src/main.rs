use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geohmc_cli::config::load_config;
use geohmc_cli::{commands, CliError};

#[derive(Parser)]
#[command(name = "geohmc", version, about = "Run geometric HMC experiments from a config file")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the config's `output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run chains and write one CSV per chain plus a summary.
    Sample { config: PathBuf },
    /// Run gradient, volume, reversibility, energy and stationarity checks.
    Check { config: PathBuf },
    /// Compare kernels at a matched evaluation budget.
    Bench { config: PathBuf },
    /// Acceptance of leapfrog and Euler HMC against dimension.
    Scaling { config: PathBuf },
    /// Write one integrator trajectory or Langevin path.
    Trajectory { config: PathBuf },
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let path = match &cli.command {
        Command::Sample { config }
        | Command::Check { config }
        | Command::Bench { config }
        | Command::Scaling { config }
        | Command::Trajectory { config } => config,
    };
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.set_override("seed", seed.to_string());
        cfg.seed = seed;
    }
    if let Some(dir) = cli.output_dir {
        cfg.set_override("output_dir", dir.display().to_string());
        cfg.output_dir = dir;
    }
    print!("{}", cfg.banner());
    match cli.command {
        Command::Sample { .. } => commands::sample(&cfg),
        Command::Check { .. } => commands::check(&cfg),
        Command::Bench { .. } => commands::bench(&cfg),
        Command::Scaling { .. } => commands::scaling(&cfg),
        Command::Trajectory { .. } => commands::trajectory(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
