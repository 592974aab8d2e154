//! Command-line front end for batch experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eventpf::experiment::{self, ExperimentConfig, SeedSpec};

#[derive(Parser)]
#[command(name = "eventpf", version, about = "Event-based particle filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment description; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed count K (seeds 0..K) or a comma-separated list.
    #[arg(long)]
    seeds: Option<SeedSpec>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// One closed-loop run per sweep point and seed; writes results.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Leave the wall_time column empty so reruns are byte-identical.
        #[arg(long)]
        no_wall_time: bool,
    },
    /// Trigger-probability estimates and T_c curves.
    Horizon {
        #[command(flatten)]
        common: Common,
    },
    /// Reference tables from quadrature and naive Monte Carlo.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Parse and check a config, then print it with defaults filled in.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: Option<&PathBuf>) -> eventpf::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_path(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> eventpf::Result<()> {
    match cli.command {
        Command::Sweep { common, no_wall_time } => {
            let cfg = load(common.config.as_ref())?;
            let seeds = common.seeds.map_or_else(|| cfg.seeds.seeds(), |s| s.seeds());
            let path = experiment::run_sweep(&cfg, &seeds, common.workers, &common.out, !no_wall_time)?;
            println!("wrote {}", path.display());
        }
        Command::Horizon { common } => {
            let cfg = load(common.config.as_ref())?;
            let seeds = common.seeds.map_or_else(|| cfg.study_seeds(), |s| s.seeds());
            experiment::run_horizon_study(&cfg, &seeds, common.workers, &common.out)?;
            println!("wrote {}", common.out.display());
        }
        Command::Oracle { common } => {
            let cfg = load(common.config.as_ref())?;
            let seeds = common.seeds.map_or_else(|| vec![0], |s| s.seeds());
            experiment::run_oracle(&cfg, &seeds, &common.out)?;
            println!("wrote {}", common.out.display());
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let jobs = cfg.sweep_jobs(&cfg.seeds.seeds())?.len();
            print!("{}", toml::to_string(&cfg).map_err(|e| eventpf::Error::Config(e.to_string()))?);
            eprintln!("ok: {jobs} sweep runs");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
