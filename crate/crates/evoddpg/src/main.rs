use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use evoddpg::agent::Hyperparams;
use evoddpg::commands;
use evoddpg::config::{load_hyperparams, Config};
use evoddpg::env::EnvName;
use evoddpg::error::Result;

#[derive(Parser)]
#[command(name = "evoddpg", version, about = "GA-tuned DDPG+HER on toy goal-reaching tasks")]
struct Cli {
    /// Path to a TOML config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override train.seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output run directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Override env.name from the config (point-reach, arm-reach, planar-push).
    #[arg(long, global = true)]
    env: Option<String>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write metrics, summary, and a checkpoint.
    Train {
        /// TOML file with the six hyperparameters (e.g. a GA run's
        /// best_hyperparams.toml); defaults to the config's agent section.
        #[arg(long)]
        hyperparams: Option<PathBuf>,
    },
    /// Run the genetic hyperparameter search.
    Ga,
    /// Compare baseline vs tuned hyperparameters over shared seeds.
    Compare {
        /// TOML file for the baseline arm; defaults to the built-in baseline.
        #[arg(long)]
        baseline_hp: Option<PathBuf>,
        /// TOML file for the GA-tuned arm.
        #[arg(long)]
        tuned_hp: PathBuf,
        #[arg(long, default_value_t = 3)]
        n_seeds: usize,
    },
    /// Greedy-evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
    /// Export CSV plot data from run directories.
    ExportPlots {
        run_dirs: Vec<PathBuf>,
    },
    /// Print an environment's spec constants.
    DescribeEnv,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(env) = &cli.env {
        cfg.env.name = EnvName::from_str(env)?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Train { hyperparams } => {
            let cfg = load_config(cli)?;
            let hp: Option<Hyperparams> =
                hyperparams.as_ref().map(|p| load_hyperparams(p)).transpose()?;
            let out = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("run-train"));
            commands::cmd_train(&cfg, &out, hp, cli.quiet)
        }
        Command::Ga => {
            let cfg = load_config(cli)?;
            let out = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("run-ga"));
            commands::cmd_ga(&cfg, &out, cli.quiet)
        }
        Command::Compare { baseline_hp, tuned_hp, n_seeds } => {
            let cfg = load_config(cli)?;
            let baseline = match baseline_hp {
                Some(p) => load_hyperparams(p)?,
                None => Hyperparams::baseline(),
            };
            let tuned = load_hyperparams(tuned_hp)?;
            let out = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("run-compare"));
            commands::cmd_compare(&cfg, &out, baseline, tuned, *n_seeds, cli.quiet)
        }
        Command::Eval { checkpoint, episodes } => {
            commands::cmd_eval(checkpoint, *episodes, cli.seed.unwrap_or(0), cli.quiet)
        }
        Command::ExportPlots { run_dirs } => {
            let out = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("plots"));
            commands::cmd_export_plots(run_dirs, &out)
        }
        Command::DescribeEnv => {
            let cfg = load_config(cli)?;
            commands::cmd_describe_env(cfg.env.name)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
