use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fbsde_cli::commands::{self, CliError, ModelSource};
use fbsde_cli::config::{parse_override, RunConfig};

/// Neural FBSDE solvers: train, verify, extrapolate, compare.
#[derive(Parser)]
#[command(name = "fbsde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file; the preset defaults fill missing keys.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set seed=7`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct Source {
    /// Checkpoint to load; defaults to `checkpoint.bin` in the output directory.
    #[arg(long, conflicts_with = "exact")]
    checkpoint: Option<PathBuf>,
    /// Use the closed-form solution instead of a checkpoint.
    #[arg(long)]
    exact: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, loss table and metadata.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint written under the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Relative error curves against the closed-form solution.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        /// Relative half-width of perturbed starts; same as `--set radius=R`.
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Y0 errors over `n_list` with Richardson extrapolates.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Reformat an external `n_steps,raw_error,extrapolated_error` table instead of training.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Plain versus multiscale nets on the oscillatory problem.
    MscaleCompare {
        #[command(flatten)]
        common: Common,
    },
    /// Write simulated trajectories with model values and gradients.
    PathsDump {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
    },
}

fn load(common: &Common, extra: &[(String, String)]) -> Result<RunConfig, CliError> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut overrides = common
        .set
        .iter()
        .map(|s| parse_override(s).map_err(|_| CliError::Config(format!("`--set {s}`: expected KEY=VALUE"))))
        .collect::<Result<Vec<_>, _>>()?;
    overrides.extend_from_slice(extra);
    Ok(RunConfig::resolve(&text, &overrides)?)
}

fn source(s: &Source, cfg: &RunConfig) -> ModelSource {
    if s.exact {
        ModelSource::Exact
    } else {
        ModelSource::checkpoint_or_default(s.checkpoint.clone(), cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut err = std::io::stderr();
    match cli.command {
        Command::Train { common, resume } => {
            let cfg = load(&common, &[])?;
            commands::cmd_train(&cfg, resume.as_deref(), &mut err)?;
        }
        Command::Evaluate { common, source: s, radius } => {
            let extra: Vec<_> = radius.map(|r| ("radius".to_string(), r.to_string())).into_iter().collect();
            let cfg = load(&common, &extra)?;
            commands::cmd_evaluate(&cfg, &source(&s, &cfg), &mut err)?;
        }
        Command::Convergence { common, reference } => {
            let cfg = load(&common, &[])?;
            match reference {
                Some(r) => print!("{}", commands::cmd_reference_table(&cfg, &r)?),
                None => {
                    commands::cmd_convergence(&cfg, &mut err)?;
                }
            }
        }
        Command::MscaleCompare { common } => {
            let cfg = load(&common, &[])?;
            commands::cmd_mscale_compare(&cfg, &mut err)?;
        }
        Command::PathsDump { common, source: s } => {
            let cfg = load(&common, &[])?;
            commands::cmd_paths_dump(&cfg, &source(&s, &cfg))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fbsde: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
