use std::path::PathBuf;
use std::process::ExitCode;

use cadritz::problems::Preset;
use clap::{Parser, Subcommand};

mod checkpoint;
mod commands;
mod config;

use commands::Source;
use config::{ProblemKind, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cadritz::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Parser)]
#[command(name = "cadritz", version, about = "Variational neural solver on multi-patch NURBS geometries")]
struct Cli {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Use the reduced budgets and schedule.
    #[arg(long, global = true)]
    desk_scale: bool,
    #[arg(long, global = true, value_enum)]
    problem: Option<ProblemKind>,
    #[arg(long, global = true)]
    preset: Option<Preset>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print geometry, network and budget summary.
    Info,
    /// Write the interior training samples as CSV.
    Sample,
    /// Train and write the checkpoint and loss history.
    Train,
    /// Evaluate a checkpoint on fresh points.
    Evaluate {
        /// Defaults to `<out>/checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluate the closed-form solution instead of a checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        oracle: bool,
    },
    /// Evaluate several runs side by side.
    Compare {
        /// Training output directories or config files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        if self.desk_scale {
            c.desk_scale = true;
        }
        if let Some(p) = self.problem {
            c.problem = p;
        }
        if let Some(p) = self.preset {
            c.preset = p;
        }
        Ok(c)
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Command::Compare { runs } = &cli.command {
        let rows = commands::compare(runs)?;
        commands::write_compare_table(&rows, &mut std::io::stdout().lock())?;
        if let Some(out) = &cli.out {
            std::fs::create_dir_all(out)?;
            commands::write_compare_csv(&rows, &out.join("compare.csv"))?;
        }
        return Ok(true);
    }
    let resolved = cli.run_config()?.resolve()?;
    match &cli.command {
        Command::Info => commands::info(&resolved, &mut std::io::stdout().lock())?,
        Command::Sample => {
            let path = commands::sample(&resolved)?;
            println!("{}", path.display());
        }
        Command::Train => return commands::train_run(&resolved),
        Command::Evaluate { checkpoint, oracle } => {
            let default = resolved.config.out.join("checkpoint.json");
            let source = if *oracle {
                Source::Oracle
            } else {
                Source::Checkpoint(checkpoint.as_deref().unwrap_or(&default))
            };
            let report = commands::evaluate(&resolved, source, true)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Compare { .. } => unreachable!(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
