//! Command-line frontend: `patchseg <command> [--config FILE] [--set key=value]…`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use patchseg::commands;
use patchseg::config::{RunConfig, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "patchseg", version, about = "Patch-based segmentation of human meshes")]
struct Cli {
    /// Configuration file (`key = value` lines, optional `[section]` headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set pipeline.m=500`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute descriptors and vertex charts into a PGRD dataset.
    Preprocess,
    /// Train the classifier on a preprocessed dataset.
    Train,
    /// Segment meshes with a trained model.
    Predict,
    /// Area-weighted accuracy of predictions against ground truth.
    Evaluate,
    /// Write debug views of selected vertex charts.
    ExportCharts,
    /// Print the fully resolved configuration.
    ShowConfig,
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&cli.overrides)?;
    cfg.validate()?;
    if let Some(n) = cfg.resolved_workers()? {
        if n == 0 {
            return Err(format!("{WORKERS_ENV} must be positive").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Preprocess => {
            let s = commands::cmd_preprocess(&cfg)?;
            print!("{}", s.to_text());
        }
        Command::Train => {
            let (_, report) = commands::cmd_train(&cfg)?;
            print!("{}", report.to_text());
            println!("model written to {}", cfg.model_path().display());
        }
        Command::Predict => {
            let results = commands::cmd_predict(&cfg)?;
            println!("segmented {} meshes into {}", results.len(), cfg.predictions_dir().display());
        }
        Command::Evaluate => {
            let rep = commands::cmd_evaluate(&cfg)?;
            for (name, a) in &rep.per_mesh {
                println!("{name}\t{a:.6}");
            }
            println!("ACC\t{:.6}", rep.acc);
        }
        Command::ExportCharts => {
            for p in commands::cmd_export_charts(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::ShowConfig => print!("{}", cfg.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
