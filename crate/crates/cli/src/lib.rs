//! Command-line pipeline around `highlights-core`: corpus statistics,
//! training, generation, evaluation and carbon reporting.

pub mod commands;
pub mod config;
pub mod pipeline;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::RunArgs;

#[derive(Debug, Parser)]
#[command(name = "highlights", version, about = "Train and evaluate research-highlight generators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print and save corpus statistics.
    Stats(RunArgs),
    /// Train the models of the configured experiment.
    Train(RunArgs),
    /// Decode every evaluation document with its model.
    Generate(RunArgs),
    /// Score generated highlights against references.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to `<out>/generated.tsv`.
        #[arg(long)]
        generated: Option<PathBuf>,
        /// Defaults to `<out>/references.tsv`.
        #[arg(long)]
        references: Option<PathBuf>,
    },
    /// Estimate the carbon footprint of a run.
    Carbon {
        /// Energy parameters as TOML or JSON.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Running time in hours.
        #[arg(long)]
        hours: Option<f64>,
        /// A `run.json` written by `train`; its wall clock and epochs are used.
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Build a synthetic contextual-embedding cache for a dataset.
    EmbedCache {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = highlights_core::embedding::CONTEXTUAL_DIM)]
        dim: usize,
        /// Seed of the synthetic encoder.
        #[arg(long, default_value_t = 0)]
        encoder_seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stats(args) => {
            commands::stats(&args.resolve()?)?;
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let m = commands::run_train(&cfg)?;
            eprintln!("trained {} model(s) into {}", m.models.len(), cfg.out.display());
        }
        Command::Generate(args) => {
            let cfg = args.resolve()?;
            let n = commands::generate(&cfg)?;
            eprintln!("wrote {n} generated highlights to {}", cfg.out.join(pipeline::GENERATED).display());
        }
        Command::Evaluate {
            run,
            generated,
            references,
        } => {
            let cfg = run.resolve()?;
            let generated = generated.unwrap_or_else(|| cfg.out.join(pipeline::GENERATED));
            let references = references.unwrap_or_else(|| cfg.out.join(pipeline::REFERENCES));
            commands::evaluate(&cfg, &generated, &references)?;
        }
        Command::Carbon { params, hours, run } => {
            println!("{}", commands::carbon(params.as_deref(), hours, run.as_deref())?);
        }
        Command::EmbedCache {
            run,
            dim,
            encoder_seed,
            output,
        } => {
            let cfg = run.resolve()?;
            let n = commands::embed_cache(&cfg, dim, encoder_seed, &output)?;
            eprintln!("cached {n} records in {}", output.display());
        }
    }
    Ok(())
}
