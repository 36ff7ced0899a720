//! Command-line pipeline: ingest → cohort → features → train → predict →
//! report, plus Kaplan-Meier curves and a synthetic corpus generator.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub use config::{CommonArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "transit", version, about = "Forecast transitions from casual drug-use forums to recovery forums")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read the corpus and write user timelines plus a summary
    Ingest,
    /// Label the transition cohort and select survival subjects
    Cohort,
    /// Write per-user feature matrices
    Features,
    /// Fit a Cox model on a training split and report its C-index
    TrainCox,
    /// Fit a random forest on a training split and report accuracy and F1
    TrainForest,
    /// Score one user with a saved model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        author: String,
    },
    /// Feature screening, per-covariate C-index and distribution tables
    Report,
    /// Kaplan-Meier curve of time to the first recovery post
    Km,
    /// Write a synthetic corpus with a planted transition signal
    Generate {
        #[arg(long, default_value_t = 2000)]
        users: usize,
        #[arg(long)]
        embedding_dim: Option<usize>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::resolve(&cli.common)?;
    match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Cohort => commands::cohort(&cfg),
        Command::Features => commands::features(&cfg),
        Command::TrainCox => commands::train_cox(&cfg),
        Command::TrainForest => commands::train_forest(&cfg),
        Command::Predict { model, author } => commands::predict(&cfg, &model, &author),
        Command::Report => commands::report(&cfg),
        Command::Km => commands::km(&cfg),
        Command::Generate { users, embedding_dim } => commands::generate_corpus(&cfg, users, embedding_dim),
    }
}
