//! `cascade-detect`: runs the experiment stages from a JSON configuration.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use cascade_core::experiment::{Experiment, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cascade-detect", version, about = "Two-tier lesion detection cascade experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the phantom suite.
    GenData(Common),
    /// Detect, label and score tier-1 candidates; split folds.
    Tier1(Common),
    /// Draw random view parameters for every candidate.
    SampleViews(Common),
    /// Train one CNN per fold.
    Train(Common),
    /// Score candidates with the trained CNNs.
    Evaluate(Common),
    /// Rebuild CSV/SVG reports from stored scores.
    Report(Common),
    /// Run every stage in order.
    Run(Common),
    /// Print the default configuration as JSON.
    DefaultConfig,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON, missing fields take defaults).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Restricts train, evaluate and report to these folds.
    #[arg(long, value_delimiter = ',')]
    folds: Option<Vec<usize>>,
}

impl Common {
    fn experiment(&self) -> Result<Experiment> {
        let text = std::fs::read_to_string(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        let mut cfg = ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", self.config.display()))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let out = match (&self.out, &cfg.output_dir) {
            (Some(o), _) | (None, Some(o)) => o.clone(),
            (None, None) => bail!("no output directory: pass --out or set output_dir"),
        };
        Ok(Experiment::new(cfg, out)?)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (common, stage) = match &cli.command {
        Command::DefaultConfig => {
            println!("{}", serde_json::to_string_pretty(&ExperimentConfig::default())?);
            return Ok(());
        }
        Command::GenData(c) => (c, "gen-data"),
        Command::Tier1(c) => (c, "tier1"),
        Command::SampleViews(c) => (c, "sample-views"),
        Command::Train(c) => (c, "train"),
        Command::Evaluate(c) => (c, "evaluate"),
        Command::Report(c) => (c, "report"),
        Command::Run(c) => (c, "run"),
    };
    let exp = common.experiment()?;
    let folds = common.folds.as_deref();
    let summary = match stage {
        "gen-data" => exp.gen_data().map(|_| None),
        "tier1" => exp.tier1().map(|_| None),
        "sample-views" => exp.sample_views().map(|_| None),
        "train" => exp.train(folds).map(|_| None),
        "evaluate" => exp.evaluate(folds).map(|_| None),
        "report" => exp.report(folds).map(Some),
        _ => run_all(&exp, folds).map(Some),
    }?;
    if let Some(s) = summary {
        println!("{}", serde_json::to_string_pretty(&s)?);
    }
    eprintln!("{stage}: done ({})", exp.out_dir().display());
    Ok(())
}

fn run_all(exp: &Experiment, folds: Option<&[usize]>) -> cascade_core::Result<cascade_core::experiment::Summary> {
    exp.gen_data()?;
    exp.tier1()?;
    exp.sample_views()?;
    exp.train(folds)?;
    exp.evaluate(folds)?;
    exp.report(folds)
}
