//! Cross-validated end-to-end experiment on synthetic phantoms.
//!
//! Every stage reads the artifacts of earlier stages from the output
//! directory and writes its own, so stages can be rerun independently:
//!
//! | stage          | writes                                                   |
//! |----------------|----------------------------------------------------------|
//! | `gen-data`     | `config.json`, `data/`                                   |
//! | `tier1`        | `folds.json`, `tier1/`, `candidates/`                    |
//! | `sample-views` | `views/`                                                 |
//! | `train`        | `models/fold{i}.model`, `models/fold{i}.json`            |
//! | `evaluate`     | `scores/fold{i}.json`                                    |
//! | `report`       | `froc_*.csv`, `auc.csv`, `roc_tier2.csv`, `*.svg`, `summary.json` |
//!
//! All JSON artifacts and model files carry the hash of the configuration
//! that produced them; reading one produced under a different configuration
//! is an error. `log.jsonl` receives one timing event per stage and fold.

mod artifacts;
mod config;
mod report;
mod stages;

pub use artifacts::{Stamped, TrainRecord};
pub use config::{ExperimentConfig, SuiteConfig};
pub use report::{Summary, REPORT_SENSITIVITY};
pub use stages::{ExampleRef, TrainingSet};

use std::path::{Path, PathBuf};

use crate::Result;

/// One experiment bound to an output directory.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ExperimentConfig,
    hash: String,
    out: PathBuf,
}

impl Experiment {
    /// Validates `cfg`; nothing is computed or written yet.
    pub fn new(cfg: ExperimentConfig, out: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            hash: cfg.hash(),
            cfg,
            out: out.into(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    /// The requested folds, or all of them.
    fn fold_list(&self, folds: Option<&[usize]>) -> Result<Vec<usize>> {
        let k = self.cfg.folds;
        match folds {
            None => Ok((0..k).collect()),
            Some(f) => {
                if let Some(bad) = f.iter().find(|&&i| i >= k) {
                    return Err(crate::Error::InvalidConfig(format!("fold {bad} out of range 0..{k}")));
                }
                let mut v = f.to_vec();
                v.sort_unstable();
                v.dedup();
                Ok(v)
            }
        }
    }
}

/// Runs every stage over all folds and returns the report summary.
pub fn run_end_to_end(cfg: ExperimentConfig, out: impl Into<PathBuf>) -> Result<Summary> {
    let exp = Experiment::new(cfg, out)?;
    exp.gen_data()?;
    exp.tier1()?;
    exp.sample_views()?;
    exp.train(None)?;
    exp.evaluate(None)?;
    exp.report(None)
}
