//! Artifact paths, hash-stamped JSON files and the event log.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::Experiment;
use crate::cnn::EpochStats;
use crate::eval::CandidateScore;
use crate::tier1::Candidate;
use crate::views::ViewProvenance;
use crate::{Error, Result};

/// A JSON artifact tagged with the configuration hash that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    pub data: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct PatientInfo {
    pub id: usize,
    pub control: bool,
    /// Lesions large enough to be evaluated.
    pub lesions: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Manifest {
    pub patients: Vec<PatientInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct PatientCandidates {
    pub patient: usize,
    /// Fold in which this patient is held out; its tier-1 scores come from
    /// that fold's committee.
    pub fold: usize,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct CandidateViews {
    pub candidate_id: usize,
    pub train: Vec<ViewProvenance>,
    pub test: Vec<ViewProvenance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct PatientViews {
    pub patient: usize,
    /// Parallel to the patient's candidate list.
    pub candidates: Vec<CandidateViews>,
}

/// What the `train` stage did for one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub fold: usize,
    pub patients: Vec<usize>,
    /// (positives, negatives) before balancing.
    pub before_balance: (usize, usize),
    /// (positives, negatives) actually trained on.
    pub after_balance: (usize, usize),
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct FoldScores {
    pub fold: usize,
    /// Held-out candidates scored with fresh test views.
    pub test: Vec<CandidateScore>,
    /// Training-fold candidates scored with their training views.
    pub train: Vec<CandidateScore>,
}

impl Experiment {
    pub(crate) fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out.join(rel)
    }

    pub(crate) fn volume_path(&self, p: usize) -> PathBuf {
        self.path(format!("data/patient{p:03}.hdr"))
    }

    pub(crate) fn lesions_path(&self, p: usize) -> PathBuf {
        self.path(format!("data/patient{p:03}.lesions.json"))
    }

    pub(crate) fn candidates_path(&self, p: usize) -> PathBuf {
        self.path(format!("candidates/patient{p:03}.json"))
    }

    pub(crate) fn views_path(&self, p: usize) -> PathBuf {
        self.path(format!("views/patient{p:03}.json"))
    }

    pub fn model_path(&self, fold: usize) -> PathBuf {
        self.path(format!("models/fold{fold}.model"))
    }

    pub(crate) fn record_path(&self, fold: usize) -> PathBuf {
        self.path(format!("models/fold{fold}.json"))
    }

    pub(crate) fn scores_path(&self, fold: usize) -> PathBuf {
        self.path(format!("scores/fold{fold}.json"))
    }

    pub(crate) fn write_stamped<T: Serialize>(&self, path: &Path, data: &T) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let doc = Stamped {
            config_hash: self.hash.clone(),
            data,
        };
        fs::write(path, serde_json::to_vec(&doc)?)?;
        Ok(())
    }

    /// Reads an artifact written by `stage`, rejecting missing files and
    /// files produced under another configuration.
    pub(crate) fn read_stamped<T: DeserializeOwned>(&self, path: &Path, stage: &'static str) -> Result<T> {
        self.require(path, stage)?;
        let doc: Stamped<T> = serde_json::from_slice(&fs::read(path)?)?;
        self.check_hash(path, Some(&doc.config_hash))?;
        Ok(doc.data)
    }

    pub(crate) fn require(&self, path: &Path, stage: &'static str) -> Result<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(Error::MissingArtifact {
                stage,
                path: path.to_path_buf(),
            })
        }
    }

    pub(crate) fn check_hash(&self, path: &Path, found: Option<&str>) -> Result<()> {
        if found == Some(self.hash.as_str()) {
            return Ok(());
        }
        Err(Error::ConfigMismatch {
            path: path.to_path_buf(),
            expected: self.hash.clone(),
            found: found.unwrap_or("none").to_string(),
        })
    }

    /// Appends one event to `log.jsonl`.
    pub(crate) fn log(&self, stage: &str, fold: Option<usize>, seconds: f64, extra: serde_json::Value) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        let event = serde_json::json!({
            "stage": stage,
            "fold": fold,
            "seconds": seconds,
            "config_hash": self.hash,
            "detail": extra,
        });
        let mut f = OpenOptions::new().create(true).append(true).open(self.path("log.jsonl"))?;
        writeln!(f, "{event}")?;
        Ok(())
    }
}
