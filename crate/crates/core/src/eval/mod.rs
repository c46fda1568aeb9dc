//! Second-tier fusion and the evaluation protocol: view averaging,
//! candidate-to-lesion matching, FROC and ROC-AUC, patient-level folds and
//! training-set balancing.

mod folds;
mod froc;
mod report;

pub use folds::{balance_indices, balance_training, split_folds, FoldSplit};
pub use froc::{compute_froc, compute_roc_auc, fp_at_sensitivity, roc_curve, FrocPoint, RankedCandidate, RocPoint};
pub use report::{froc_svg, read_froc_csv, write_auc_csv, write_froc_csv, write_roc_csv, Series};

use serde::{Deserialize, Serialize};

use crate::tier1::{Candidate, Label};
use crate::volume::{GroundTruthLesion, Volume};
use crate::{Error, Result};

/// Mean of the view probabilities, summed with Neumaier compensation so the
/// result does not depend on input order beyond the last few ulps.
pub fn aggregate_views(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Empty("view probabilities"));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidConfig(format!("view probability {p} outside [0, 1]")));
    }
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &p in probs {
        let t = sum + p;
        comp += if sum.abs() >= p.abs() { (sum - t) + p } else { (p - t) + sum };
        sum = t;
    }
    Ok(((sum + comp) / probs.len() as f64).clamp(0.0, 1.0))
}

/// Fused second-tier score of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate_id: usize,
    pub patient: usize,
    pub view_probs: Vec<f64>,
    /// Mean of `view_probs`.
    pub probability: f64,
    pub label: Label,
    /// Matched lesion index within the patient, if any.
    pub lesion: Option<usize>,
}

impl CandidateScore {
    pub fn new(c: &Candidate, patient: usize, view_probs: Vec<f64>) -> Result<Self> {
        Ok(Self {
            candidate_id: c.id,
            patient,
            probability: aggregate_views(&view_probs)?,
            view_probs,
            label: c.label,
            lesion: c.lesion,
        })
    }

    pub fn ranked(&self) -> RankedCandidate {
        RankedCandidate {
            volume: self.patient,
            score: self.probability,
            label: self.label,
            lesion: self.lesion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// True iff the candidate's centroid voxel lies inside a lesion mask.
    #[default]
    MaskContainment,
    /// True iff the centroid is within `distance_mm` of a lesion center.
    CentroidDistance,
}

/// When a candidate counts as a hit on a ground-truth lesion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchRule {
    pub mode: MatchMode,
    pub distance_mm: f64,
}

impl Default for MatchRule {
    fn default() -> Self {
        Self {
            mode: MatchMode::MaskContainment,
            distance_mm: 5.0,
        }
    }
}

impl MatchRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_mm > 0.0 && self.distance_mm.is_finite()) {
            return Err(Error::InvalidConfig(format!("match distance {} must be > 0", self.distance_mm)));
        }
        Ok(())
    }
}

/// Lesions large enough to take part in evaluation, with their original
/// indices.
pub fn evaluable_lesions(lesions: &[GroundTruthLesion]) -> Vec<(usize, &GroundTruthLesion)> {
    lesions.iter().enumerate().filter(|(_, l)| l.is_evaluable()).collect()
}

/// Labels every candidate against `lesions`, which the caller has already
/// restricted to evaluable ones. `lesion` is set to the index of the matched
/// lesion in that slice; several candidates may share one lesion.
pub fn match_candidates(candidates: &mut [Candidate], lesions: &[GroundTruthLesion], v: &Volume, rule: &MatchRule) -> Result<()> {
    rule.validate()?;
    for c in candidates.iter_mut() {
        let hit = match rule.mode {
            MatchMode::MaskContainment => v
                .voxel_index_of_world(c.centroid)
                .and_then(|i| lesions.iter().position(|l| l.contains(i))),
            MatchMode::CentroidDistance => lesions
                .iter()
                .enumerate()
                .map(|(k, l)| (k, dist(c.centroid, l.center)))
                .filter(|&(_, d)| d <= rule.distance_mm)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, _)| k),
        };
        c.lesion = hit;
        c.label = if hit.is_some() { Label::TrueLesion } else { Label::FalsePositive };
    }
    Ok(())
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
