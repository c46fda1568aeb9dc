//! First tier: a sensitive candidate generator.
//!
//! segment spine -> per-slice watershed -> greedy merge -> dense segment
//! selection -> 3D stacking -> features -> committee score.

mod committee;
mod features;
mod merge;
mod spine;
mod stack;
mod watershed;

pub use committee::{train_committee, CommitteeConfig, CommitteeModel, LinearMember};
pub use features::{compute_features, sphericity, surface_area, CandidateFeatures, SpineFrame, MAX_SPHERICITY};
pub use merge::{adjacency, merge_subsegments, select_dense};
pub use spine::{segment_spine, SpineMask, SpineParams};
pub use stack::{stack_detections, Detection3D};
pub use watershed::{gaussian_smooth, watershed_labels, watershed_subsegments, SliceGeometry, SubSegment2D};

use serde::{Deserialize, Serialize};

use crate::volume::{mask, Volume};
use crate::{par, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tier1Config {
    pub hu_threshold: f32,
    pub grow_tolerance_hu: f32,
    pub min_component_voxels: usize,
    pub closing_radius_px: usize,
    pub smoothing_sigma_px: f64,
    pub merge_threshold_hu: f64,
    /// A 2D detection must exceed every neighbouring segment by this much.
    pub min_contrast_hu: f64,
    pub min_overlap_px: usize,
    /// Detections smaller than this are dropped before feature computation.
    pub min_voxels: usize,
    /// Candidates scoring below this are not emitted; `None` keeps all.
    pub operating_threshold: Option<f64>,
    pub committee: CommitteeConfig,
}

impl Default for Tier1Config {
    fn default() -> Self {
        Self {
            hu_threshold: 200.0,
            grow_tolerance_hu: 100.0,
            min_component_voxels: 500,
            closing_radius_px: 7,
            smoothing_sigma_px: 1.0,
            merge_threshold_hu: 60.0,
            min_contrast_hu: 80.0,
            min_overlap_px: 1,
            min_voxels: 3,
            operating_threshold: None,
            committee: CommitteeConfig::default(),
        }
    }
}

impl Tier1Config {
    fn spine_params(&self) -> SpineParams {
        SpineParams {
            hu_threshold: self.hu_threshold,
            grow_tolerance_hu: self.grow_tolerance_hu,
            min_component_voxels: self.min_component_voxels,
            closing_radius_px: self.closing_radius_px,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    TrueLesion,
    FalsePositive,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: usize,
    /// World centroid of the voxel mask (mm).
    pub centroid: [f64; 3],
    pub tier1_score: f64,
    pub features: CandidateFeatures,
    pub label: Label,
    /// Index of the matched ground-truth lesion, if any.
    #[serde(default)]
    pub lesion: Option<usize>,
    #[serde(rename = "mask", with = "mask::runs")]
    pub voxels: Vec<usize>,
}

/// Runs the tier-1 chain without scoring. Candidates come out in canonical
/// detection order with `tier1_score = 0` and `Label::Unknown`.
pub fn detect_candidates(v: &Volume, cfg: &Tier1Config) -> Result<Vec<Candidate>> {
    let mask = segment_spine(v, &cfg.spine_params())?;
    let frame = SpineFrame::from_mask(&mask, v);
    let geom = SliceGeometry::of(v);
    let per_slice = par::map_range(v.dims()[2], |z| {
        let segs = watershed_subsegments(v.slice(z), mask.plane(z), cfg.smoothing_sigma_px, z, &geom);
        let merged = merge_subsegments(segs, cfg.merge_threshold_hu, &geom);
        select_dense(&merged, cfg.min_contrast_hu, &geom)
    });
    let detections: Vec<Detection3D> =
        stack_detections(per_slice.into_iter().flatten().collect(), cfg.min_overlap_px, &geom)
            .into_iter()
            .filter(|d| d.voxels.len() >= cfg.min_voxels)
            .collect();
    let features = par::map(&detections, |d| compute_features(d, v, &frame));
    Ok(detections
        .into_iter()
        .zip(features)
        .enumerate()
        .map(|(id, (d, features))| Candidate {
            id,
            centroid: d.centroid,
            tier1_score: 0.0,
            features,
            label: Label::Unknown,
            lesion: None,
            voxels: d.voxels,
        })
        .collect())
}

/// Scores candidates with `model`, keeps those strictly above the operating threshold
/// and sorts by descending score (ties by id).
pub fn score_candidates(mut candidates: Vec<Candidate>, model: &CommitteeModel, threshold: Option<f64>) -> Vec<Candidate> {
    for c in candidates.iter_mut() {
        c.tier1_score = model.score(&c.features.to_vec());
    }
    if let Some(t) = threshold {
        candidates.retain(|c| c.tier1_score > t);
    }
    candidates.sort_by(|a, b| b.tier1_score.total_cmp(&a.tier1_score).then(a.id.cmp(&b.id)));
    candidates
}

/// Full tier-1 chain: detection, features and committee scoring.
pub fn generate_candidates(v: &Volume, cfg: &Tier1Config, model: &CommitteeModel) -> Result<Vec<Candidate>> {
    Ok(score_candidates(detect_candidates(v, cfg)?, model, cfg.operating_threshold))
}
