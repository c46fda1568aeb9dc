//! FROC and ROC curves over ranked candidates.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::tier1::Label;
use crate::{Error, Result};

/// A labeled candidate with the score being thresholded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    /// Volume (patient) the candidate came from.
    pub volume: usize,
    pub score: f64,
    pub label: Label,
    /// Matched lesion index within its volume.
    pub lesion: Option<usize>,
}

/// Operating point at "score >= threshold".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrocPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub fp_per_volume: f64,
}

fn check_ranked(cands: &[RankedCandidate]) -> Result<()> {
    for c in cands {
        if !c.score.is_finite() {
            return Err(Error::InvalidConfig(format!("non-finite score {}", c.score)));
        }
        match (c.label, c.lesion) {
            (Label::Unknown, _) => return Err(Error::InvalidConfig("unlabeled candidate".into())),
            (Label::TrueLesion, None) => return Err(Error::InvalidConfig("true candidate without a lesion".into())),
            _ => {}
        }
    }
    Ok(())
}

/// Sweeps every distinct score from high to low. The first point has an
/// infinite threshold (nothing detected). Each lesion is counted once however
/// many candidates hit it; false positives are averaged over `n_volumes`,
/// which includes lesion-free volumes.
pub fn compute_froc(cands: &[RankedCandidate], total_lesions: usize, n_volumes: usize) -> Result<Vec<FrocPoint>> {
    if total_lesions == 0 {
        return Err(Error::NoLesions);
    }
    if n_volumes == 0 {
        return Err(Error::Empty("volumes"));
    }
    check_ranked(cands)?;
    let mut order: Vec<&RankedCandidate> = cands.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = vec![FrocPoint {
        threshold: f64::INFINITY,
        sensitivity: 0.0,
        fp_per_volume: 0.0,
    }];
    let mut found = BTreeSet::new();
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let t = order[i].score;
        while i < order.len() && order[i].score == t {
            match order[i].lesion {
                Some(k) if order[i].label == Label::TrueLesion => {
                    found.insert((order[i].volume, k));
                }
                _ => fp += 1,
            }
            i += 1;
        }
        points.push(FrocPoint {
            threshold: t,
            sensitivity: found.len() as f64 / total_lesions as f64,
            fp_per_volume: fp as f64 / n_volumes as f64,
        });
    }
    Ok(points)
}

/// Fewest false positives per volume among points reaching `sensitivity`.
pub fn fp_at_sensitivity(points: &[FrocPoint], sensitivity: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.sensitivity >= sensitivity)
        .map(|p| p.fp_per_volume)
        .min_by(f64::total_cmp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// Positive and negative counts per tie group, highest score first.
fn tie_groups(scored: &[(f64, bool)]) -> Result<(Vec<(u64, u64)>, u64, u64)> {
    if let Some((s, _)) = scored.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite score {s}")));
    }
    let mut order: Vec<&(f64, bool)> = scored.iter().collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut last = None;
    for &&(s, pos) in &order {
        if last != Some(s) {
            groups.push((0, 0));
            last = Some(s);
        }
        let g = groups.last_mut().expect("pushed above");
        if pos {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    let p: u64 = groups.iter().map(|g| g.0).sum();
    let n: u64 = groups.iter().map(|g| g.1).sum();
    if p == 0 || n == 0 {
        return Err(Error::SingleClass);
    }
    Ok((groups, p, n))
}

/// ROC vertices from (0, 0) to (1, 1), one per distinct score.
pub fn roc_curve(scored: &[(f64, bool)]) -> Result<Vec<RocPoint>> {
    let (groups, p, n) = tie_groups(scored)?;
    let mut out = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0u64, 0u64);
    for (gp, gn) in groups {
        tp += gp;
        fp += gn;
        out.push(RocPoint {
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
        });
    }
    Ok(out)
}

/// Trapezoidal area under the ROC curve. Accumulated in integers, so it is
/// exactly the Mann-Whitney statistic with ties counted one half.
pub fn compute_roc_auc(scored: &[(f64, bool)]) -> Result<f64> {
    let (groups, p, n) = tie_groups(scored)?;
    // twice the trapezoid area, in units of 1 / (p n)
    let mut twice = 0u128;
    let mut tp = 0u128;
    for (gp, gn) in groups {
        twice += gn as u128 * (2 * tp + gp as u128);
        tp += gp as u128;
    }
    Ok(twice as f64 / (2.0 * p as f64 * n as f64))
}
