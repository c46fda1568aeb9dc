//! The `report` stage: curves, AUCs and the summary, rebuilt from stored
//! scores only.

use std::fs;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::artifacts::{FoldScores, Manifest};
use super::Experiment;
use crate::eval::{
    aggregate_views, compute_froc, compute_roc_auc, fp_at_sensitivity, froc_svg, roc_curve, write_auc_csv, write_froc_csv, write_roc_csv,
    CandidateScore, FoldSplit, FrocPoint, RankedCandidate, Series,
};
use crate::tier1::Label;
use crate::{child_seed, seed, Result};

/// Sensitivity at which tier-1 and tier-2 false-positive rates are compared.
pub const REPORT_SENSITIVITY: f64 = 0.8;

/// Headline numbers of a report; also written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub folds: Vec<usize>,
    pub volumes: usize,
    pub lesions: usize,
    pub candidates: usize,
    pub true_candidates: usize,
    /// Highest lesion sensitivity tier 1 reaches at all.
    pub tier1_max_sensitivity: f64,
    pub tier1_fp_at_sensitivity: Option<f64>,
    /// At the full view count.
    pub tier2_fp_at_sensitivity: Option<f64>,
    pub tier1_auc: f64,
    /// Candidate-level AUC per ablation view count.
    pub tier2_auc: Vec<(usize, f64)>,
}

impl Summary {
    pub fn auc_at(&self, n: usize) -> Option<f64> {
        self.tier2_auc.iter().find(|(m, _)| *m == n).map(|&(_, a)| a)
    }
}

fn positive(c: &RankedCandidate) -> bool {
    c.label == Label::TrueLesion
}

fn auc(cands: &[RankedCandidate]) -> Result<f64> {
    compute_roc_auc(&cands.iter().map(|c| (c.score, positive(c))).collect::<Vec<_>>())
}

impl Experiment {
    /// Mean of a seeded subset of `n` view probabilities. Subsets for
    /// different `n` are nested prefixes of one permutation per candidate.
    fn subset_score(&self, s: &CandidateScore, n: usize) -> Result<f64> {
        if n >= s.view_probs.len() {
            return Ok(s.probability);
        }
        let mut idx: Vec<usize> = (0..s.view_probs.len()).collect();
        idx.shuffle(&mut seed::rng(child_seed!(self.cfg.seed, "ablation", s.patient, s.candidate_id)));
        aggregate_views(&idx[..n].iter().map(|&i| s.view_probs[i]).collect::<Vec<_>>())
    }

    /// Writes every report file for the requested folds (all by default).
    pub fn report(&self, folds: Option<&[usize]>) -> Result<Summary> {
        let t = Instant::now();
        let summary = self.build_report(folds).map_err(|e| e.in_stage("report", None))?;
        self.log("report", None, t.elapsed().as_secs_f64(), serde_json::to_value(&summary)?)?;
        Ok(summary)
    }

    fn build_report(&self, folds: Option<&[usize]>) -> Result<Summary> {
        let folds = self.fold_list(folds)?;
        let manifest: Manifest = self.read_stamped(&self.path("data/manifest.json"), "gen-data")?;
        let split: FoldSplit = self.read_stamped(&self.path("folds.json"), "tier1")?;
        let lesions_of = |p: usize| manifest.patients.iter().find(|i| i.id == p).map_or(0, |i| i.lesions);
        let scores: Vec<FoldScores> = folds
            .iter()
            .map(|&f| self.read_stamped(&self.scores_path(f), "evaluate"))
            .collect::<Result<_>>()?;
        let test_patients: Vec<usize> = folds.iter().flat_map(|&f| split.test(f).iter().copied()).collect();
        let volumes = test_patients.len();
        let lesions: usize = test_patients.iter().map(|&p| lesions_of(p)).sum();

        let mut tier1 = Vec::new();
        for &p in &test_patients {
            for c in self.read_stamped::<super::artifacts::PatientCandidates>(&self.candidates_path(p), "tier1")?.candidates {
                tier1.push(RankedCandidate {
                    volume: p,
                    score: c.tier1_score,
                    label: c.label,
                    lesion: c.lesion,
                });
            }
        }
        let froc1 = compute_froc(&tier1, lesions, volumes)?;
        write_froc_csv(&froc1, self.path("froc_tier1.csv"))?;
        let tier1_auc = auc(&tier1)?;

        let test: Vec<&CandidateScore> = scores.iter().flat_map(|s| &s.test).collect();
        let full = self.cfg.views.views_per_candidate();
        let mut ablation = self.cfg.n_ablation.clone();
        ablation.sort_unstable();
        ablation.dedup();
        let mut tier2_auc = Vec::new();
        let mut per_n: Vec<(usize, Vec<FrocPoint>)> = Vec::new();
        for &n in &ablation {
            let ranked: Vec<RankedCandidate> = test
                .iter()
                .map(|s| -> Result<RankedCandidate> {
                    Ok(RankedCandidate {
                        score: self.subset_score(s, n)?,
                        ..s.ranked()
                    })
                })
                .collect::<Result<_>>()?;
            let froc = compute_froc(&ranked, lesions, volumes)?;
            write_froc_csv(&froc, self.path(format!("froc_tier2_N{n}.csv")))?;
            tier2_auc.push((n, auc(&ranked)?));
            per_n.push((n, froc));
        }
        let tier2_full: Vec<RankedCandidate> = test.iter().map(|s| s.ranked()).collect();
        let froc2 = compute_froc(&tier2_full, lesions, volumes)?;
        write_roc_csv(
            &roc_curve(&tier2_full.iter().map(|c| (c.score, positive(c))).collect::<Vec<_>>())?,
            self.path("roc_tier2.csv"),
        )?;

        // training curve: every (fold, training patient) pair is its own volume
        let n_patients = manifest.patients.len();
        let mut train_ranked = Vec::new();
        let mut train_lesions = 0;
        let mut train_volumes = 0;
        for s in &scores {
            let patients = split.train(s.fold);
            train_volumes += patients.len();
            train_lesions += patients.iter().map(|&p| lesions_of(p)).sum::<usize>();
            train_ranked.extend(s.train.iter().map(|c| RankedCandidate {
                volume: s.fold * n_patients + c.patient,
                ..c.ranked()
            }));
        }
        let froc_train = compute_froc(&train_ranked, train_lesions, train_volumes)?;
        write_froc_csv(&froc_train, self.path("froc_tier2_train.csv"))?;

        let mut rows = vec![("tier1".to_string(), tier1_auc)];
        rows.extend(tier2_auc.iter().map(|&(n, a)| (format!("tier2_N{n}"), a)));
        write_auc_csv(&rows, self.path("auc.csv"))?;

        let compare = [
            Series {
                name: "tier 1 (test)".into(),
                points: froc1.clone(),
                squares: true,
                dashed: false,
            },
            Series {
                name: format!("tier 2, N={full} (test)"),
                points: froc2.clone(),
                squares: false,
                dashed: false,
            },
            Series {
                name: "tier 2 (train)".into(),
                points: froc_train,
                squares: false,
                dashed: true,
            },
        ];
        fs::write(self.path("froc_compare.svg"), froc_svg("Tier 1 vs tier 2 FROC", &compare))?;
        let family: Vec<Series> = per_n
            .into_iter()
            .map(|(n, points)| Series {
                name: format!("N={n}"),
                points,
                squares: false,
                dashed: false,
            })
            .collect();
        fs::write(self.path("froc_varying_n.svg"), froc_svg("Tier 2 FROC by number of views", &family))?;

        let summary = Summary {
            folds,
            volumes,
            lesions,
            candidates: tier1.len(),
            true_candidates: tier1.iter().filter(|c| positive(c)).count(),
            tier1_max_sensitivity: froc1.last().map_or(0.0, |p| p.sensitivity),
            tier1_fp_at_sensitivity: fp_at_sensitivity(&froc1, REPORT_SENSITIVITY),
            tier2_fp_at_sensitivity: fp_at_sensitivity(&froc2, REPORT_SENSITIVITY),
            tier1_auc,
            tier2_auc,
        };
        fs::write(self.path("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
        Ok(summary)
    }
}
