//! The pipeline stages.

use std::fs;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::artifacts::{CandidateViews, FoldScores, Manifest, PatientCandidates, PatientInfo, PatientViews, TrainRecord};
use super::Experiment;
use crate::cnn::{load_model, predict_batch, save_model, train_sgd_with, TrainConfig};
use crate::eval::{balance_indices, match_candidates, CandidateScore, FoldSplit};
use crate::tier1::{detect_candidates, score_candidates, train_committee, Candidate, CommitteeModel, Label};
use crate::views::{draw_views, extract_patch, extract_views, ViewProvenance, ViewSampleConfig};
use crate::volume::{build_phantom, read_lesions, read_volume, write_lesions, write_volume, Volume};
use crate::{child_seed, par, Error, Result};

/// One training example: a view of a candidate of a patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleRef {
    pub patient: usize,
    /// Position in the patient's candidate list.
    pub candidate: usize,
    /// Position in the candidate's training views.
    pub view: usize,
}

/// The balanced training set of one fold, before patch extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub examples: Vec<ExampleRef>,
    pub labels: Vec<bool>,
    /// (positives, negatives) before balancing.
    pub before_balance: (usize, usize),
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

/// Everything a stage needs about one patient.
struct PatientData {
    volume: Volume,
    candidates: Vec<Candidate>,
    views: Vec<CandidateViews>,
}

impl Experiment {
    fn manifest(&self) -> Result<Manifest> {
        self.read_stamped(&self.path("data/manifest.json"), "gen-data")
    }

    /// The patient-level fold split written by `tier1`.
    pub fn fold_split(&self) -> Result<FoldSplit> {
        self.read_stamped(&self.path("folds.json"), "tier1")
    }

    /// Labeled, tier-1-scored candidates of one patient.
    pub fn candidates(&self, patient: usize) -> Result<Vec<Candidate>> {
        Ok(self.patient_candidates(patient)?.candidates)
    }

    /// Fused scores of the held-out candidates of one fold.
    pub fn test_scores(&self, fold: usize) -> Result<Vec<CandidateScore>> {
        Ok(self.read_stamped::<FoldScores>(&self.scores_path(fold), "evaluate")?.test)
    }

    fn volume(&self, p: usize) -> Result<Volume> {
        let path = self.volume_path(p);
        self.require(&path, "gen-data")?;
        read_volume(path)
    }

    fn patient_candidates(&self, p: usize) -> Result<PatientCandidates> {
        self.read_stamped(&self.candidates_path(p), "tier1")
    }

    fn patient_data(&self, p: usize) -> Result<PatientData> {
        let candidates = self.patient_candidates(p)?.candidates;
        let views: PatientViews = self.read_stamped(&self.views_path(p), "sample-views")?;
        if views.candidates.len() != candidates.len() {
            return Err(Error::InvalidConfig(format!("views of patient {p} do not match its candidates")));
        }
        Ok(PatientData {
            volume: self.volume(p)?,
            candidates,
            views: views.candidates,
        })
    }

    /// Generates every phantom and writes `data/` plus `config.json`.
    pub fn gen_data(&self) -> Result<()> {
        let t = Instant::now();
        let run = || -> Result<usize> {
            fs::create_dir_all(self.path("data"))?;
            self.write_stamped(&self.path("config.json"), &self.cfg)?;
            let suite = &self.cfg.suite;
            let ids: Vec<usize> = (0..suite.patients()).collect();
            let patients = par::try_map(&ids, |&p| -> Result<PatientInfo> {
                let ph = build_phantom(&suite.phantom_spec(p, self.cfg.seed))?;
                write_volume(&ph.volume, self.volume_path(p))?;
                write_lesions(&ph.lesions, self.lesions_path(p))?;
                Ok(PatientInfo {
                    id: p,
                    control: suite.is_control(p),
                    lesions: ph.lesions.iter().filter(|l| l.is_evaluable()).count(),
                })
            })?;
            let total = patients.iter().map(|p| p.lesions).sum();
            self.write_stamped(&self.path("data/manifest.json"), &Manifest { patients })?;
            Ok(total)
        };
        let lesions = run().map_err(|e| e.in_stage("gen-data", None))?;
        self.log("gen-data", None, t.elapsed().as_secs_f64(), serde_json::json!({ "lesions": lesions }))
    }

    /// Detects and labels candidates, splits folds, trains one committee per
    /// fold on its training patients and scores the held-out patients.
    pub fn tier1(&self) -> Result<()> {
        let t = Instant::now();
        let manifest = self.manifest().map_err(|e| e.in_stage("tier1", None))?;
        let ids: Vec<usize> = manifest.patients.iter().map(|p| p.id).collect();
        let detected = par::try_map(&ids, |&p| -> Result<Vec<Candidate>> {
            let v = self.volume(p)?;
            let lesions: Vec<_> = read_lesions(self.lesions_path(p))?
                .into_iter()
                .filter(|l| l.is_evaluable())
                .collect();
            let mut cands = detect_candidates(&v, &self.cfg.tier1)?;
            match_candidates(&mut cands, &lesions, &v, &self.cfg.match_rule)?;
            Ok(cands)
        })
        .map_err(|e| e.in_stage("tier1", None))?;

        let split = crate::eval::split_folds(&ids, self.cfg.folds, child_seed!(self.cfg.seed, "folds"))
            .map_err(|e| e.in_stage("tier1", None))?;
        self.write_stamped(&self.path("folds.json"), &split)?;
        let mut emitted = 0;
        for fold in 0..split.k() {
            let train = split.train(fold);
            let (mut x, mut y) = (Vec::new(), Vec::new());
            for &p in &train {
                for c in &detected[p] {
                    x.push(c.features.to_vec());
                    y.push(c.label == Label::TrueLesion);
                }
            }
            let model = train_committee(&x, &y, &self.cfg.tier1.committee, child_seed!(self.cfg.seed, "committee", fold))
                .map_err(|e| e.in_stage("tier1", Some(fold)))?;
            self.write_stamped(&self.path(format!("tier1/committee_fold{fold}.json")), &model)?;
            for &p in split.test(fold) {
                let candidates = score_candidates(detected[p].clone(), &model, self.cfg.tier1.operating_threshold);
                emitted += candidates.len();
                self.write_stamped(&self.candidates_path(p), &PatientCandidates { patient: p, fold, candidates })?;
            }
        }
        self.log("tier1", None, t.elapsed().as_secs_f64(), serde_json::json!({ "candidates": emitted }))
    }

    /// Reads the committee of one fold.
    pub fn committee(&self, fold: usize) -> Result<CommitteeModel> {
        self.read_stamped(&self.path(format!("tier1/committee_fold{fold}.json")), "tier1")
    }

    /// Draws training and test view parameters for every candidate.
    pub fn sample_views(&self) -> Result<()> {
        let t = Instant::now();
        let run = || -> Result<usize> {
            let manifest = self.manifest()?;
            let mut total = 0;
            for info in &manifest.patients {
                let p = info.id;
                let cands = self.patient_candidates(p)?.candidates;
                let seed = self.cfg.seed;
                let candidates = cands
                    .iter()
                    .map(|c| CandidateViews {
                        candidate_id: c.id,
                        train: draw_views(&self.cfg.train_views, child_seed!(seed, "views", "train", p, c.id)),
                        test: draw_views(&self.cfg.views, child_seed!(seed, "views", "test", p, c.id)),
                    })
                    .collect::<Vec<_>>();
                total += candidates.len();
                self.write_stamped(&self.views_path(p), &PatientViews { patient: p, candidates })?;
            }
            Ok(total)
        };
        let n = run().map_err(|e| e.in_stage("sample-views", None))?;
        self.log("sample-views", None, t.elapsed().as_secs_f64(), serde_json::json!({ "candidates": n }))
    }

    /// The balanced training examples of `fold`: every training view of
    /// every candidate of the fold's training patients, with the minority
    /// class oversampled to a 50/50 split.
    pub fn training_set(&self, fold: usize) -> Result<TrainingSet> {
        let split = self.fold_split()?;
        let mut examples = Vec::new();
        let mut labels = Vec::new();
        for p in split.train(fold) {
            let cands = self.patient_candidates(p)?.candidates;
            let views: PatientViews = self.read_stamped(&self.views_path(p), "sample-views")?;
            for (ci, (c, v)) in cands.iter().zip(&views.candidates).enumerate() {
                for view in 0..v.train.len() {
                    examples.push(ExampleRef { patient: p, candidate: ci, view });
                    labels.push(c.label == Label::TrueLesion);
                }
            }
        }
        let before_balance = class_counts(&labels);
        let idx = balance_indices(&labels, child_seed!(self.cfg.seed, "balance", fold))?;
        Ok(TrainingSet {
            examples: idx.iter().map(|&i| examples[i]).collect(),
            labels: idx.iter().map(|&i| labels[i]).collect(),
            before_balance,
        })
    }

    /// Trains one CNN per requested fold on its balanced training patches.
    pub fn train(&self, folds: Option<&[usize]>) -> Result<()> {
        for fold in self.fold_list(folds)? {
            let t = Instant::now();
            let record = self.train_fold(fold).map_err(|e| e.in_stage("train", Some(fold)))?;
            self.log(
                "train",
                Some(fold),
                t.elapsed().as_secs_f64(),
                serde_json::json!({ "examples": record.after_balance, "final_loss": record.epochs.last().map(|e| e.mean_loss) }),
            )?;
        }
        Ok(())
    }

    fn train_fold(&self, fold: usize) -> Result<TrainRecord> {
        let set = self.training_set(fold)?;
        let split = self.fold_split()?;
        let patients = split.train(fold);
        let data: Vec<PatientData> = patients.iter().map(|&p| self.patient_data(p)).collect::<Result<_>>()?;
        let slot = |p: usize| patients.binary_search(&p).expect("training patient");
        // extract each distinct example once; oversampled copies share pixels
        let mut unique: Vec<ExampleRef> = set.examples.clone();
        unique.sort_unstable_by_key(|e| (e.patient, e.candidate, e.view));
        unique.dedup();
        let cfg = &self.cfg.train_views;
        let pixels = par::try_map(&unique, |e| -> Result<Vec<f32>> {
            let d = &data[slot(e.patient)];
            let c = &d.candidates[e.candidate];
            Ok(extract_patch(&d.volume, c.id, c.centroid, d.views[e.candidate].train[e.view], cfg.patch_px, cfg.channels)?.pixels)
        })?;
        drop(data);
        let rows: Vec<&[f32]> = set
            .examples
            .iter()
            .map(|e| pixels[unique.binary_search_by_key(&(e.patient, e.candidate, e.view), |u| (u.patient, u.candidate, u.view)).expect("extracted")].as_slice())
            .collect();
        let tcfg = TrainConfig {
            seed: child_seed!(self.cfg.seed, "train", fold),
            ..self.cfg.train.clone()
        };
        let mut epochs = Vec::new();
        let params = train_sgd_with(&self.cfg.network, &rows, &set.labels, &tcfg, |s| epochs.push(s.clone()))?;
        fs::create_dir_all(self.path("models"))?;
        save_model(self.model_path(fold), &self.cfg.network, &params, Some(&self.hash))?;
        let record = TrainRecord {
            fold,
            patients,
            before_balance: set.before_balance,
            after_balance: class_counts(&set.labels),
            epochs,
        };
        self.write_stamped(&self.record_path(fold), &record)?;
        Ok(record)
    }

    /// Reads the training record of one fold.
    pub fn train_record(&self, fold: usize) -> Result<TrainRecord> {
        self.read_stamped(&self.record_path(fold), "train")
    }

    /// Scores held-out candidates with fresh test views, and training
    /// candidates with their training views, using each fold's model.
    pub fn evaluate(&self, folds: Option<&[usize]>) -> Result<()> {
        for fold in self.fold_list(folds)? {
            let t = Instant::now();
            let n = self.evaluate_fold(fold).map_err(|e| e.in_stage("evaluate", Some(fold)))?;
            self.log("evaluate", Some(fold), t.elapsed().as_secs_f64(), serde_json::json!({ "test_candidates": n }))?;
        }
        Ok(())
    }

    fn evaluate_fold(&self, fold: usize) -> Result<usize> {
        let path = self.model_path(fold);
        self.require(&path, "train")?;
        let saved = load_model(&path)?;
        self.check_hash(&path, saved.config_hash.as_deref())?;
        let split = self.fold_split()?;
        let score = |patients: &[usize], test: bool| -> Result<Vec<CandidateScore>> {
            let mut out = Vec::new();
            for &p in patients {
                let d = self.patient_data(p)?;
                let (cfg, pick): (&ViewSampleConfig, fn(&CandidateViews) -> &[ViewProvenance]) = if test {
                    (&self.cfg.views, |v| &v.test)
                } else {
                    (&self.cfg.train_views, |v| &v.train)
                };
                for (c, v) in d.candidates.iter().zip(&d.views) {
                    let patches = extract_views(&d.volume, c, pick(v), cfg)?;
                    let rows: Vec<&[f32]> = patches.iter().map(|x| x.pixels.as_slice()).collect();
                    let probs = predict_batch(&saved.spec, &saved.params, &rows)?;
                    out.push(CandidateScore::new(c, p, probs)?);
                }
            }
            Ok(out)
        };
        let test = score(split.test(fold), true)?;
        let train = score(&split.train(fold), false)?;
        let n = test.len();
        self.write_stamped(&self.scores_path(fold), &FoldScores { fold, test, train })?;
        Ok(n)
    }
}
