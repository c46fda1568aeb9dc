use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cnn::{NetworkSpec, TrainConfig};
use crate::eval::MatchRule;
use crate::tier1::Tier1Config;
use crate::views::ViewSampleConfig;
use crate::volume::PhantomSpec;
use crate::{child_seed, Error, Result};

/// The phantom population: patients `0..lesion_patients` carry lesions, the
/// remaining ones are lesion-free controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub lesion_patients: usize,
    pub control_patients: usize,
    /// Template for every phantom; the seed is replaced per patient and
    /// controls get `lesion_count = 0`.
    pub phantom: PhantomSpec,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            lesion_patients: 40,
            control_patients: 10,
            phantom: PhantomSpec::default(),
        }
    }
}

impl SuiteConfig {
    pub fn patients(&self) -> usize {
        self.lesion_patients + self.control_patients
    }

    pub fn is_control(&self, patient: usize) -> bool {
        patient >= self.lesion_patients
    }

    pub fn phantom_spec(&self, patient: usize, master_seed: u64) -> PhantomSpec {
        let mut spec = self.phantom.clone();
        spec.seed = child_seed!(master_seed, "phantom", patient);
        if self.is_control(patient) {
            spec.lesion_count = 0;
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub suite: SuiteConfig,
    pub tier1: Tier1Config,
    /// Views drawn per held-out candidate.
    pub views: ViewSampleConfig,
    /// Views drawn per training candidate (before balancing).
    pub train_views: ViewSampleConfig,
    pub network: NetworkSpec,
    /// `train.seed` is ignored: each fold's training seed derives from
    /// `seed`.
    pub train: TrainConfig,
    pub match_rule: MatchRule,
    pub folds: usize,
    /// View counts evaluated by the report, each at most `views`' N.
    pub n_ablation: Vec<usize>,
    pub seed: u64,
    /// Default output directory; not part of the configuration hash.
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            suite: SuiteConfig::default(),
            tier1: Tier1Config::default(),
            views: ViewSampleConfig::default(),
            train_views: ViewSampleConfig {
                n_translations: 2,
                n_rotations: 3,
                ..ViewSampleConfig::default()
            },
            network: NetworkSpec::reference(),
            train: TrainConfig {
                epochs: 12,
                ..TrainConfig::default()
            },
            match_rule: MatchRule::default(),
            folds: 5,
            n_ablation: vec![1, 5, 10, 25, 50, 100],
            seed: 0,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Checks every nested configuration before any compute happens.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.suite.lesion_patients == 0 {
            return bad("the suite needs at least one patient with lesions".into());
        }
        self.suite.phantom.validate()?;
        if self.folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.folds));
        }
        if self.folds > self.suite.patients() {
            return Err(Error::TooFewPatients {
                patients: self.suite.patients(),
                folds: self.folds,
            });
        }
        self.views.validate()?;
        self.train_views.validate()?;
        self.network.shapes()?;
        for v in [&self.views, &self.train_views] {
            let expect = [v.channels, v.patch_px, v.patch_px];
            if self.network.input != expect {
                return bad(format!("network input {:?} does not match {expect:?} views", self.network.input));
            }
        }
        self.train.validate()?;
        self.match_rule.validate()?;
        let n = self.views.views_per_candidate();
        if self.n_ablation.is_empty() || self.n_ablation.iter().any(|&a| a == 0 || a > n) {
            return bad(format!("ablation view counts {:?} must lie in 1..={n}", self.n_ablation));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, excluding `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.views.views_per_candidate(), 100);
        assert_eq!(c.suite.patients(), 50);
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn validation_errors() {
        let mut c = ExperimentConfig::default();
        c.folds = 51;
        assert!(matches!(c.validate(), Err(Error::TooFewPatients { .. })));
        let mut c = ExperimentConfig::default();
        c.n_ablation = vec![101];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.views.patch_px = 16;
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = ExperimentConfig::from_json(r#"{"folds": 3, "suite": {"lesion_patients": 6}}"#).unwrap();
        assert_eq!(c.folds, 3);
        assert_eq!(c.suite.lesion_patients, 6);
        assert_eq!(c.suite.control_patients, 10);
        assert_eq!(c.network, NetworkSpec::reference());
    }
}
