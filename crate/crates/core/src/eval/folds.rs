//! Patient-level cross-validation folds and class balancing.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

/// A partition of patient ids into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub folds: Vec<Vec<usize>>,
}

impl FoldSplit {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Held-out patients of fold `i`.
    pub fn test(&self, i: usize) -> &[usize] {
        &self.folds[i]
    }

    /// Every patient outside fold `i`, ascending.
    pub fn train(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn fold_of(&self, patient: usize) -> Option<usize> {
        self.folds.iter().position(|f| f.contains(&patient))
    }
}

/// Seeded shuffle followed by round-robin assignment, so fold sizes differ by
/// at most one. Each fold lists its patients in ascending order.
pub fn split_folds(patients: &[usize], k: usize, seed: u64) -> Result<FoldSplit> {
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one fold".into()));
    }
    if patients.iter().collect::<BTreeSet<_>>().len() != patients.len() {
        return Err(Error::InvalidConfig("duplicate patient ids".into()));
    }
    if patients.len() < k {
        return Err(Error::TooFewPatients {
            patients: patients.len(),
            folds: k,
        });
    }
    let mut order = patients.to_vec();
    order.sort_unstable();
    order.shuffle(&mut seed::rng(seed));
    let mut folds = vec![Vec::new(); k];
    for (j, p) in order.into_iter().enumerate() {
        folds[j % k].push(p);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(FoldSplit { folds })
}

/// Indices of a class-balanced training set: every original index once, in
/// order, followed by minority-class indices drawn with replacement until
/// both classes have equal counts.
pub fn balance_indices(labels: &[bool], seed: u64) -> Result<Vec<usize>> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass);
    }
    let (minority, deficit) = if pos.len() < neg.len() {
        (&pos, neg.len() - pos.len())
    } else {
        (&neg, pos.len() - neg.len())
    };
    let mut rng = seed::rng(seed);
    let mut out: Vec<usize> = (0..labels.len()).collect();
    out.extend((0..deficit).map(|_| minority[rng.gen_range(0..minority.len())]));
    Ok(out)
}

/// Oversamples the minority class of `(items, labels)` to a 50/50 split.
pub fn balance_training<T: Clone>(items: &[T], labels: &[bool], seed: u64) -> Result<(Vec<T>, Vec<bool>)> {
    if items.len() != labels.len() {
        return Err(Error::InvalidConfig("items and labels differ in length".into()));
    }
    let idx = balance_indices(labels, seed)?;
    Ok((idx.iter().map(|&i| items[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect()))
}
