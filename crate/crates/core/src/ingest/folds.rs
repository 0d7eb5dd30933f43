use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::IngestError;

/// Subject-to-fold assignment. Every subject sits in exactly one fold and
/// fold sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
}

/// Subject sets for one rotation of the plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// Shuffles the distinct subjects with a seeded generator and deals them
/// round-robin into `k` folds.
pub fn make_folds<S: AsRef<str>>(subjects: &[S], k: usize, seed: u64) -> Result<FoldPlan, IngestError> {
    let mut unique: Vec<String> = subjects
        .iter()
        .map(|s| s.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if k == 0 || unique.len() < k {
        return Err(IngestError::TooFewSubjects { subjects: unique.len(), k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    unique.shuffle(&mut rng);
    let assignments = unique.into_iter().enumerate().map(|(i, s)| (s, i % k)).collect();
    Ok(FoldPlan { k, assignments })
}

impl FoldPlan {
    pub fn fold_of(&self, subject: &str) -> Option<usize> {
        self.assignments.get(subject).copied()
    }

    pub fn fold_subjects(&self, fold: usize) -> BTreeSet<String> {
        self.assignments
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(s, _)| s.clone())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for f in self.assignments.values() {
            sizes[*f] += 1;
        }
        sizes
    }

    /// Rotation `test_fold`: that fold is the test set, the next fold (mod
    /// k) is validation, the rest train. With fewer than three folds there
    /// is no validation fold.
    pub fn split(&self, test_fold: usize) -> Split {
        let val_fold = (self.k >= 3).then(|| (test_fold + 1) % self.k);
        let mut split = Split {
            train: BTreeSet::new(),
            validation: BTreeSet::new(),
            test: BTreeSet::new(),
        };
        for (s, &f) in &self.assignments {
            let set = if f == test_fold {
                &mut split.test
            } else if Some(f) == val_fold {
                &mut split.validation
            } else {
                &mut split.train
            };
            set.insert(s.clone());
        }
        split
    }
}
