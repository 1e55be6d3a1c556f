//! Patient-level train/test split, stratified by whether a patient is ever
//! septic.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("need at least 2 {class} patients to split, found {found}")]
    TooFewPatients { class: &'static str, found: usize },
    #[error("ratio {0} outside (0, 1)")]
    Ratio(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train_patients: BTreeSet<String>,
    pub test_patients: BTreeSet<String>,
    /// Indices into the input, in input order.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// `items` are `(patient_id, label)` per sub-patient. A patient is septic if
/// any of its windows is labeled 1. Each class is split `ratio : 1 - ratio`
/// by patient count, rounded to the nearest patient.
pub fn patient_split(items: &[(&str, u8)], ratio: f64, seed: u64) -> Result<Split, SplitError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(SplitError::Ratio(ratio));
    }
    let mut septic: BTreeMap<&str, bool> = BTreeMap::new();
    for &(pid, label) in items {
        *septic.entry(pid).or_default() |= label == 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_patients = BTreeSet::new();
    let mut test_patients = BTreeSet::new();
    for (class, flag) in [("septic", true), ("non-septic", false)] {
        let mut ids: Vec<&str> = septic.iter().filter(|(_, &s)| s == flag).map(|(&p, _)| p).collect();
        if ids.len() < 2 {
            return Err(SplitError::TooFewPatients { class, found: ids.len() });
        }
        ids.shuffle(&mut rng);
        let n_train = ((ids.len() as f64 * ratio).round() as usize).clamp(1, ids.len() - 1);
        train_patients.extend(ids[..n_train].iter().map(|s| s.to_string()));
        test_patients.extend(ids[n_train..].iter().map(|s| s.to_string()));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, &(pid, _)) in items.iter().enumerate() {
        if train_patients.contains(pid) {
            train.push(i);
        } else {
            test.push(i);
        }
    }
    Ok(Split { train_patients, test_patients, train, test })
}
