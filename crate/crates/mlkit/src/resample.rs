//! Random undersampling of the majority class followed by SMOTE
//! oversampling of the minority class.
//!
//! Schedule for a target minority fraction `f`: the minority target is
//! `m* = min(floor(M f / (1 - f)), cap * m)` where `M` and `m` are the
//! majority and minority counts. The majority is undersampled to
//! `round(m* (1 - f) / f)`, then the minority is SMOTE-upsampled to `m*`
//! (or undersampled, if it already exceeds it).

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("minority class has {count} samples; SMOTE needs more than k = {k}, try a smaller k")]
    TooFewMinority { count: usize, k: usize },
    #[error("minority fraction {0} outside (0, 0.5]")]
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResampleParams {
    pub minority_frac: f64,
    pub smote_k: usize,
    /// Largest minority growth factor allowed through SMOTE.
    pub upsample_cap: f64,
}

impl Default for ResampleParams {
    fn default() -> Self {
        Self { minority_frac: 0.25, smote_k: 5, upsample_cap: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Origin {
    /// Row `i` of the input.
    Original(usize),
    /// `lambda * x[a] + (1 - lambda) * x[b]`, indices into the input.
    Synthetic { a: usize, b: usize, lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    pub origin: Vec<Origin>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// `lambda * a + (1 - lambda) * b`
pub fn interpolate(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect()
}

/// Counts after resampling: `(minority, majority)`.
pub fn target_counts(minority: usize, majority: usize, params: &ResampleParams) -> (usize, usize) {
    let f = params.minority_frac;
    let by_majority = (majority as f64 * f / (1.0 - f)).floor() as usize;
    let by_cap = (minority as f64 * params.upsample_cap).floor() as usize;
    let m_star = by_majority.min(by_cap).max(1);
    let maj = ((m_star as f64 * (1.0 - f) / f).round() as usize).min(majority);
    (m_star, maj)
}

/// `k` nearest minority neighbours (by index into `members`) of each member.
fn neighbours(x: &[Vec<f64>], members: &[usize], k: usize) -> Vec<Vec<usize>> {
    members
        .par_iter()
        .map(|&i| {
            let mut d: Vec<(f64, usize)> =
                members.iter().enumerate().filter(|&(_, &j)| j != i).map(|(p, &j)| (sq_dist(&x[i], &x[j]), p)).collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, p)| p).collect()
        })
        .collect()
}

pub fn resample(x: &[Vec<f64>], y: &[u8], params: &ResampleParams, seed: u64) -> Result<Resampled, ResampleError> {
    if !(params.minority_frac > 0.0 && params.minority_frac <= 0.5) {
        return Err(ResampleError::Fraction(params.minority_frac));
    }
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] != 1).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(ResampleError::SingleClass);
    }
    let (min_label, minority, majority) = if pos.len() <= neg.len() { (1u8, pos, neg) } else { (0u8, neg, pos) };
    if minority.len() <= params.smote_k {
        return Err(ResampleError::TooFewMinority { count: minority.len(), k: params.smote_k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m_star, maj_target) = target_counts(minority.len(), majority.len(), params);

    let mut maj_keep = majority.clone();
    maj_keep.shuffle(&mut rng);
    maj_keep.truncate(maj_target);
    maj_keep.sort_unstable();

    let mut min_keep = minority.clone();
    let mut synthetic = Vec::new();
    if m_star < minority.len() {
        min_keep.shuffle(&mut rng);
        min_keep.truncate(m_star);
        min_keep.sort_unstable();
    } else if m_star > minority.len() {
        let nn = neighbours(x, &minority, params.smote_k);
        for _ in 0..m_star - minority.len() {
            let pa = rng.random_range(0..minority.len());
            let pb = *nn[pa].choose(&mut rng).expect("k >= 1 neighbours");
            let lambda: f64 = rng.random_range(0.0..=1.0);
            synthetic.push(Origin::Synthetic { a: minority[pa], b: minority[pb], lambda });
        }
    }

    let mut out = Resampled { x: Vec::new(), y: Vec::new(), origin: Vec::new() };
    for &i in &maj_keep {
        out.x.push(x[i].clone());
        out.y.push(1 - min_label);
        out.origin.push(Origin::Original(i));
    }
    for &i in &min_keep {
        out.x.push(x[i].clone());
        out.y.push(min_label);
        out.origin.push(Origin::Original(i));
    }
    for o in synthetic {
        let Origin::Synthetic { a, b, lambda } = o else { unreachable!() };
        out.x.push(interpolate(&x[a], &x[b], lambda));
        out.y.push(min_label);
        out.origin.push(o);
    }
    Ok(out)
}
