//! Gradient-boosted regression trees on the logistic loss with exact greedy
//! splits and second-order leaf weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GbtError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("no training samples")]
    Empty,
    #[error("invalid hyperparameter: {0}")]
    Params(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub max_depth: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { max_depth: 4, rounds: 200, learning_rate: 0.1, min_child_weight: 1.0, lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Tree {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: Box<Tree>, right: Box<Tree> },
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Tree::Leaf { value } => return *value,
                Tree::Split { feature, threshold, left, right } => {
                    node = if x[*feature] < *threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    /// Number of splits on each feature across all trees.
    pub split_count: Vec<u64>,
    /// Summed loss reduction of those splits.
    pub gain: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss of margin `z` for label `y`.
pub fn logistic_loss(z: f64, y: f64) -> f64 {
    // log(1 + e^z) - y z, written to avoid overflow.
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

/// First and second derivative of [`logistic_loss`] in the margin.
pub fn grad_hess(z: f64, y: f64) -> (f64, f64) {
    let p = sigmoid(z);
    (p - y, (p * (1.0 - p)).max(1e-16))
}

impl Ensemble {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbtParams,
    split_count: &'a mut [u64],
    gain: &'a mut [f64],
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.lambda)
    }

    fn best_split(&self, idx: &[usize], g_tot: f64, h_tot: f64) -> Option<Best> {
        let dim = self.x[0].len();
        let parent = self.score(g_tot, h_tot);
        let per_feature: Vec<Option<Best>> = (0..dim)
            .into_par_iter()
            .map(|f| {
                let mut order: Vec<usize> = idx.to_vec();
                order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
                let (mut gl, mut hl) = (0.0, 0.0);
                let mut best: Option<Best> = None;
                for w in 0..order.len() - 1 {
                    let i = order[w];
                    gl += self.grad[i];
                    hl += self.hess[i];
                    let (lo, hi) = (self.x[i][f], self.x[order[w + 1]][f]);
                    if lo == hi {
                        continue;
                    }
                    let hr = h_tot - hl;
                    if hl < self.params.min_child_weight || hr < self.params.min_child_weight {
                        continue;
                    }
                    let gain = 0.5 * (self.score(gl, hl) + self.score(g_tot - gl, hr) - parent);
                    if best.as_ref().is_none_or(|b| gain > b.gain) {
                        let mut threshold = 0.5 * (lo + hi);
                        if threshold <= lo {
                            threshold = hi;
                        }
                        best = Some(Best { gain, feature: f, threshold });
                    }
                }
                best
            })
            .collect();
        // Sequential reduction keeps ties on the lowest feature index.
        per_feature.into_iter().flatten().fold(None, |acc: Option<Best>, b| match acc {
            Some(a) if a.gain >= b.gain => Some(a),
            _ => Some(b),
        })
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> Tree {
        let g: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = idx.iter().map(|&i| self.hess[i]).sum();
        let leaf = Tree::Leaf { value: -self.params.learning_rate * g / (h + self.params.lambda) };
        if depth >= self.params.max_depth || idx.len() < 2 {
            return leaf;
        }
        match self.best_split(idx, g, h) {
            Some(b) if b.gain > 1e-12 => {
                self.split_count[b.feature] += 1;
                self.gain[b.feature] += b.gain;
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][b.feature] < b.threshold);
                let left = Box::new(self.grow(&l, depth + 1));
                let right = Box::new(self.grow(&r, depth + 1));
                Tree::Split { feature: b.feature, threshold: b.threshold, left, right }
            }
            _ => leaf,
        }
    }
}

pub fn gbt_train(x: &[Vec<f64>], y: &[u8], params: &GbtParams) -> Result<Ensemble, GbtError> {
    if x.is_empty() {
        return Err(GbtError::Empty);
    }
    if !(params.learning_rate > 0.0) {
        return Err(GbtError::Params("learning_rate must be positive"));
    }
    if !(params.lambda >= 0.0) || !(params.min_child_weight >= 0.0) {
        return Err(GbtError::Params("lambda and min_child_weight must be non-negative"));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(GbtError::SingleClass);
    }
    let rate = pos as f64 / y.len() as f64;
    let base_score = (rate / (1.0 - rate)).ln();
    let dim = x[0].len();
    let yf: Vec<f64> = y.iter().map(|&l| f64::from(l)).collect();
    let mut margin = vec![base_score; x.len()];
    let mut ens = Ensemble { base_score, trees: Vec::new(), split_count: vec![0; dim], gain: vec![0.0; dim] };
    let all: Vec<usize> = (0..x.len()).collect();
    for _ in 0..params.rounds {
        let (grad, hess): (Vec<f64>, Vec<f64>) = margin.iter().zip(&yf).map(|(&z, &t)| grad_hess(z, t)).unzip();
        let mut grower =
            Grower { x, grad: &grad, hess: &hess, params, split_count: &mut ens.split_count, gain: &mut ens.gain };
        let tree = grower.grow(&all, 0);
        for (m, p) in margin.iter_mut().zip(x) {
            *m += tree.predict(p);
        }
        ens.trees.push(tree);
    }
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separable_in_five_rounds() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 39.0]).collect();
        let y: Vec<u8> = x.iter().map(|p| u8::from(p[0] > 0.5)).collect();
        let params = GbtParams { rounds: 5, ..GbtParams::default() };
        let ens = gbt_train(&x, &y, &params).unwrap();
        let acc = x.iter().zip(&y).filter(|(p, &l)| u8::from(ens.predict_proba(p) >= 0.5) == l).count();
        assert_eq!(acc, x.len());
        assert_eq!(ens.split_count[0] as usize, ens.trees.iter().map(count_splits).sum::<usize>());
    }

    fn count_splits(t: &Tree) -> usize {
        match t {
            Tree::Leaf { .. } => 0,
            Tree::Split { left, right, .. } => 1 + count_splits(left) + count_splits(right),
        }
    }

    #[test]
    fn zero_rounds_is_base_rate() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![1, 0, 0, 0];
        let ens = gbt_train(&x, &y, &GbtParams { rounds: 0, ..GbtParams::default() }).unwrap();
        assert!((ens.base_score - (0.25f64 / 0.75).ln()).abs() < 1e-15);
        assert!((ens.predict_proba(&[7.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_class_rejected() {
        assert_eq!(gbt_train(&[vec![0.0], vec![1.0]], &[1, 1], &GbtParams::default()).unwrap_err(), GbtError::SingleClass);
    }

    #[test]
    fn depth_respected_and_deterministic() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![(i % 17) as f64, (i % 5) as f64, (i % 3) as f64]).collect();
        let y: Vec<u8> = x.iter().map(|p| u8::from(p[0] + 2.0 * p[1] > 12.0)).collect();
        let params = GbtParams { rounds: 20, max_depth: 2, ..GbtParams::default() };
        let a = gbt_train(&x, &y, &params).unwrap();
        let b = gbt_train(&x, &y, &params).unwrap();
        assert_eq!(a, b);
        fn depth(t: &Tree) -> usize {
            match t {
                Tree::Leaf { .. } => 0,
                Tree::Split { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        assert!(a.trees.iter().all(|t| depth(t) <= 2));
        assert_eq!(a.split_count[2], 0);
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(z in -8.0f64..8.0, label in 0u8..2) {
            let y = f64::from(label);
            let h = 1e-5;
            let (g, hs) = grad_hess(z, y);
            let fd_g = (logistic_loss(z + h, y) - logistic_loss(z - h, y)) / (2.0 * h);
            let fd_h = (grad_hess(z + h, y).0 - grad_hess(z - h, y).0) / (2.0 * h);
            prop_assert!((g - fd_g).abs() <= 1e-6, "{} {}", g, fd_g);
            prop_assert!((hs - fd_h).abs() <= 1e-6, "{} {}", hs, fd_h);
            prop_assert!((g - (sigmoid(z) - y)).abs() <= 1e-15);
        }
    }
}
