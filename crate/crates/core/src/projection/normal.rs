//! Distance to the normal-range box and min-max trust scores.
//!
//! The normal set is the unit box in solve-space, so its projection is a
//! componentwise clamp.

use serde::{Deserialize, Serialize};

use crate::constraints::var_index;

pub fn clamp_unit(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// Per-vital `sum_t (x - clamp(x, 0, 1))^2` of a window laid out by `var_index`.
pub fn project_normal(x: &[f64], n_vitals: usize, window_len: usize) -> Vec<f64> {
    assert_eq!(x.len(), n_vitals * window_len, "window dimension");
    (0..n_vitals)
        .map(|v| {
            (0..window_len)
                .map(|t| {
                    let xi = x[var_index(v, t, window_len)];
                    let e = xi - xi.clamp(0.0, 1.0);
                    e * e
                })
                .sum()
        })
        .collect()
}

/// Per-vital minimum and maximum of the training distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl TrustStats {
    /// Needs at least one row; every row must have the same length.
    pub fn fit(dists: &[Vec<f64>]) -> Self {
        let width = dists.first().map_or(0, Vec::len);
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for row in dists {
            assert_eq!(row.len(), width, "ragged distance table");
            for (j, &d) in row.iter().enumerate() {
                min[j] = min[j].min(d);
                max[j] = max[j].max(d);
            }
        }
        Self { min, max }
    }

    /// Scaled into `[0, 1]`; values outside the fitted range are clipped and
    /// a constant training column maps to 0.
    pub fn apply(&self, dist: &[f64]) -> Vec<f64> {
        dist.iter()
            .enumerate()
            .map(|(j, &d)| {
                let span = self.max[j] - self.min[j];
                if span > 0.0 {
                    ((d - self.min[j]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Fits on `dists` and scales them.
pub fn normalize_trust(dists: &[Vec<f64>]) -> (TrustStats, Vec<Vec<f64>>) {
    let stats = TrustStats::fit(dists);
    let scaled = dists.iter().map(|d| stats.apply(d)).collect();
    (stats, scaled)
}
