//! Cluster-then-predict: resample, standardize, k-means, then one boosted
//! ensemble and one f-score threshold per cluster.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use clinproj::projection::TrustStats;

use crate::features::{FeatureLayout, WindowInput};
use crate::gbt::{gbt_train, Ensemble, GbtError, GbtParams};
use crate::kmeans::{kmeans_fit, nearest};
use crate::metrics::{select_threshold, MetricsError};
use crate::resample::{resample, ResampleError, ResampleParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no training windows")]
    Empty,
    #[error("window {0} has no trust distances but the layout needs them")]
    MissingTrust(String),
    #[error("window {sub_id}: {got} values, layout expects {expected}")]
    Dimension { sub_id: String, expected: usize, got: usize },
    #[error("resampling: {0}")]
    Resample(#[from] ResampleError),
    #[error("cluster {cluster}: {source}")]
    Gbt { cluster: usize, source: GbtError },
    #[error("cluster {cluster}: {source}")]
    Threshold { cluster: usize, source: MetricsError },
    #[error("k = {k} but only {n} resampled windows")]
    TooFewForK { k: usize, n: usize },
    #[error("artifact: {0}")]
    Artifact(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub k: usize,
    pub kmeans_restarts: usize,
    pub resample: ResampleParams,
    pub gbt: GbtParams,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self { k: 25, kmeans_restarts: 3, resample: ResampleParams::default(), gbt: GbtParams::default() }
    }
}

/// Per-feature standardization fitted on the resampled training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let n = x.len() as f64;
        let dim = x[0].len();
        let mean: Vec<f64> = (0..dim).map(|d| x.iter().map(|r| r[d]).sum::<f64>() / n).collect();
        let scale = (0..dim)
            .map(|d| {
                let var = x.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Boosted(Ensemble),
    /// Used when a cluster holds one class only: predicts that class.
    Constant { probability: f64 },
}

impl Classifier {
    pub fn probability(&self, x: &[f64]) -> f64 {
        match self {
            Classifier::Boosted(e) => e.predict_proba(x),
            Classifier::Constant { probability } => *probability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPredictor {
    pub classifier: Classifier,
    pub threshold: f64,
    pub n_train: usize,
    pub n_positive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub params: PipelineParams,
    pub layout: FeatureLayout,
    pub n_windows: usize,
    pub n_resampled: usize,
    pub fallback_clusters: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineModel {
    pub schema_version: u32,
    pub registry_fingerprint: String,
    pub trust: Option<TrustStats>,
    pub scaler: Scaler,
    pub centers: Vec<Vec<f64>>,
    pub clusters: Vec<ClusterPredictor>,
    pub manifest: Manifest,
}

/// Raw feature vector of one window, trust scaled with `trust` if present.
pub fn featurize(layout: &FeatureLayout, trust: Option<&TrustStats>, w: &WindowInput) -> Result<Vec<f64>, PipelineError> {
    if w.values.len() != layout.n_vitals * layout.window {
        return Err(PipelineError::Dimension {
            sub_id: w.sub_id.clone(),
            expected: layout.n_vitals * layout.window,
            got: w.values.len(),
        });
    }
    let scaled = match (layout.with_trust, trust) {
        (true, Some(stats)) => {
            let d = w.norm_dist.as_ref().ok_or_else(|| PipelineError::MissingTrust(w.sub_id.clone()))?;
            Some(stats.apply(d))
        }
        _ => None,
    };
    Ok(layout.build(&w.values, scaled.as_deref(), w.age, w.gender, w.sofa, w.sirs))
}

pub fn train_pipeline(
    windows: &[WindowInput],
    layout: FeatureLayout,
    registry_fingerprint: &str,
    params: &PipelineParams,
    seed: u64,
) -> Result<PipelineModel, PipelineError> {
    if windows.is_empty() {
        return Err(PipelineError::Empty);
    }
    let trust = if layout.with_trust {
        let dists = windows
            .iter()
            .map(|w| w.norm_dist.clone().ok_or_else(|| PipelineError::MissingTrust(w.sub_id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Some(TrustStats::fit(&dists))
    } else {
        None
    };
    let x = windows.iter().map(|w| featurize(&layout, trust.as_ref(), w)).collect::<Result<Vec<_>, _>>()?;
    let y: Vec<u8> = windows.iter().map(|w| w.label).collect();

    let res = resample(&x, &y, &params.resample, seed)?;
    if res.x.len() < params.k || params.k == 0 {
        return Err(PipelineError::TooFewForK { k: params.k, n: res.x.len() });
    }
    let scaler = Scaler::fit(&res.x);
    let z: Vec<Vec<f64>> = res.x.iter().map(|r| scaler.apply(r)).collect();
    let km = kmeans_fit(&z, params.k, params.kmeans_restarts, seed.wrapping_add(1));
    let assign: Vec<usize> = z.iter().map(|p| nearest(&km.centers, p)).collect();

    let clusters = (0..params.k)
        .into_par_iter()
        .map(|c| {
            let idx: Vec<usize> = (0..z.len()).filter(|&i| assign[i] == c).collect();
            let cx: Vec<Vec<f64>> = idx.iter().map(|&i| res.x[i].clone()).collect();
            let cy: Vec<u8> = idx.iter().map(|&i| res.y[i]).collect();
            let n_positive = cy.iter().filter(|&&l| l == 1).count();
            if n_positive == 0 || n_positive == cy.len() {
                // The cluster's only class; for an empty cluster, negative.
                let probability = if n_positive > 0 { 1.0 } else { 0.0 };
                return Ok(ClusterPredictor {
                    classifier: Classifier::Constant { probability },
                    threshold: 0.5,
                    n_train: cy.len(),
                    n_positive,
                });
            }
            let ens = gbt_train(&cx, &cy, &params.gbt).map_err(|source| PipelineError::Gbt { cluster: c, source })?;
            let probs: Vec<f64> = cx.iter().map(|r| ens.predict_proba(r)).collect();
            let threshold =
                select_threshold(&probs, &cy).map_err(|source| PipelineError::Threshold { cluster: c, source })?;
            Ok(ClusterPredictor { classifier: Classifier::Boosted(ens), threshold, n_train: cy.len(), n_positive })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let fallback_clusters: Vec<usize> =
        (0..params.k).filter(|&c| matches!(clusters[c].classifier, Classifier::Constant { .. })).collect();
    for &c in &fallback_clusters {
        log::warn!("cluster {c} holds a single class; using a constant model");
    }

    Ok(PipelineModel {
        schema_version: SCHEMA_VERSION,
        registry_fingerprint: registry_fingerprint.to_string(),
        trust,
        scaler,
        centers: km.centers,
        clusters,
        manifest: Manifest {
            seed,
            params: *params,
            layout,
            n_windows: windows.len(),
            n_resampled: res.x.len(),
            fallback_clusters,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub cluster: usize,
    pub probability: f64,
    pub label: u8,
}

impl PipelineModel {
    pub fn layout(&self) -> &FeatureLayout {
        &self.manifest.layout
    }

    pub fn predict_features(&self, features: &[f64]) -> Prediction {
        let cluster = nearest(&self.centers, &self.scaler.apply(features));
        let p = &self.clusters[cluster];
        let probability = p.classifier.probability(features);
        Prediction { cluster, probability, label: u8::from(probability >= p.threshold) }
    }

    pub fn predict(&self, w: &WindowInput) -> Result<Prediction, PipelineError> {
        let features = featurize(self.layout(), self.trust.as_ref(), w)?;
        Ok(self.predict_features(&features))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let model: PipelineModel = serde_json::from_str(text).map_err(|e| PipelineError::Artifact(e.to_string()))?;
        if model.schema_version != SCHEMA_VERSION {
            return Err(PipelineError::Artifact(format!(
                "schema version {} not supported (expected {SCHEMA_VERSION})",
                model.schema_version
            )));
        }
        let dim = model.manifest.layout.dim();
        if model.centers.len() != model.clusters.len() || model.centers.iter().any(|c| c.len() != dim) {
            return Err(PipelineError::Artifact("centers do not match clusters or feature dimension".into()));
        }
        Ok(model)
    }

    /// SHA-256 of the manifest's canonical JSON.
    pub fn manifest_hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(&self.manifest).expect("manifest serializes")))
    }

    /// SHA-256 of the whole serialized model.
    pub fn model_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// Hours from the end of the first positive window to onset; negative when
/// the alert comes late, `None` without any alert. `windows` must be one
/// patient's, in chronological order, each as `(window_end, predicted_label)`.
pub fn time_to_detection(onset: usize, windows: &[(usize, u8)]) -> Option<i64> {
    windows.iter().find(|w| w.1 == 1).map(|&(end, _)| onset as i64 - end as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clinproj::preprocess::Gender;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(n: usize, seed: u64) -> Vec<WindowInput> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = u8::from(rng.random_bool(0.15));
                let shift = if label == 1 { 0.8 } else { 0.0 };
                let values: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0) + shift).collect();
                let norm_dist: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0) * (1.0 + 3.0 * shift)).collect();
                WindowInput {
                    sub_id: format!("w{i}"),
                    patient_id: format!("p{}", i / 3),
                    window_start: 0,
                    values,
                    norm_dist: Some(norm_dist),
                    age: 60.0,
                    gender: Gender::Female,
                    sofa: 0,
                    sirs: 0,
                    label,
                }
            })
            .collect()
    }

    fn layout() -> FeatureLayout {
        FeatureLayout { n_vitals: 2, window: 2, with_trust: true }
    }

    fn small() -> PipelineParams {
        PipelineParams { k: 3, gbt: GbtParams { rounds: 20, ..GbtParams::default() }, ..PipelineParams::default() }
    }

    #[test]
    fn deterministic_and_round_trips() {
        let data = synthetic(400, 1);
        let a = train_pipeline(&data, layout(), "fp", &small(), 5).unwrap();
        let b = train_pipeline(&data, layout(), "fp", &small(), 5).unwrap();
        assert_eq!(a.manifest_hash(), b.manifest_hash());
        assert_eq!(a.model_hash(), b.model_hash());
        let back = PipelineModel::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
        assert_eq!(a.clusters.len(), 3);
        assert!(a.clusters.iter().all(|c| c.threshold > 0.0 && c.threshold < 1.0));
        let correct = data.iter().filter(|w| a.predict(w).unwrap().label == w.label).count();
        let acc = correct as f64 / data.len() as f64;
        assert!(acc > 0.9, "{acc} {:?}", a.clusters.iter().map(|c| (c.threshold, c.n_train, c.n_positive)).collect::<Vec<_>>());
    }

    #[test]
    fn single_cluster_is_global_classifier() {
        let data = synthetic(300, 2);
        let params = PipelineParams { k: 1, ..small() };
        let m = train_pipeline(&data, layout(), "fp", &params, 3).unwrap();
        assert_eq!(m.centers.len(), 1);
        assert!(matches!(m.clusters[0].classifier, Classifier::Boosted(_)));
        assert!(data.iter().all(|w| m.predict(w).unwrap().cluster == 0));
    }

    #[test]
    fn pure_majority_cluster_predicts_zero() {
        let mut data = synthetic(300, 3);
        // A far-away block of negatives forms its own cluster.
        for i in 0..60 {
            let mut w = data[0].clone();
            w.sub_id = format!("far{i}");
            w.label = 0;
            w.values = vec![50.0 + i as f64 * 1e-3; 4];
            data.push(w);
        }
        let m = train_pipeline(&data, layout(), "fp", &PipelineParams { k: 2, ..small() }, 9).unwrap();
        let p = m.predict(&data[data.len() - 1]).unwrap();
        assert_eq!(p.label, 0);
        assert_eq!(m.clusters[p.cluster].classifier, Classifier::Constant { probability: 0.0 });
        assert_eq!(m.manifest.fallback_clusters, vec![p.cluster]);
    }

    #[test]
    fn rejects_bad_artifacts() {
        let data = synthetic(200, 4);
        let mut m = train_pipeline(&data, layout(), "fp", &small(), 1).unwrap();
        m.schema_version = 99;
        assert!(PipelineModel::from_json(&m.to_json()).is_err());
        assert!(PipelineModel::from_json("{").is_err());
    }

    #[test]
    fn detection_time() {
        assert_eq!(time_to_detection(20, &[(6, 0), (12, 1), (18, 1)]), Some(8));
        assert_eq!(time_to_detection(20, &[(6, 0), (12, 0)]), None);
        assert_eq!(time_to_detection(10, &[(6, 0), (14, 1)]), Some(-4));
    }
}
