//! Pipeline stages shared by the commands and `e2e`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use anyhow::{Context as _, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use clinproj::constraints::{build_physical, ConstraintSet, VitalRegistry};
use clinproj::datagen::{corrupt, generate_cohort, MaskEntry};
use clinproj::preprocess::scores::BoundScores;
use clinproj::preprocess::{onset_from_labels, PatientRecord, SubPatient};
use clinproj::projection::Status;
use clinproj::psv;
use clinproj_ml::metrics::{evaluate, sofa_baseline, Metrics};
use clinproj_ml::pipeline::time_to_detection;
use clinproj_ml::prepare::{prepare_subpatient, subpatients, Context, PreparedWindow};
use clinproj_ml::split::{patient_split, Split};
use clinproj_ml::{train_pipeline, FeatureLayout, PipelineModel, WindowInput};

use crate::config::RunConfig;

/// Error class, attached as context so `main` can map it to an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Io,
    Solver,
    Training,
}

impl Failure {
    pub fn exit_code(self) -> u8 {
        match self {
            Failure::Io => 2,
            Failure::Solver => 3,
            Failure::Training => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Failure::Io => "input/output error",
            Failure::Solver => "solver failure",
            Failure::Training => "training failure",
        })
    }
}

/// Registry, constraint set and bound scores for one run.
pub struct Setup {
    pub registry: VitalRegistry,
    pub physical: ConstraintSet,
    pub scores: BoundScores,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let registry = cfg.registry().context(Failure::Io)?;
        let physical = build_physical(&registry, cfg.window).context("building the physical constraint set")?;
        let scores = cfg.score_config().context(Failure::Io)?.bind(&registry).context("binding severity scores")?;
        Ok(Self { registry, physical, scores })
    }

    pub fn context(&self, cfg: &RunConfig, with_trust: bool) -> Context<'_> {
        Context {
            registry: &self.registry,
            physical: &self.physical,
            scores: &self.scores,
            window: cfg.window,
            stride: cfg.stride,
            solver: cfg.solver,
            with_trust,
        }
    }

    pub fn layout(&self, cfg: &RunConfig, with_trust: bool) -> FeatureLayout {
        FeatureLayout { n_vitals: self.registry.len(), window: cfg.window, with_trust }
    }
}

/// Synthetic cohort with corruption applied.
pub fn synth(cfg: &RunConfig, setup: &Setup) -> Result<(Vec<PatientRecord>, BTreeMap<String, Vec<MaskEntry>>)> {
    let clean = generate_cohort(&setup.registry, &cfg.cohort_spec()).context("generating the synthetic cohort")?;
    let spec = cfg.corruption_spec(setup.registry.len());
    let mut records = Vec::with_capacity(clean.len());
    let mut masks = BTreeMap::new();
    for r in &clean {
        let (c, mask) = corrupt(r, &setup.registry, &spec).context("corrupting the cohort")?;
        masks.insert(r.patient_id.clone(), mask);
        records.push(c);
    }
    Ok((records, masks))
}

pub fn load_records(dir: &Path, setup: &Setup) -> Result<Vec<PatientRecord>> {
    psv::read_dir(dir, &setup.registry).with_context(|| format!("reading {}", dir.display())).context(Failure::Io)
}

pub fn windows_of(records: &[PatientRecord], cfg: &RunConfig, setup: &Setup) -> Result<Vec<SubPatient>> {
    let ctx = setup.context(cfg, false);
    let per: Vec<Vec<SubPatient>> =
        records.par_iter().map(|r| subpatients(r, &ctx)).collect::<Result<_, _>>().context(Failure::Io)?;
    Ok(per.into_iter().flatten().collect())
}

/// Projects every window. Anything short of a proven optimum is a solver
/// failure.
pub fn project_windows(windows: Vec<SubPatient>, cfg: &RunConfig, setup: &Setup) -> Result<Vec<PreparedWindow>> {
    let ctx = setup.context(cfg, true);
    let out: Vec<PreparedWindow> =
        windows.into_par_iter().map(|sp| prepare_subpatient(sp, &ctx)).collect::<Result<_, _>>().context(Failure::Solver)?;
    if let Some(w) = out.iter().find(|w| w.projection.as_ref().is_some_and(|p| p.status != Status::Optimal)) {
        let p = w.projection.as_ref().expect("checked above");
        anyhow::bail!(anyhow::anyhow!(
            "window {} ended with status {:?} after {} nodes",
            w.input.sub_id,
            p.status,
            p.nodes_explored
        )
        .context(Failure::Solver));
    }
    Ok(out)
}

/// Windows as model inputs without projection or trust.
pub fn plain_inputs(windows: &[SubPatient]) -> Vec<WindowInput> {
    windows
        .iter()
        .map(|sp| WindowInput {
            sub_id: sp.sub_id.clone(),
            patient_id: sp.patient_id.clone(),
            window_start: sp.window_start,
            values: sp.data.clone(),
            norm_dist: None,
            age: sp.age,
            gender: sp.gender,
            sofa: sp.sofa,
            sirs: sp.sirs,
            label: sp.label,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSummary {
    pub windows: usize,
    pub corrected_windows: usize,
    pub corrected_cells: usize,
    pub total_phys_dist: f64,
    pub max_phys_dist: f64,
    pub nodes_explored: usize,
}

/// Cells that moved by more than `1e-9` in solve-space.
pub fn summarize_projection(windows: &[PreparedWindow], originals: &[SubPatient]) -> ProjectionSummary {
    let mut s = ProjectionSummary {
        windows: windows.len(),
        corrected_windows: 0,
        corrected_cells: 0,
        total_phys_dist: 0.0,
        max_phys_dist: 0.0,
        nodes_explored: 0,
    };
    for (w, sp) in windows.iter().zip(originals) {
        let Some(p) = &w.projection else { continue };
        let moved = p.corrected.iter().zip(&sp.data).filter(|(a, b)| (*a - *b).abs() > 1e-9).count();
        s.corrected_cells += moved;
        s.corrected_windows += usize::from(moved > 0);
        s.total_phys_dist += p.objective;
        s.max_phys_dist = s.max_phys_dist.max(p.objective);
        s.nodes_explored += p.nodes_explored;
    }
    s
}

pub fn split_inputs(inputs: &[WindowInput], cfg: &RunConfig) -> Result<Split> {
    let items: Vec<(&str, u8)> = inputs.iter().map(|w| (w.patient_id.as_str(), w.label)).collect();
    patient_split(&items, cfg.split_ratio, cfg.seed).context(Failure::Training)
}

pub fn train(inputs: &[WindowInput], layout: FeatureLayout, cfg: &RunConfig, setup: &Setup) -> Result<PipelineModel> {
    train_pipeline(inputs, layout, &setup.registry.fingerprint(), &cfg.ml, cfg.seed).context(Failure::Training)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub septic_patients: usize,
    pub alerted: usize,
    /// Hours before onset of the first alert, keyed by hour; negative is late.
    pub histogram: BTreeMap<i64, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub model_hash: String,
    pub manifest_hash: String,
    pub fallback_clusters: Vec<usize>,
    pub metrics: Metrics,
    pub detection: DetectionSummary,
}

/// Predictions for `inputs`, in order, as `(probability, label)`.
pub fn predict_all(model: &PipelineModel, inputs: &[WindowInput]) -> Result<Vec<(f64, u8)>> {
    inputs
        .par_iter()
        .map(|w| model.predict(w).map(|p| (p.probability, p.label)))
        .collect::<Result<_, _>>()
        .context(Failure::Io)
}

/// Scores a model on `inputs`; `onsets` maps patient id to onset hour.
pub fn evaluate_model(
    model: &PipelineModel,
    inputs: &[WindowInput],
    onsets: &BTreeMap<String, usize>,
    window: usize,
) -> Result<ArmReport> {
    let preds = predict_all(model, inputs)?;
    let probs: Vec<f64> = preds.iter().map(|p| p.0).collect();
    let labels: Vec<u8> = preds.iter().map(|p| p.1).collect();
    let truth: Vec<u8> = inputs.iter().map(|w| w.label).collect();
    let metrics = evaluate(&probs, &labels, &truth).context(Failure::Training)?;

    let mut by_patient: BTreeMap<&str, Vec<(usize, u8)>> = BTreeMap::new();
    for (w, p) in inputs.iter().zip(&preds) {
        by_patient.entry(&w.patient_id).or_default().push((w.window_start + window, p.1));
    }
    let mut detection = DetectionSummary { septic_patients: 0, alerted: 0, histogram: BTreeMap::new() };
    for (pid, mut wins) in by_patient {
        let Some(&onset) = onsets.get(pid) else { continue };
        detection.septic_patients += 1;
        wins.sort_unstable();
        if let Some(h) = time_to_detection(onset, &wins) {
            detection.alerted += 1;
            *detection.histogram.entry(h).or_default() += 1;
        }
    }
    Ok(ArmReport {
        model_hash: model.model_hash(),
        manifest_hash: model.manifest_hash(),
        fallback_clusters: model.manifest.fallback_clusters.clone(),
        metrics,
        detection,
    })
}

pub fn onsets(records: &[PatientRecord]) -> BTreeMap<String, usize> {
    records.iter().filter_map(|r| onset_from_labels(&r.sepsis_label).map(|o| (r.patient_id.clone(), o))).collect()
}

pub fn sofa_metrics(inputs: &[WindowInput]) -> Result<Metrics> {
    let sofa: Vec<u32> = inputs.iter().map(|w| w.sofa).collect();
    let labels: Vec<u8> = inputs.iter().map(|w| w.label).collect();
    sofa_baseline(&sofa, &labels).context(Failure::Training)
}

pub fn select<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub source: String,
    pub patients: usize,
    pub septic_patients: usize,
    pub windows: usize,
    pub positive_windows: usize,
    pub corrupted_cells: usize,
    pub train_patients: usize,
    pub test_patients: usize,
    pub train_windows: usize,
    pub test_windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub registry_fingerprint: String,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(cfg: &RunConfig, setup: &Setup) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            registry_fingerprint: setup.registry.fingerprint(),
            config: cfg.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2eReport {
    pub manifest: Manifest,
    pub cohort: CohortSummary,
    pub projection: ProjectionSummary,
    pub with_trust: ArmReport,
    pub without_trust: ArmReport,
    pub sofa_baseline: Metrics,
    /// Test AUROC with trust minus without.
    pub auroc_gain: Option<f64>,
}

/// Ingest or synthesize, project, train both arms on one patient split and
/// evaluate them against the SOFA baseline.
pub fn e2e(cfg: &RunConfig, input: Option<&Path>) -> Result<E2eReport> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    let (records, corrupted_cells, source) = match input {
        Some(dir) => (load_records(dir, &setup)?, 0, dir.display().to_string()),
        None => {
            let (records, masks) = synth(cfg, &setup)?;
            let cells = masks.values().map(Vec::len).sum();
            (records, cells, "synthetic".to_string())
        }
    };
    let windows = windows_of(&records, cfg, &setup)?;
    let projected = project_windows(windows.clone(), cfg, &setup)?;
    let projection = summarize_projection(&projected, &windows);

    let trust_inputs: Vec<WindowInput> = projected.into_iter().map(|w| w.input).collect();
    let plain = plain_inputs(&windows);
    let split = split_inputs(&trust_inputs, cfg)?;
    let onsets = onsets(&records);

    let arm = |inputs: &[WindowInput], with_trust: bool| -> Result<ArmReport> {
        let model = train(&select(inputs, &split.train), setup.layout(cfg, with_trust), cfg, &setup)?;
        evaluate_model(&model, &select(inputs, &split.test), &onsets, cfg.window)
    };
    let with_trust = arm(&trust_inputs, true)?;
    let without_trust = arm(&plain, false)?;
    let sofa = sofa_metrics(&select(&trust_inputs, &split.test))?;

    let patients: BTreeSet<&str> = records.iter().map(|r| r.patient_id.as_str()).collect();
    let cohort = CohortSummary {
        source,
        patients: patients.len(),
        septic_patients: records.iter().filter(|r| r.is_septic()).count(),
        windows: trust_inputs.len(),
        positive_windows: trust_inputs.iter().filter(|w| w.label == 1).count(),
        corrupted_cells,
        train_patients: split.train_patients.len(),
        test_patients: split.test_patients.len(),
        train_windows: split.train.len(),
        test_windows: split.test.len(),
    };
    let auroc_gain = with_trust.metrics.auroc.zip(without_trust.metrics.auroc).map(|(a, b)| a - b);
    Ok(E2eReport {
        manifest: Manifest::new(cfg, &setup),
        cohort,
        projection,
        with_trust,
        without_trust,
        sofa_baseline: sofa,
        auroc_gain,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}
