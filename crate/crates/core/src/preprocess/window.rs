//! Fixed-length overlapping windows ("sub-patients").

use serde::{Deserialize, Serialize};

use super::record::{Gender, PatientRecord};
use super::scores::BoundScores;
use super::transform::{transform, TransformError};
use crate::constraints::{var_index, VitalRegistry};

/// One window of one patient. `data` is solve-space, laid out
/// `data[var_index(v, t, window)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubPatient {
    pub sub_id: String,
    pub patient_id: String,
    pub window_start: usize,
    pub window: usize,
    pub data: Vec<f64>,
    pub age: f64,
    pub gender: Gender,
    pub sofa: u32,
    pub sirs: u32,
    pub label: u8,
}

impl SubPatient {
    pub fn window_end(&self) -> usize {
        self.window_start + self.window
    }

    pub fn vital_series(&self, v: usize) -> &[f64] {
        &self.data[v * self.window..(v + 1) * self.window]
    }
}

/// Start hours of every full window: `0, stride, 2 stride, ...`.
pub fn window_starts(hours: usize, window: usize, stride: usize) -> Vec<usize> {
    assert!(window > 0 && stride > 0, "window and stride must be positive");
    if hours < window {
        return Vec::new();
    }
    (0..=hours - window).step_by(stride).collect()
}

/// Solve-space window starting at `start`, plus its raw slice.
pub fn window_data(
    record: &PatientRecord,
    registry: &VitalRegistry,
    start: usize,
    window: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), TransformError> {
    let mut data = vec![0.0; registry.len() * window];
    let mut raw = Vec::with_capacity(registry.len());
    for (v, spec) in registry.specs().iter().enumerate() {
        let slice = record.values[v][start..start + window].to_vec();
        for (t, &x) in slice.iter().enumerate() {
            data[var_index(v, t, window)] = transform(spec, x)?;
        }
        raw.push(slice);
    }
    Ok((data, raw))
}

/// Splits an imputed record into sub-patients. Records shorter than two
/// windows yield nothing.
pub fn make_subpatients(
    record: &PatientRecord,
    registry: &VitalRegistry,
    scores: &BoundScores,
    window: usize,
    stride: usize,
) -> Result<Vec<SubPatient>, TransformError> {
    if record.hours() < 2 * window {
        return Ok(Vec::new());
    }
    window_starts(record.hours(), window, stride)
        .into_iter()
        .map(|start| {
            let (data, raw) = window_data(record, registry, start, window)?;
            let label = record.sepsis_label[start..start + window].iter().copied().max().unwrap_or(0);
            Ok(SubPatient {
                sub_id: format!("{}_{start}", record.patient_id),
                patient_id: record.patient_id.clone(),
                window_start: start,
                window,
                data,
                age: record.age,
                gender: record.gender,
                sofa: scores.sofa_partial(&raw),
                sirs: scores.sirs(&raw),
                label,
            })
        })
        .collect()
}
