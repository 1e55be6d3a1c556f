//! Missing-value imputation.
//!
//! Interior gaps are linearly interpolated, except FiO2 which steps forward
//! from its last observation. Leading gaps (and all-missing series) take a
//! default: room-air 21 for FiO2, the normal-range midpoint otherwise.
//! Trailing gaps carry the last observation forward.

use super::record::PatientRecord;
use crate::constraints::{VitalRegistry, VitalSpec};

const FIO2: &str = "FiO2";
const FIO2_DEFAULT: f64 = 21.0;

fn is_fio2(spec: &VitalSpec) -> bool {
    spec.name.eq_ignore_ascii_case(FIO2)
}

pub fn default_value(spec: &VitalSpec) -> f64 {
    if is_fio2(spec) {
        FIO2_DEFAULT
    } else {
        spec.normal_midpoint()
    }
}

pub fn impute_series(series: &[f64], default: f64, step: bool) -> Vec<f64> {
    let mut out = series.to_vec();
    let observed: Vec<usize> = (0..series.len()).filter(|&t| !series[t].is_nan()).collect();
    let Some(&first) = observed.first() else {
        out.iter_mut().for_each(|x| *x = default);
        return out;
    };
    out[..first].iter_mut().for_each(|x| *x = default);
    for pair in observed.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (ya, yb) = (series[a], series[b]);
        for (t, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            *slot = if step {
                ya
            } else {
                let frac = (t - a) as f64 / (b - a) as f64;
                ya + frac * (yb - ya)
            };
        }
    }
    let last = *observed.last().unwrap();
    let carry = series[last];
    out[last + 1..].iter_mut().for_each(|x| *x = carry);
    out
}

/// Dense copy of `record` with every `NaN` filled.
pub fn impute(record: &PatientRecord, registry: &VitalRegistry) -> PatientRecord {
    let mut out = record.clone();
    for (v, spec) in registry.specs().iter().enumerate() {
        out.values[v] = impute_series(&record.values[v], default_value(spec), is_fio2(spec));
    }
    out
}
