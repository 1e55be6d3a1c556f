//! Raw units <-> solve-space.
//!
//! Solve-space scales every variable by its normal range so that the normal
//! range maps onto `[0, 1]`. Variables flagged `log_transformed` are first
//! mapped through `log10(x + 1)`, and the normal bounds with them.

use thiserror::Error;

use crate::constraints::VitalSpec;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("{vital}: value {value} outside the log-transform domain (must exceed -1)")]
    Domain { vital: String, value: f64 },
    #[error("{vital}: non-finite value {value}")]
    NonFinite { vital: String, value: f64 },
}

fn log1p10(x: f64) -> f64 {
    (x + 1.0).log10()
}

/// `(offset, width)` of the affine part of the map for `spec`.
pub fn affine_parts(spec: &VitalSpec) -> (f64, f64) {
    if spec.log_transformed {
        let lo = log1p10(spec.norm_lo);
        (lo, log1p10(spec.norm_hi) - lo)
    } else {
        (spec.norm_lo, spec.norm_hi - spec.norm_lo)
    }
}

/// Value after the optional log step and before scaling.
pub fn pre_scale(spec: &VitalSpec, raw: f64) -> Result<f64, TransformError> {
    if !raw.is_finite() {
        return Err(TransformError::NonFinite { vital: spec.name.clone(), value: raw });
    }
    if spec.log_transformed {
        if raw <= -1.0 {
            return Err(TransformError::Domain { vital: spec.name.clone(), value: raw });
        }
        Ok(log1p10(raw))
    } else {
        Ok(raw)
    }
}

pub fn transform(spec: &VitalSpec, raw: f64) -> Result<f64, TransformError> {
    let (offset, width) = affine_parts(spec);
    Ok((pre_scale(spec, raw)? - offset) / width)
}

pub fn inverse_transform(spec: &VitalSpec, x: f64) -> f64 {
    let (offset, width) = affine_parts(spec);
    let scaled = x * width + offset;
    if spec.log_transformed {
        10f64.powf(scaled) - 1.0
    } else {
        scaled
    }
}
