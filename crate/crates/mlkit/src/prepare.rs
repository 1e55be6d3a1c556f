//! Record to model inputs: impute, window, project, measure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use clinproj::constraints::{ConstraintSet, VitalRegistry};
use clinproj::preprocess::scores::BoundScores;
use clinproj::preprocess::{impute, make_subpatients, PatientRecord, SubPatient, TransformError};
use clinproj::projection::{project_normal, project_physical, ProjectionError, ProjectionResult, SolverOptions, Status};

use crate::features::WindowInput;

#[derive(Debug, Error)]
pub enum PrepareError {
    #[error("patient {patient}: {source}")]
    Transform { patient: String, source: TransformError },
    #[error("window {sub_id}: {source}")]
    Projection { sub_id: String, source: ProjectionError },
    #[error("window {0}: projection reported an empty feasible set")]
    Infeasible(String),
}

/// Everything needed to turn a record into windows.
pub struct Context<'a> {
    pub registry: &'a VitalRegistry,
    pub physical: &'a ConstraintSet,
    pub scores: &'a BoundScores,
    pub window: usize,
    pub stride: usize,
    pub solver: SolverOptions,
    /// Project onto the physical set and compute trust distances. When false,
    /// windows keep their imputed values and carry no distances.
    pub with_trust: bool,
}

/// One prepared window plus the projection that produced it, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedWindow {
    pub input: WindowInput,
    pub projection: Option<ProjectionResult>,
}

pub fn subpatients(record: &PatientRecord, ctx: &Context<'_>) -> Result<Vec<SubPatient>, PrepareError> {
    let filled = impute(record, ctx.registry);
    make_subpatients(&filled, ctx.registry, ctx.scores, ctx.window, ctx.stride)
        .map_err(|source| PrepareError::Transform { patient: record.patient_id.clone(), source })
}

pub fn prepare_subpatient(sp: SubPatient, ctx: &Context<'_>) -> Result<PreparedWindow, PrepareError> {
    let (values, norm_dist, projection) = if ctx.with_trust {
        let r = project_physical(&sp.data, ctx.physical, &ctx.solver)
            .map_err(|source| PrepareError::Projection { sub_id: sp.sub_id.clone(), source })?;
        if r.status == Status::Infeasible {
            return Err(PrepareError::Infeasible(sp.sub_id));
        }
        let nd = project_normal(&r.corrected, ctx.registry.len(), ctx.window);
        (r.corrected.clone(), Some(nd), Some(r))
    } else {
        (sp.data, None, None)
    };
    let input = WindowInput {
        sub_id: sp.sub_id,
        patient_id: sp.patient_id,
        window_start: sp.window_start,
        values,
        norm_dist,
        age: sp.age,
        gender: sp.gender,
        sofa: sp.sofa,
        sirs: sp.sirs,
        label: sp.label,
    };
    Ok(PreparedWindow { input, projection })
}

/// All windows of one record, in chronological order.
pub fn prepare_record(record: &PatientRecord, ctx: &Context<'_>) -> Result<Vec<PreparedWindow>, PrepareError> {
    subpatients(record, ctx)?.into_iter().map(|sp| prepare_subpatient(sp, ctx)).collect()
}
