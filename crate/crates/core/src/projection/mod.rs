//! Physical projection (data correction), normal-range distances and
//! feasibility reports.

pub mod feasibility;
pub mod miqp;
pub mod normal;

use rayon::prelude::*;

pub use feasibility::{verify_feasibility, RowKind, Violation};
pub use miqp::{project_physical, ProjectionError, ProjectionResult, SolverOptions, Status};
pub use normal::{clamp_unit, normalize_trust, project_normal, TrustStats};

use crate::constraints::ConstraintSet;

/// Projects every window in parallel; results keep input order.
pub fn project_all(
    windows: &[&[f64]],
    set: &ConstraintSet,
    opts: &SolverOptions,
) -> Vec<Result<ProjectionResult, ProjectionError>> {
    windows.par_iter().map(|w| project_physical(w, set, opts)).collect()
}
