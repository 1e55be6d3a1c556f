//! Raw hourly records to imputed, normalized, fixed-length sub-patients.

pub mod impute;
pub mod onset;
pub mod record;
pub mod scores;
pub mod transform;
pub mod window;

pub use impute::impute;
pub use onset::{derive_sepsis_onset, onset_from_labels};
pub use record::{Gender, PatientRecord};
pub use scores::{ScoreConfig, ScoreError};
pub use transform::{inverse_transform, transform, TransformError};
pub use window::{make_subpatients, window_starts, SubPatient};
