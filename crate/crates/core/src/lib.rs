//! Constraint-based correction of hourly clinical vitals.
//!
//! Raw records are imputed and cut into fixed-length windows in a
//! normalized coordinate system. Each window is projected onto a set of
//! physically possible values (bounds, hourly rates, cross-vital relations
//! and if-then rules), and the corrected window's squared distance from the
//! normal range gives a per-vital trust score.

pub mod constraints;
pub mod datagen;
pub mod preprocess;
pub mod projection;
pub mod psv;
pub mod qp;
