use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    /// PhysioNet coding: 0 female, 1 male.
    pub fn from_code(code: f64) -> Option<Self> {
        match code {
            c if c == 0.0 => Some(Gender::Female),
            c if c == 1.0 => Some(Gender::Male),
            _ => None,
        }
    }

    pub fn code(self) -> f64 {
        match self {
            Gender::Female => 0.0,
            Gender::Male => 1.0,
        }
    }
}

/// Hourly record of one patient. `values[v][t]` is vital `v` (registry
/// order) at hour `t`; `NaN` marks a missing measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub age: f64,
    pub gender: Gender,
    pub values: Vec<Vec<f64>>,
    pub sepsis_label: Vec<u8>,
}

impl PatientRecord {
    pub fn hours(&self) -> usize {
        self.sepsis_label.len()
    }

    pub fn is_septic(&self) -> bool {
        self.sepsis_label.contains(&1)
    }

    pub fn missing_cells(&self) -> usize {
        self.values.iter().flatten().filter(|x| x.is_nan()).count()
    }
}
