//! Feature vectors: window values, optional trust scores, demographics and
//! severity scores, in registry order.

use serde::{Deserialize, Serialize};

use clinproj::constraints::VitalRegistry;
use clinproj::preprocess::Gender;

/// One window ready for featurization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowInput {
    pub sub_id: String,
    pub patient_id: String,
    pub window_start: usize,
    /// Solve-space values, corrected or not depending on the run.
    pub values: Vec<f64>,
    /// Per-vital distance to the normal box; `None` when trust is disabled.
    pub norm_dist: Option<Vec<f64>>,
    pub age: f64,
    pub gender: Gender,
    pub sofa: u32,
    pub sirs: u32,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub n_vitals: usize,
    pub window: usize,
    pub with_trust: bool,
}

impl FeatureLayout {
    pub fn dim(&self) -> usize {
        self.n_vitals * self.window + if self.with_trust { self.n_vitals } else { 0 } + 4
    }

    pub fn names(&self, registry: &VitalRegistry) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        for name in registry.names() {
            for t in 0..self.window {
                out.push(format!("{name}_t{t}"));
            }
        }
        if self.with_trust {
            out.extend(registry.names().map(|n| format!("{n}_trust")));
        }
        out.extend(["Age", "Gender", "SOFA", "SIRS"].map(String::from));
        out
    }

    /// `values` is laid out vital-major; `trust` must be present iff the
    /// layout has trust columns.
    pub fn build(&self, values: &[f64], trust: Option<&[f64]>, age: f64, gender: Gender, sofa: u32, sirs: u32) -> Vec<f64> {
        assert_eq!(values.len(), self.n_vitals * self.window, "window dimension");
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(values);
        match (self.with_trust, trust) {
            (true, Some(t)) => {
                assert_eq!(t.len(), self.n_vitals, "trust dimension");
                out.extend_from_slice(t);
            }
            (false, None) => {}
            _ => panic!("trust scores do not match the layout"),
        }
        // Missing age is encoded as 0 so every entry stays finite.
        out.extend([if age.is_finite() { age } else { 0.0 }, gender.code(), f64::from(sofa), f64::from(sirs)]);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clinproj::constraints::standard_registry;

    #[test]
    fn dimension_and_order() {
        let reg = standard_registry();
        let layout = FeatureLayout { n_vitals: 30, window: 6, with_trust: true };
        assert_eq!(layout.dim(), 30 * 6 + 30 + 4);
        let names = layout.names(&reg);
        assert_eq!(names.len(), layout.dim());
        assert_eq!(names[0], "HR_t0");
        assert_eq!(names[180], "HR_trust");
        assert_eq!(names.last().unwrap(), "SIRS");
        let values = vec![0.5; 180];
        let trust = vec![0.1; 30];
        let fv = layout.build(&values, Some(&trust), 61.0, Gender::Male, 2, 1);
        assert_eq!(fv.len(), layout.dim());
        assert_eq!(&fv[210..], &[61.0, 1.0, 2.0, 1.0]);

        let plain = FeatureLayout { with_trust: false, ..layout };
        assert_eq!(plain.dim(), 184);
        assert_eq!(plain.build(&values, None, f64::NAN, Gender::Female, 0, 0)[180], 0.0);
    }
}
