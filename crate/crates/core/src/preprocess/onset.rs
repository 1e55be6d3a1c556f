/// Sepsis onset from the suspicion-of-infection and organ-dysfunction
/// timestamps (hours): the earlier of the two, provided the SOFA time falls
/// between 24 h before and 12 h after suspicion.
pub fn derive_sepsis_onset(t_suspicion: f64, t_sofa: f64) -> Option<f64> {
    if t_suspicion - 24.0 <= t_sofa && t_sofa <= t_suspicion + 12.0 {
        Some(t_suspicion.min(t_sofa))
    } else {
        None
    }
}

/// Hours by which hourly labels lead the onset they encode.
pub const LABEL_LEAD_HOURS: usize = 6;

/// Onset hour implied by hourly labels that switch on `LABEL_LEAD_HOURS`
/// before onset.
pub fn onset_from_labels(labels: &[u8]) -> Option<usize> {
    labels.iter().position(|&l| l == 1).map(|first| first + LABEL_LEAD_HOURS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_examples() {
        assert_eq!(derive_sepsis_onset(30.0, 20.0), Some(20.0));
        assert_eq!(derive_sepsis_onset(10.0, 40.0), None);
        assert_eq!(derive_sepsis_onset(50.0, 28.0), Some(28.0));
    }

    #[test]
    fn window_edges_inclusive() {
        assert_eq!(derive_sepsis_onset(30.0, 6.0), Some(6.0));
        assert_eq!(derive_sepsis_onset(30.0, 42.0), Some(30.0));
        assert_eq!(derive_sepsis_onset(30.0, 5.9), None);
    }

    #[test]
    fn onset_from_hourly_labels() {
        assert_eq!(onset_from_labels(&[0, 0, 0, 1, 1]), Some(9));
        assert_eq!(onset_from_labels(&[0, 0]), None);
    }
}
