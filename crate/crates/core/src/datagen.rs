//! Synthetic cohorts with known-feasible ground truth, and controlled
//! corruption of records.
//!
//! Trajectories are AR(1) paths in solve-space around a feasible baseline,
//! rate-limited and clipped to the physical box, after which the derived
//! vitals (MAP, total bilirubin, hematocrit, base excess, pH) are set so
//! every relation and rule holds by construction. Each record is checked
//! hour pair by hour pair and regenerated in the rare case it is not.
//!
//! Septic patients get growing, intermittent excursions outside the normal
//! range on a random subset of vitals, starting no later than the first
//! labeled hour.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{build_physical, var_index, BuildError, ConstraintSet, VitalRegistry};
use crate::preprocess::transform::{inverse_transform, transform, TransformError};
use crate::preprocess::{Gender, PatientRecord};
use crate::projection::{verify_feasibility, Violation};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("vital {0:?} required by the generator is missing from the registry")]
    MissingVital(&'static str),
    #[error("patient {0}: no feasible trajectory after {1} attempts")]
    Exhausted(usize, usize),
}

/// How septic deviation is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SicknessModel {
    pub min_vitals: usize,
    pub max_vitals: usize,
    /// Full excursion size beyond the patient baseline, solve-space units.
    pub amplitude: (f64, f64),
    pub ramp_hours: f64,
    /// Probability that an excursion shows at a given hour once started.
    pub presence: f64,
    /// Hours before the first positive label at which excursions may start.
    pub early_start: (usize, usize),
}

impl Default for SicknessModel {
    fn default() -> Self {
        Self { min_vitals: 3, max_vitals: 6, amplitude: (1.0, 2.0), ramp_hours: 6.0, presence: 0.25, early_start: (0, 4) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_patients: usize,
    /// Inclusive record length range in hours.
    pub hours_range: (usize, usize),
    pub sepsis_rate: f64,
    pub seed: u64,
    /// Stationary standard deviation of the hourly AR(1) noise.
    pub noise_sd: f64,
    pub ar_coef: f64,
    /// Standard deviation of the per-patient baseline shift.
    pub baseline_sd: f64,
    pub sickness: SicknessModel,
}

impl CohortSpec {
    pub fn new(n_patients: usize, hours_range: (usize, usize), sepsis_rate: f64, seed: u64) -> Self {
        Self {
            n_patients,
            hours_range,
            sepsis_rate,
            seed,
            noise_sd: 0.18,
            ar_coef: 0.6,
            baseline_sd: 0.08,
            sickness: SicknessModel::default(),
        }
    }
}

// Vitals septic excursions can hit, and the direction they move; 0 means
// either way, drawn per patient.
const SICK_CANDIDATES: &[(&str, f64)] = &[
    ("HR", 0.0),
    ("Temp", 0.0),
    ("Resp", 1.0),
    ("SBP", -1.0),
    ("DBP", -1.0),
    ("Lactate", 1.0),
    ("WBC", 0.0),
    ("Platelets", -1.0),
    ("Creatinine", 1.0),
    ("Bilirubin_direct", 1.0),
    ("HCO3", -1.0),
    ("pH", -1.0),
    ("Glucose", 0.0),
    ("PaCO2", 0.0),
    ("O2Sat", -1.0),
    ("SaO2", -1.0),
    ("Chloride", 1.0),
    ("Potassium", 0.0),
];

const BASE_EXCESS_LIMIT: f64 = 9.0;
const MAP_MARGIN: f64 = 0.001;
const MAX_ATTEMPTS: usize = 50;
const MIN_HOURS: usize = 16;

struct Layout {
    hco3: usize,
    base_excess: usize,
    lactate: usize,
    ph: usize,
    paco2: usize,
    map: usize,
    dbp: usize,
    sbp: usize,
    bil_direct: usize,
    bil_total: usize,
    hct: usize,
    hgb: usize,
}

/// Reusable cohort generator bound to a registry.
pub struct Generator<'a> {
    registry: &'a VitalRegistry,
    /// Two-hour physical set: boxes, rate limits and the checks.
    pair_set: ConstraintSet,
    baseline: Vec<f64>,
    rate_limit: Vec<Option<f64>>,
    layout: Layout,
    derived: Vec<bool>,
    candidates: Vec<(usize, f64)>,
}

impl<'a> Generator<'a> {
    pub fn new(registry: &'a VitalRegistry) -> Result<Self, DatagenError> {
        let find = |n: &'static str| registry.index_of(n).ok_or(DatagenError::MissingVital(n));
        let layout = Layout {
            hco3: find("HCO3")?,
            base_excess: find("BaseExcess")?,
            lactate: find("Lactate")?,
            ph: find("pH")?,
            paco2: find("PaCO2")?,
            map: find("MAP")?,
            dbp: find("DBP")?,
            sbp: find("SBP")?,
            bil_direct: find("Bilirubin_direct")?,
            bil_total: find("Bilirubin_total")?,
            hct: find("Hct")?,
            hgb: find("Hgb")?,
        };
        let pair_set = build_physical(registry, 2)?;
        let single = build_physical(registry, 1)?;
        let mut rate_limit = vec![None; registry.len()];
        for r in &pair_set.rates {
            rate_limit[r.vital] = Some(r.limit);
        }
        let mut derived = vec![false; registry.len()];
        for v in [layout.map, layout.bil_total, layout.hct, layout.base_excess] {
            derived[v] = true;
        }
        let candidates = SICK_CANDIDATES.iter().filter_map(|&(n, dir)| registry.index_of(n).map(|v| (v, dir))).collect();
        Ok(Self { registry, pair_set, baseline: single.witness, rate_limit, layout, derived, candidates })
    }

    pub fn generate(&self, spec: &CohortSpec) -> Result<Vec<PatientRecord>, DatagenError> {
        validate(spec)?;
        (0..spec.n_patients).into_par_iter().map(|i| self.patient(spec, i)).collect()
    }

    fn patient(&self, spec: &CohortSpec, index: usize) -> Result<PatientRecord, DatagenError> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(index as u64 + 1);
        let hours = rng.random_range(spec.hours_range.0..=spec.hours_range.1);
        let septic = rng.random_bool(spec.sepsis_rate);
        let age = (rng.random_range(18.0..90.0f64) * 100.0).round() / 100.0;
        let gender = if rng.random_bool(0.5) { Gender::Male } else { Gender::Female };
        let first_label = septic.then(|| rng.random_range(8..=hours - 4));
        let mut sepsis_label = vec![0u8; hours];
        if let Some(l) = first_label {
            sepsis_label[l..].iter_mut().for_each(|x| *x = 1);
        }
        for _ in 0..MAX_ATTEMPTS {
            let values = self.trajectory(spec, hours, first_label, &mut rng);
            let record = PatientRecord { patient_id: format!("p{index:06}"), age, gender, values, sepsis_label: sepsis_label.clone() };
            if verify_record(&record, self.registry, &self.pair_set).is_ok_and(|v| v.is_empty()) {
                return Ok(record);
            }
        }
        Err(DatagenError::Exhausted(index, MAX_ATTEMPTS))
    }

    /// Raw `[vital][hour]` values.
    fn trajectory(&self, spec: &CohortSpec, hours: usize, first_label: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let nv = self.registry.len();
        let n01 = Normal::new(0.0, 1.0).expect("unit normal");
        let innovation = spec.noise_sd * (1.0 - spec.ar_coef * spec.ar_coef).sqrt();

        let mut excursion = vec![None; nv];
        if let Some(l) = first_label {
            let s = &spec.sickness;
            let k = rng.random_range(s.min_vitals..=s.max_vitals).min(self.candidates.len());
            let mut pool = self.candidates.clone();
            pool.shuffle(rng);
            for &(v, dir) in pool.iter().take(k) {
                let start = l.saturating_sub(rng.random_range(s.early_start.0..=s.early_start.1));
                let amp = rng.random_range(s.amplitude.0..=s.amplitude.1);
                let dir = if dir == 0.0 { if rng.random_bool(0.5) { 1.0 } else { -1.0 } } else { dir };
                excursion[v] = Some((start, dir, amp));
            }
        }

        let mut solve = vec![vec![0.0; hours]; nv];
        for v in 0..nv {
            let i0 = var_index(v, 0, 2);
            let (lo, hi) = (self.pair_set.lower[i0], self.pair_set.upper[i0]);
            let base = (self.baseline[v] + spec.baseline_sd * n01.sample(rng)).clamp(lo, hi);
            let mut e = spec.noise_sd * n01.sample(rng);
            let mut prev: Option<f64> = None;
            for t in 0..hours {
                if t > 0 {
                    e = spec.ar_coef * e + innovation * n01.sample(rng);
                }
                let mut p = base + e;
                if let Some((start, dir, amp)) = excursion[v] {
                    if t >= start && rng.random_bool(spec.sickness.presence) {
                        let ramp = ((t - start + 1) as f64 / spec.sickness.ramp_hours).min(1.0);
                        p += dir * amp * ramp * rng.random_range(0.6..1.4);
                    }
                }
                let x = match (prev, self.rate_limit[v]) {
                    (Some(q), Some(limit)) => q + (p - q).clamp(-0.98 * limit, 0.98 * limit),
                    _ => p,
                };
                let x = x.clamp(lo, hi);
                solve[v][t] = x;
                prev = Some(x);
            }
        }

        let mut raw: Vec<Vec<f64>> = (0..nv)
            .map(|v| {
                let spec_v = self.registry.get(v);
                if self.derived[v] {
                    vec![0.0; hours]
                } else {
                    solve[v].iter().map(|&x| inverse_transform(spec_v, x).max(spec_v.phys_lo).min(spec_v.phys_hi)).collect()
                }
            })
            .collect();
        self.derive(&mut raw, &solve);
        raw
    }

    /// Fills the derived vitals so relations and rules hold.
    fn derive(&self, raw: &mut [Vec<f64>], solve: &[Vec<f64>]) {
        let l = &self.layout;
        let reg = self.registry;
        let hours = raw[0].len();
        let map_spec = reg.get(l.map);
        let be_spec = reg.get(l.base_excess);
        let be_rate = be_spec.max_hourly_change.unwrap_or(f64::INFINITY);
        let mut prev_be: Option<f64> = None;
        for t in 0..hours {
            let mean = (2.0 * raw[l.dbp][t] + raw[l.sbp][t]) / 3.0;
            let proposed = inverse_transform(map_spec, solve[l.map][t]);
            let lo = map_spec.phys_lo.max((0.95 + MAP_MARGIN) * mean);
            let hi = map_spec.phys_hi.min((1.05 - MAP_MARGIN) * mean);
            raw[l.map][t] = proposed.clamp(lo, hi.max(lo));

            raw[l.bil_total][t] = inverse_transform(reg.get(l.bil_total), solve[l.bil_total][t])
                .max(raw[l.bil_direct][t])
                .clamp(reg.get(l.bil_total).phys_lo, reg.get(l.bil_total).phys_hi);
            raw[l.hct][t] = inverse_transform(reg.get(l.hct), solve[l.hct][t])
                .max(1.5 * raw[l.hgb][t])
                .clamp(reg.get(l.hct).phys_lo, reg.get(l.hct).phys_hi);

            let acidotic = raw[l.hco3][t] <= 10.0 || raw[l.lactate][t] >= 6.0;
            let p = inverse_transform(be_spec, solve[l.base_excess][t]);
            let mut be = match prev_be {
                Some(q) => q + (p - q).clamp(-0.98 * be_rate, 0.98 * be_rate),
                None => p,
            };
            be = be.clamp(-BASE_EXCESS_LIMIT, BASE_EXCESS_LIMIT);
            be = if acidotic { be.min(0.0) } else { be.max(0.0) };
            raw[l.base_excess][t] = be;
            prev_be = Some(be);

            if raw[l.ph][t] <= 7.0 && raw[l.paco2][t] > 35.0 && raw[l.hco3][t] > 10.0 {
                raw[l.ph][t] = 7.0;
            }
        }
    }
}

fn validate(spec: &CohortSpec) -> Result<(), DatagenError> {
    let bad = |m: &str| Err(DatagenError::Params(m.to_string()));
    if !(spec.sepsis_rate > 0.0 && spec.sepsis_rate < 1.0) {
        return bad("sepsis_rate must lie in (0, 1)");
    }
    if spec.hours_range.0 < MIN_HOURS || spec.hours_range.0 > spec.hours_range.1 {
        return bad("hours_range must be ordered with a minimum of at least 16 hours");
    }
    let s = &spec.sickness;
    if s.min_vitals > s.max_vitals || s.amplitude.0 > s.amplitude.1 || s.early_start.0 > s.early_start.1 {
        return bad("sickness ranges must be ordered");
    }
    if !(0.0..=1.0).contains(&s.presence) || s.ramp_hours <= 0.0 {
        return bad("sickness presence must lie in [0, 1] and ramp_hours be positive");
    }
    if !(0.0..1.0).contains(&spec.ar_coef) || spec.noise_sd < 0.0 || spec.baseline_sd < 0.0 {
        return bad("noise parameters out of range");
    }
    Ok(())
}

/// Generates a cohort with the standard excursion model.
pub fn generate_cohort(registry: &VitalRegistry, spec: &CohortSpec) -> Result<Vec<PatientRecord>, DatagenError> {
    Generator::new(registry)?.generate(spec)
}

/// Checks every run of `set.window_len` consecutive hours against `set`.
/// Returns `(start hour, violations)` for each failing run.
pub fn verify_record(
    record: &PatientRecord,
    registry: &VitalRegistry,
    set: &ConstraintSet,
) -> Result<Vec<(usize, Vec<Violation>)>, TransformError> {
    let w = set.window_len;
    let mut out = Vec::new();
    if record.hours() < w {
        return Ok(out);
    }
    for start in 0..=record.hours() - w {
        let mut x = vec![0.0; set.n_vars()];
        for (v, spec) in registry.specs().iter().enumerate() {
            for t in 0..w {
                x[var_index(v, t, w)] = transform(spec, record.values[v][start + t])?;
            }
        }
        let report = verify_feasibility(&x, set, 1e-6);
        if !report.is_empty() {
            out.push((start, report));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorruptionRates {
    pub out_of_range: f64,
    pub rate_spike: f64,
    pub missing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// One entry per registry vital.
    pub per_vital: Vec<CorruptionRates>,
    /// Per-hour probability of an HCO3 <= 10 with positive base excess pair.
    pub logical_pair: f64,
    /// Out-of-range distance as a fraction of the physical width.
    pub range_magnitude: (f64, f64),
    /// Rate spike size as a multiple of the hourly limit.
    pub spike_magnitude: (f64, f64),
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn none(n_vitals: usize, seed: u64) -> Self {
        Self::uniform(n_vitals, CorruptionRates::default(), 0.0, seed)
    }

    pub fn uniform(n_vitals: usize, rates: CorruptionRates, logical_pair: f64, seed: u64) -> Self {
        Self { per_vital: vec![rates; n_vitals], logical_pair, range_magnitude: (0.05, 0.5), spike_magnitude: (1.5, 3.0), seed }
    }

    fn validate(&self, n_vitals: usize) -> Result<(), DatagenError> {
        if self.per_vital.len() != n_vitals {
            return Err(DatagenError::Params(format!("{} corruption entries for {n_vitals} vitals", self.per_vital.len())));
        }
        let probs = self.per_vital.iter().flat_map(|r| [r.out_of_range, r.rate_spike, r.missing]).chain([self.logical_pair]);
        for p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(DatagenError::Params(format!("probability {p} outside [0, 1]")));
            }
        }
        if self.range_magnitude.0 <= 0.0 || self.range_magnitude.0 > self.range_magnitude.1 {
            return Err(DatagenError::Params("range magnitude must be positive and ordered".into()));
        }
        if self.spike_magnitude.0 <= 1.0 || self.spike_magnitude.0 > self.spike_magnitude.1 {
            return Err(DatagenError::Params("spike magnitude must exceed 1 and be ordered".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    OutOfRange,
    RateSpike,
    LogicalPair,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub vital: usize,
    pub t: usize,
    pub kind: CorruptionKind,
    pub original: f64,
}

/// Applies `spec` to a copy of `record`. Each cell is altered at most once;
/// the mask lists every altered or blanked cell with its original value.
pub fn corrupt(
    record: &PatientRecord,
    registry: &VitalRegistry,
    spec: &CorruptionSpec,
) -> Result<(PatientRecord, Vec<MaskEntry>), DatagenError> {
    spec.validate(registry.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let stream = record.patient_id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3));
    rng.set_stream(stream);
    let mut out = record.clone();
    let mut touched = vec![vec![false; record.hours()]; registry.len()];
    let mut mask = Vec::new();
    let mark = |mask: &mut Vec<MaskEntry>, touched: &mut Vec<Vec<bool>>, v: usize, t: usize, kind| {
        touched[v][t] = true;
        mask.push(MaskEntry { vital: v, t, kind, original: record.values[v][t] });
    };

    if let (Some(hco3), Some(be)) = (registry.index_of("HCO3"), registry.index_of("BaseExcess")) {
        for t in 0..record.hours() {
            if spec.logical_pair > 0.0 && rng.random_bool(spec.logical_pair) {
                out.values[hco3][t] = rng.random_range(3.0..9.0);
                out.values[be][t] = rng.random_range(2.0..8.0);
                mark(&mut mask, &mut touched, hco3, t, CorruptionKind::LogicalPair);
                mark(&mut mask, &mut touched, be, t, CorruptionKind::LogicalPair);
            }
        }
    }

    for (v, vs) in registry.specs().iter().enumerate() {
        let rates = spec.per_vital[v];
        let width = vs.phys_hi - vs.phys_lo;
        for t in 0..record.hours() {
            if touched[v][t] {
                continue;
            }
            if rates.out_of_range > 0.0 && rng.random_bool(rates.out_of_range) {
                let m = rng.random_range(spec.range_magnitude.0..=spec.range_magnitude.1) * width;
                out.values[v][t] = if rng.random_bool(0.5) {
                    vs.phys_hi + m
                } else if vs.log_transformed {
                    // stay inside the log domain
                    (vs.phys_lo - m).max(0.5 * (vs.phys_lo - 1.0))
                } else {
                    vs.phys_lo - m
                };
                mark(&mut mask, &mut touched, v, t, CorruptionKind::OutOfRange);
            } else if let Some(rate) = vs.max_hourly_change.filter(|_| rates.rate_spike > 0.0 && t > 0) {
                if rng.random_bool(rates.rate_spike) {
                    let m = rng.random_range(spec.spike_magnitude.0..=spec.spike_magnitude.1);
                    let up = rng.random_bool(0.5);
                    let prev = out.values[v][t - 1];
                    let target = if vs.log_transformed {
                        // multiplicative limit around the normal midpoint
                        let mid = vs.normal_midpoint();
                        let factor = ((mid + rate + 1.0) / (mid + 1.0)).powf(m);
                        if up { (prev + 1.0) * factor - 1.0 } else { (prev + 1.0) / factor - 1.0 }
                    } else if up {
                        prev + m * rate
                    } else {
                        prev - m * rate
                    };
                    out.values[v][t] = target;
                    mark(&mut mask, &mut touched, v, t, CorruptionKind::RateSpike);
                }
            } else if rates.missing > 0.0 && rng.random_bool(rates.missing) {
                out.values[v][t] = f64::NAN;
                mark(&mut mask, &mut touched, v, t, CorruptionKind::Missing);
            }
        }
    }
    mask.sort_by_key(|m| (m.vital, m.t));
    Ok((out, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::standard_registry;

    fn small_cohort(n: usize, rate: f64, seed: u64) -> Vec<PatientRecord> {
        generate_cohort(&standard_registry(), &CohortSpec::new(n, (20, 40), rate, seed)).unwrap()
    }

    #[test]
    fn generated_records_are_feasible() {
        let reg = standard_registry();
        let set = build_physical(&reg, 2).unwrap();
        for rec in small_cohort(40, 0.5, 3) {
            assert!(verify_record(&rec, &reg, &set).unwrap().is_empty(), "{}", rec.patient_id);
            assert_eq!(rec.missing_cells(), 0);
        }
    }

    #[test]
    fn labels_follow_the_lead_convention() {
        for rec in small_cohort(60, 0.5, 11) {
            if rec.is_septic() {
                let first = rec.sepsis_label.iter().position(|&l| l == 1).unwrap();
                assert!(rec.sepsis_label[first..].iter().all(|&l| l == 1));
                assert!(first >= 8 && first + 4 <= rec.hours());
            } else {
                assert!(rec.sepsis_label.iter().all(|&l| l == 0));
            }
        }
    }

    #[test]
    fn septic_fraction_is_binomial() {
        let cohort = small_cohort(1000, 0.072, 5);
        let septic = cohort.iter().filter(|r| r.is_septic()).count() as f64;
        let sd = (1000.0 * 0.072 * 0.928f64).sqrt();
        assert!((septic - 72.0).abs() <= 3.0 * sd, "{septic}");
    }

    #[test]
    fn same_seed_same_cohort() {
        assert_eq!(small_cohort(10, 0.3, 9), small_cohort(10, 0.3, 9));
        assert_ne!(small_cohort(10, 0.3, 9), small_cohort(10, 0.3, 10));
    }

    #[test]
    fn invalid_specs_rejected() {
        let reg = standard_registry();
        assert!(generate_cohort(&reg, &CohortSpec::new(1, (20, 30), 0.0, 1)).is_err());
        assert!(generate_cohort(&reg, &CohortSpec::new(1, (20, 30), 1.0, 1)).is_err());
        assert!(generate_cohort(&reg, &CohortSpec::new(1, (8, 30), 0.5, 1)).is_err());
    }

    #[test]
    fn zero_corruption_is_identity() {
        let reg = standard_registry();
        let rec = &small_cohort(1, 0.5, 2)[0];
        let (out, mask) = corrupt(rec, &reg, &CorruptionSpec::none(reg.len(), 4)).unwrap();
        assert_eq!(&out, rec);
        assert!(mask.is_empty());
    }

    #[test]
    fn out_of_range_leaves_physical_box() {
        let reg = standard_registry();
        let rec = &small_cohort(1, 0.5, 2)[0];
        let temp = reg.index_of("Temp").unwrap();
        let mut spec = CorruptionSpec::none(reg.len(), 4);
        spec.per_vital[temp].out_of_range = 1.0;
        let (out, mask) = corrupt(rec, &reg, &spec).unwrap();
        assert_eq!(mask.len(), rec.hours());
        for t in 0..rec.hours() {
            let x = out.values[temp][t];
            assert!(!(25.0..=45.0).contains(&x), "{x}");
        }
        // logged vitals stay transformable
        let cr = reg.index_of("Creatinine").unwrap();
        let mut spec = CorruptionSpec::none(reg.len(), 4);
        spec.per_vital[cr].out_of_range = 1.0;
        let (out, _) = corrupt(rec, &reg, &spec).unwrap();
        for &x in &out.values[cr] {
            assert!(x > -1.0 && !(0.0..=20.0).contains(&x));
        }
    }

    #[test]
    fn full_missingness_blanks_the_column() {
        let reg = standard_registry();
        let rec = &small_cohort(1, 0.5, 2)[0];
        let hr = reg.index_of("HR").unwrap();
        let mut spec = CorruptionSpec::none(reg.len(), 4);
        spec.per_vital[hr].missing = 1.0;
        let (out, mask) = corrupt(rec, &reg, &spec).unwrap();
        assert!(out.values[hr].iter().all(|x| x.is_nan()));
        assert_eq!(mask.len(), rec.hours());
        assert!(mask.iter().all(|m| m.vital == hr && m.kind == CorruptionKind::Missing && m.original == rec.values[hr][m.t]));
    }

    #[test]
    fn spikes_and_pairs_break_feasibility() {
        let reg = standard_registry();
        let set = build_physical(&reg, 2).unwrap();
        let rec = &small_cohort(1, 0.5, 2)[0];
        let temp = reg.index_of("Temp").unwrap();
        let mut spec = CorruptionSpec::none(reg.len(), 4);
        spec.per_vital[temp].rate_spike = 1.0;
        let (out, mask) = corrupt(rec, &reg, &spec).unwrap();
        assert!(mask.iter().all(|m| m.kind == CorruptionKind::RateSpike && m.t > 0));
        assert!(!verify_record(&out, &reg, &set).unwrap().is_empty());

        let mut spec = CorruptionSpec::none(reg.len(), 4);
        spec.logical_pair = 1.0;
        let (out, mask) = corrupt(rec, &reg, &spec).unwrap();
        assert_eq!(mask.len(), 2 * rec.hours());
        assert!(!verify_record(&out, &reg, &set).unwrap().is_empty());
    }

    #[test]
    fn bad_probability_rejected() {
        let reg = standard_registry();
        let rec = &small_cohort(1, 0.5, 2)[0];
        let mut spec = CorruptionSpec::none(reg.len(), 4);
        spec.per_vital[0].missing = 1.5;
        assert!(corrupt(rec, &reg, &spec).is_err());
    }
}
