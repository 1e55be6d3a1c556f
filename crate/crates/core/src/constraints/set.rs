//! Solver-ready constraint sets over one window of `window_len` hours.
//!
//! Everything here is expressed in solve-space. The physical set combines
//! box rows, hourly rate rows, affine relations between vitals and
//! if-then rules encoded with binaries and big-M rows whose constants are
//! taken from the box of the variable they bound.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::registry::VitalRegistry;
use crate::preprocess::transform::{affine_parts, transform};
use crate::qp::{solve_node_qp, LinearRow, QpOptions};

/// Binaries introduced per hour by the standard rule set.
pub const BINARIES_PER_HOUR: usize = 8;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("window length {0} is too short")]
    WindowTooShort(usize),
    #[error("no feasible witness point: {0}")]
    NoWitness(String),
}

/// Variable `vital` at hour `t` of a window lives at `vital * window_len + t`.
pub fn var_index(vital: usize, t: usize, window_len: usize) -> usize {
    vital * window_len + t
}

/// `x[vital, t] - x[vital, t-1]` bounded by `limit` in both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub vital: usize,
    pub t: usize,
    pub limit: f64,
}

/// Named cross-vital relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    /// MAP within 5% of (2 DBP + SBP) / 3.
    MeanArterialPressure,
    /// Direct bilirubin never exceeds total bilirubin.
    BilirubinOrder,
    /// Hematocrit at least 1.5 x hemoglobin.
    HematocritHemoglobin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationRow {
    pub relation: Relation,
    pub t: usize,
    pub row: LinearRow,
}

/// If-then rule encoded with binaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    /// HCO3 <= 10 implies BaseExcess <= 0.
    LowBicarbonate,
    /// Lactate >= 6 implies BaseExcess <= 0.
    HighLactate,
    /// BaseExcess <= 0 implies Lactate >= 6 or HCO3 <= 10.
    NegativeBaseExcess,
    /// pH <= 7 implies PaCO2 <= 35 or HCO3 <= 10.
    Acidemia,
}

impl Rule {
    pub fn binaries(self) -> usize {
        match self {
            Rule::LowBicarbonate | Rule::HighLactate => 1,
            Rule::NegativeBaseExcess | Rule::Acidemia => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Rule::LowBicarbonate => "HCO3<=10 => BaseExcess<=0",
            Rule::HighLactate => "Lactate>=6 => BaseExcess<=0",
            Rule::NegativeBaseExcess => "BaseExcess<=0 => Lactate>=6 or HCO3<=10",
            Rule::Acidemia => "pH<=7 => PaCO2<=35 or HCO3<=10",
        }
    }
}

/// `coef * x[var] + sum(g * b) <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigMRow {
    pub var: usize,
    pub coef: f64,
    pub binaries: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl BigMRow {
    pub fn violation(&self, x: &[f64], bins: &[bool]) -> f64 {
        let b: f64 = self.binaries.iter().map(|&(k, g)| if bins[k] { g } else { 0.0 }).sum();
        self.coef * x[self.var] + b - self.rhs
    }
}

/// Pure binary row `sum(g * b) <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicRow {
    pub binaries: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LogicRow {
    pub fn satisfied(&self, bins: &[bool]) -> bool {
        let s: f64 = self.binaries.iter().map(|&(k, g)| if bins[k] { g } else { 0.0 }).sum();
        s <= self.rhs + 1e-12
    }
}

/// One instance of a [`Rule`] at one hour: its binaries and rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorGroup {
    pub rule: Rule,
    pub t: usize,
    pub binaries: Vec<usize>,
    pub rows: Vec<BigMRow>,
    pub logic: Vec<LogicRow>,
}

impl IndicatorGroup {
    /// Whether `(x, bins)` satisfies every row of the group within `tol`.
    pub fn satisfied_by(&self, x: &[f64], bins: &[bool], tol: f64) -> bool {
        self.rows.iter().all(|r| r.violation(x, bins) <= tol) && self.logic.iter().all(|l| l.satisfied(bins))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub window_len: usize,
    pub n_vitals: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rates: Vec<RateRow>,
    pub linear: Vec<RelationRow>,
    pub indicators: Vec<IndicatorGroup>,
    pub n_binaries: usize,
    /// A point satisfying every row, found at build time.
    pub witness: Vec<f64>,
}

impl ConstraintSet {
    pub fn n_vars(&self) -> usize {
        self.n_vitals * self.window_len
    }

    /// Rate and relation rows as plain affine inequalities.
    pub fn affine_rows(&self) -> Vec<LinearRow> {
        let w = self.window_len;
        let mut rows = Vec::with_capacity(2 * self.rates.len() + self.linear.len());
        for r in &self.rates {
            let (cur, prev) = (var_index(r.vital, r.t, w), var_index(r.vital, r.t - 1, w));
            rows.push(LinearRow::new(vec![(cur, 1.0), (prev, -1.0)], r.limit));
            rows.push(LinearRow::new(vec![(cur, -1.0), (prev, 1.0)], r.limit));
        }
        rows.extend(self.linear.iter().map(|l| l.row.clone()));
        rows
    }

    /// Vitals that appear in a rate, relation or rule row.
    pub fn coupled_vitals(&self) -> Vec<usize> {
        let w = self.window_len;
        let mut coupled = vec![false; self.n_vitals];
        for r in &self.rates {
            coupled[r.vital] = true;
        }
        for l in &self.linear {
            for &(j, _) in &l.row.terms {
                coupled[j / w] = true;
            }
        }
        for g in &self.indicators {
            for r in &g.rows {
                coupled[r.var / w] = true;
            }
        }
        (0..self.n_vitals).filter(|&v| coupled[v]).collect()
    }
}

fn solve_box(registry: &VitalRegistry, v: usize) -> (f64, f64) {
    let spec = registry.get(v);
    (
        transform(spec, spec.phys_lo).expect("validated range"),
        transform(spec, spec.phys_hi).expect("validated range"),
    )
}

fn threshold(registry: &VitalRegistry, v: usize, raw: f64) -> f64 {
    transform(registry.get(v), raw).expect("threshold inside transform domain")
}

/// Normal-range box: `[0, 1]` for every variable.
pub fn build_normal(registry: &VitalRegistry, window_len: usize) -> Result<ConstraintSet, BuildError> {
    if window_len < 1 {
        return Err(BuildError::WindowTooShort(window_len));
    }
    let n = registry.len() * window_len;
    Ok(ConstraintSet {
        window_len,
        n_vitals: registry.len(),
        lower: vec![0.0; n],
        upper: vec![1.0; n],
        rates: Vec::new(),
        linear: Vec::new(),
        indicators: Vec::new(),
        n_binaries: 0,
        witness: vec![0.5; n],
    })
}

/// Direction of the bound a binary activates when set to 1.
#[derive(Clone, Copy)]
enum Side {
    AtMost,
    AtLeast,
}

/// Indicator on `var` at solve-space threshold `c` inside box `[lo, hi]`:
/// `b = 1` forces the `side` half, `b = 0` the opposite half.
fn split_rows(var: usize, b: usize, c: f64, (lo, hi): (f64, f64), side: Side) -> [BigMRow; 2] {
    // x <= c when b=1, x <= hi when b=0:   x + (hi - c) b <= hi
    // x >= c when b=0, x >= lo when b=1:  -x - (c - lo) b <= -c
    let at_most_when_set = BigMRow { var, coef: 1.0, binaries: vec![(b, hi - c)], rhs: hi };
    let at_least_when_clear = BigMRow { var, coef: -1.0, binaries: vec![(b, -(c - lo))], rhs: -c };
    // x >= c when b=1:  -x + (c - lo) b <= -lo
    // x <= c when b=0:   x - (hi - c) b <= c
    let at_least_when_set = BigMRow { var, coef: -1.0, binaries: vec![(b, c - lo)], rhs: -lo };
    let at_most_when_clear = BigMRow { var, coef: 1.0, binaries: vec![(b, -(hi - c))], rhs: c };
    match side {
        Side::AtMost => [at_most_when_set, at_least_when_clear],
        Side::AtLeast => [at_least_when_set, at_most_when_clear],
    }
}

/// Only bound on `var` when `b = 1`: `x <= c` (AtMost) or `x >= c`.
fn one_sided_row(var: usize, b: usize, c: f64, (lo, hi): (f64, f64), side: Side) -> BigMRow {
    match side {
        Side::AtMost => BigMRow { var, coef: 1.0, binaries: vec![(b, hi - c)], rhs: hi },
        Side::AtLeast => BigMRow { var, coef: -1.0, binaries: vec![(b, c - lo)], rhs: -lo },
    }
}

struct RuleVitals {
    hco3: Option<usize>,
    base_excess: Option<usize>,
    lactate: Option<usize>,
    ph: Option<usize>,
    paco2: Option<usize>,
}

/// Physical set: bounds, rates, relations and rules for every hour.
///
/// Relations and rules are emitted only when all the vitals they mention
/// are present in `registry`.
pub fn build_physical(registry: &VitalRegistry, window_len: usize) -> Result<ConstraintSet, BuildError> {
    if window_len < 1 {
        return Err(BuildError::WindowTooShort(window_len));
    }
    let w = window_len;
    let nv = registry.len();
    let mut lower = Vec::with_capacity(nv * w);
    let mut upper = Vec::with_capacity(nv * w);
    for v in 0..nv {
        let (lo, hi) = solve_box(registry, v);
        lower.extend(std::iter::repeat_n(lo, w));
        upper.extend(std::iter::repeat_n(hi, w));
    }

    let mut rates = Vec::new();
    for (v, spec) in registry.specs().iter().enumerate() {
        let Some(rate) = spec.max_hourly_change else { continue };
        let (_, width) = affine_parts(spec);
        let limit = if spec.log_transformed {
            // Multiplicative cap: a change of `rate` raw units around the
            // middle of the normal range, expressed in log10(x + 1) units.
            let mid = spec.normal_midpoint();
            ((mid + rate + 1.0) / (mid + 1.0)).log10() / width
        } else {
            rate / width
        };
        for t in 1..w {
            rates.push(RateRow { vital: v, t, limit });
        }
    }

    let linear = relation_rows(registry, w);

    let rv = RuleVitals {
        hco3: registry.index_of("HCO3"),
        base_excess: registry.index_of("BaseExcess"),
        lactate: registry.index_of("Lactate"),
        ph: registry.index_of("pH"),
        paco2: registry.index_of("PaCO2"),
    };
    let mut indicators = Vec::new();
    let mut n_binaries = 0usize;
    for t in 0..w {
        let var = |v: usize| var_index(v, t, w);
        let mut next_bin = || {
            n_binaries += 1;
            n_binaries - 1
        };
        if let (Some(hco3), Some(be)) = (rv.hco3, rv.base_excess) {
            let z = next_bin();
            let mut rows = split_rows(var(hco3), z, threshold(registry, hco3, 10.0), solve_box(registry, hco3), Side::AtMost).to_vec();
            rows.push(one_sided_row(var(be), z, threshold(registry, be, 0.0), solve_box(registry, be), Side::AtMost));
            indicators.push(IndicatorGroup { rule: Rule::LowBicarbonate, t, binaries: vec![z], rows, logic: vec![] });
        }
        if let (Some(lac), Some(be)) = (rv.lactate, rv.base_excess) {
            let z = next_bin();
            let mut rows = split_rows(var(lac), z, threshold(registry, lac, 6.0), solve_box(registry, lac), Side::AtLeast).to_vec();
            rows.push(one_sided_row(var(be), z, threshold(registry, be, 0.0), solve_box(registry, be), Side::AtMost));
            indicators.push(IndicatorGroup { rule: Rule::HighLactate, t, binaries: vec![z], rows, logic: vec![] });
        }
        if let (Some(be), Some(hco3), Some(lac)) = (rv.base_excess, rv.hco3, rv.lactate) {
            let (z, y, s) = (next_bin(), next_bin(), next_bin());
            let mut rows = Vec::new();
            rows.extend(split_rows(var(be), z, threshold(registry, be, 0.0), solve_box(registry, be), Side::AtMost));
            rows.extend(split_rows(var(hco3), y, threshold(registry, hco3, 10.0), solve_box(registry, hco3), Side::AtMost));
            rows.extend(split_rows(var(lac), s, threshold(registry, lac, 6.0), solve_box(registry, lac), Side::AtLeast));
            let logic = vec![LogicRow { binaries: vec![(z, 1.0), (y, -1.0), (s, -1.0)], rhs: 0.0 }];
            indicators.push(IndicatorGroup { rule: Rule::NegativeBaseExcess, t, binaries: vec![z, y, s], rows, logic });
        }
        if let (Some(ph), Some(hco3), Some(paco2)) = (rv.ph, rv.hco3, rv.paco2) {
            let (z, s, y) = (next_bin(), next_bin(), next_bin());
            let mut rows = Vec::new();
            rows.extend(split_rows(var(ph), z, threshold(registry, ph, 7.0), solve_box(registry, ph), Side::AtMost));
            rows.extend(split_rows(var(hco3), s, threshold(registry, hco3, 10.0), solve_box(registry, hco3), Side::AtMost));
            rows.extend(split_rows(var(paco2), y, threshold(registry, paco2, 35.0), solve_box(registry, paco2), Side::AtMost));
            let logic = vec![LogicRow { binaries: vec![(z, 1.0), (s, -1.0), (y, -1.0)], rhs: 0.0 }];
            indicators.push(IndicatorGroup { rule: Rule::Acidemia, t, binaries: vec![z, s, y], rows, logic });
        }
    }

    let mut set = ConstraintSet {
        window_len: w,
        n_vitals: nv,
        lower,
        upper,
        rates,
        linear,
        indicators,
        n_binaries,
        witness: Vec::new(),
    };
    set.witness = find_witness(registry, &set)?;
    Ok(set)
}

fn relation_rows(registry: &VitalRegistry, w: usize) -> Vec<RelationRow> {
    let mut out = Vec::new();
    // Each relation is linear in pre-scale values u_v = offset_v + width_v x_v.
    let scaled = |v: usize| affine_parts(registry.get(v));
    let push = |out: &mut Vec<RelationRow>, relation, t, coefs: &[(usize, f64)], rhs: f64| {
        // sum a_v u_v <= rhs  =>  sum a_v width_v x_v <= rhs - sum a_v offset_v
        let mut terms = Vec::new();
        let mut shift = 0.0;
        for &(v, a) in coefs {
            let (offset, width) = scaled(v);
            terms.push((var_index(v, t, w), a * width));
            shift += a * offset;
        }
        out.push(RelationRow { relation, t, row: LinearRow::new(terms, rhs - shift) });
    };
    let find = |names: &[&str]| names.iter().map(|n| registry.index_of(n)).collect::<Option<Vec<_>>>();

    if let Some(ids) = find(&["MAP", "DBP", "SBP"]) {
        let (map, dbp, sbp) = (ids[0], ids[1], ids[2]);
        let all_linear = ids.iter().all(|&v| !registry.get(v).log_transformed);
        if all_linear {
            for t in 0..w {
                // MAP >= 0.95 (2/3 DBP + 1/3 SBP)
                push(&mut out, Relation::MeanArterialPressure, t, &[(map, -1.0), (dbp, 0.95 * 2.0 / 3.0), (sbp, 0.95 / 3.0)], 0.0);
                // MAP <= 1.05 (2/3 DBP + 1/3 SBP)
                push(&mut out, Relation::MeanArterialPressure, t, &[(map, 1.0), (dbp, -1.05 * 2.0 / 3.0), (sbp, -1.05 / 3.0)], 0.0);
            }
        }
    }
    if let Some(ids) = find(&["Bilirubin_direct", "Bilirubin_total"]) {
        let (direct, total) = (ids[0], ids[1]);
        // A plain ordering survives any shared monotone transform.
        if registry.get(direct).log_transformed == registry.get(total).log_transformed {
            for t in 0..w {
                push(&mut out, Relation::BilirubinOrder, t, &[(direct, 1.0), (total, -1.0)], 0.0);
            }
        }
    }
    if let Some(ids) = find(&["Hct", "Hgb"]) {
        let (hct, hgb) = (ids[0], ids[1]);
        if !registry.get(hct).log_transformed && !registry.get(hgb).log_transformed {
            for t in 0..w {
                // HCT >= 1.5 Hgb
                push(&mut out, Relation::HematocritHemoglobin, t, &[(hct, -1.0), (hgb, 1.5)], 0.0);
            }
        }
    }
    out
}

/// Normal-range midpoints clamped into the physical box, projected onto the
/// affine rows, then checked against every rule. Fails when no binary
/// assignment fits the resulting point.
fn find_witness(registry: &VitalRegistry, set: &ConstraintSet) -> Result<Vec<f64>, BuildError> {
    let w = set.window_len;
    let mut start = vec![0.0; set.n_vars()];
    for (v, spec) in registry.specs().iter().enumerate() {
        let mid = transform(spec, spec.normal_midpoint()).expect("validated range");
        for t in 0..w {
            let i = var_index(v, t, w);
            start[i] = mid.clamp(set.lower[i], set.upper[i]);
        }
    }
    let rows = set.affine_rows();
    let sol = solve_node_qp(&start, &set.lower, &set.upper, &rows, &QpOptions::default())
        .map_err(|e| BuildError::NoWitness(e.to_string()))?;
    for group in &set.indicators {
        if !group_satisfiable(group, &sol.x, set.n_binaries, 1e-9) {
            return Err(BuildError::NoWitness(format!("rule {:?} at hour {}", group.rule, group.t)));
        }
    }
    Ok(sol.x)
}

/// Lexicographically smallest assignment of the group's binaries that fits `x`.
pub fn group_assignment(group: &IndicatorGroup, x: &[f64], n_binaries: usize, tol: f64) -> Option<Vec<bool>> {
    group_assignment_with(group, x, &vec![None; n_binaries], tol)
}

/// As [`group_assignment`], respecting binaries already fixed in `fixed`.
pub fn group_assignment_with(group: &IndicatorGroup, x: &[f64], fixed: &[Option<bool>], tol: f64) -> Option<Vec<bool>> {
    let k = group.binaries.len();
    let mut bins: Vec<bool> = fixed.iter().map(|f| f.unwrap_or(false)).collect();
    'outer: for mask in 0u32..(1 << k) {
        for (pos, &b) in group.binaries.iter().enumerate() {
            // first binary is the most significant bit
            let val = mask >> (k - 1 - pos) & 1 == 1;
            match fixed[b] {
                Some(f) if f != val => continue 'outer,
                _ => bins[b] = val,
            }
        }
        if group.satisfied_by(x, &bins, tol) {
            return Some(group.binaries.iter().map(|&b| bins[b]).collect());
        }
    }
    None
}

pub fn group_satisfiable(group: &IndicatorGroup, x: &[f64], n_binaries: usize, tol: f64) -> bool {
    group_assignment(group, x, n_binaries, tol).is_some()
}
