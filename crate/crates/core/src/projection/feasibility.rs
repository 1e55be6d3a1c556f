//! Row-by-row feasibility check against a constraint set.

use serde::{Deserialize, Serialize};

use crate::constraints::set::group_assignment;
use crate::constraints::{var_index, ConstraintSet, IndicatorGroup, Relation, Rule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RowKind {
    Lower { var: usize },
    Upper { var: usize },
    Rate { vital: usize, t: usize },
    Relation { relation: Relation, t: usize },
    /// No binary assignment satisfies the group.
    Rule { rule: Rule, t: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: RowKind,
    /// Amount by which the row is exceeded; for rules, the smallest worst-row
    /// excess over all binary assignments.
    pub excess: f64,
}

/// Every row of `set` violated by more than `tol` at `x`. Empty means feasible.
pub fn verify_feasibility(x: &[f64], set: &ConstraintSet, tol: f64) -> Vec<Violation> {
    assert_eq!(x.len(), set.n_vars(), "point dimension");
    let mut out = Vec::new();
    for (i, &xi) in x.iter().enumerate() {
        if set.lower[i] - xi > tol {
            out.push(Violation { kind: RowKind::Lower { var: i }, excess: set.lower[i] - xi });
        }
        if xi - set.upper[i] > tol {
            out.push(Violation { kind: RowKind::Upper { var: i }, excess: xi - set.upper[i] });
        }
    }
    let w = set.window_len;
    for r in &set.rates {
        let step = (x[var_index(r.vital, r.t, w)] - x[var_index(r.vital, r.t - 1, w)]).abs();
        if step - r.limit > tol {
            out.push(Violation { kind: RowKind::Rate { vital: r.vital, t: r.t }, excess: step - r.limit });
        }
    }
    for l in &set.linear {
        let excess = l.row.violation(x);
        if excess > tol {
            out.push(Violation { kind: RowKind::Relation { relation: l.relation, t: l.t }, excess });
        }
    }
    for g in &set.indicators {
        if group_assignment(g, x, set.n_binaries, tol).is_none() {
            out.push(Violation { kind: RowKind::Rule { rule: g.rule, t: g.t }, excess: least_group_excess(g, x, set.n_binaries) });
        }
    }
    out
}

fn least_group_excess(group: &IndicatorGroup, x: &[f64], n_binaries: usize) -> f64 {
    let k = group.binaries.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << k) {
        let mut bins = vec![false; n_binaries];
        for (pos, &b) in group.binaries.iter().enumerate() {
            bins[b] = mask >> (k - 1 - pos) & 1 == 1;
        }
        if !group.logic.iter().all(|l| l.satisfied(&bins)) {
            continue;
        }
        let worst = group.rows.iter().map(|r| r.violation(x, &bins)).fold(0.0, f64::max);
        best = best.min(worst);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{build_physical, standard_registry};
    use crate::preprocess::transform::transform;

    #[test]
    fn witness_passes() {
        let reg = standard_registry();
        let set = build_physical(&reg, 6).unwrap();
        assert!(verify_feasibility(&set.witness, &set, 1e-6).is_empty());
    }

    #[test]
    fn hot_temperature_is_one_box_row() {
        let reg = standard_registry();
        let set = build_physical(&reg, 1).unwrap();
        let temp = reg.index_of("Temp").unwrap();
        let mut x = set.witness.clone();
        x[temp] = transform(reg.get(temp), 50.0).unwrap();
        let report = verify_feasibility(&x, &set, 1e-6);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].kind, RowKind::Upper { var: temp });
        assert!((report[0].excess - 2.5).abs() < 1e-12);
    }

    #[test]
    fn acid_base_conflict_is_a_rule_violation() {
        let reg = standard_registry();
        let set = build_physical(&reg, 1).unwrap();
        let mut x = set.witness.clone();
        let hco3 = reg.index_of("HCO3").unwrap();
        let be = reg.index_of("BaseExcess").unwrap();
        x[hco3] = transform(reg.get(hco3), 8.0).unwrap();
        x[be] = transform(reg.get(be), 5.0).unwrap();
        let report = verify_feasibility(&x, &set, 1e-6);
        assert!(report.iter().any(|v| v.kind == RowKind::Rule { rule: Rule::LowBicarbonate, t: 0 }));
        assert!(report.iter().all(|v| matches!(v.kind, RowKind::Rule { .. }) && v.excess > 0.0));
    }

    #[test]
    fn rate_jump_reported() {
        let reg = standard_registry();
        let set = build_physical(&reg, 2).unwrap();
        let temp = reg.index_of("Temp").unwrap();
        let mut x = set.witness.clone();
        x[var_index(temp, 1, 2)] += 1.5;
        let report = verify_feasibility(&x, &set, 1e-6);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].kind, RowKind::Rate { vital: temp, t: 1 });
    }
}
