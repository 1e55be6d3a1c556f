//! Best-first branch-and-bound over the indicator binaries.
//!
//! A node fixes some binaries. Its relaxation keeps box and affine rows,
//! turns every big-M row whose binaries are all fixed into a bound on its
//! variable and drops the rest (the box hull of the disjunction). The
//! relaxation is a projection onto a box intersected with the affine rows,
//! so each node is one call into the QP subsolver; components whose bounds
//! did not change since an earlier node are reused from a cache.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::set::group_assignment_with;
use crate::constraints::{var_index, ConstraintSet, IndicatorGroup};
use crate::qp::{solve_component, Decomposition, LinearRow, QpError, QpOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Absolute optimality gap on the objective.
    pub gap_tol: f64,
    /// Row tolerance used when checking a relaxation point against the rules.
    pub feas_tol: f64,
    pub node_budget: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-6, feas_tol: 1e-6, node_budget: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    NodeLimit,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    /// Solve-space window, `corrected[var_index(v, t, w)]`.
    pub corrected: Vec<f64>,
    /// `sum_t (d[v,t] - corrected[v,t])^2` per vital.
    pub phys_dist: Vec<f64>,
    pub binaries: Vec<bool>,
    pub status: Status,
    pub nodes_explored: usize,
    /// Sum of `phys_dist` in vital order.
    pub objective: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("window has {got} values, constraint set expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("node relaxation failed: {0}")]
    Qp(#[from] QpError),
}

/// Tolerance for accepting a relaxation point as rule-feasible. Kept well
/// below `feas_tol` so that accepted points verify comfortably.
fn completion_tol(opts: &SolverOptions) -> f64 {
    opts.feas_tol.min(1e-8)
}

/// Ties on the objective closer than this are broken on the binary vector.
const TIE_EPS: f64 = 1e-12;

struct Relaxation<'a> {
    set: &'a ConstraintSet,
    target: &'a [f64],
    rows: Vec<LinearRow>,
    decomposition: Decomposition,
    qp: QpOptions,
    cache: HashMap<(usize, Vec<u64>), Option<Vec<f64>>>,
}

impl<'a> Relaxation<'a> {
    fn new(set: &'a ConstraintSet, target: &'a [f64]) -> Self {
        let rows = set.affine_rows();
        let decomposition = Decomposition::new(set.n_vars(), &rows);
        Self { set, target, rows, decomposition, qp: QpOptions::default(), cache: HashMap::new() }
    }

    /// Node bounds under the fixings, `None` when they cross.
    fn bounds(&self, fixed: &[Option<bool>]) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut lower = self.set.lower.clone();
        let mut upper = self.set.upper.clone();
        for group in &self.set.indicators {
            for row in &group.rows {
                let mut g_sum = 0.0;
                let mut all_fixed = true;
                for &(b, g) in &row.binaries {
                    match fixed[b] {
                        Some(true) => g_sum += g,
                        Some(false) => {}
                        None => all_fixed = false,
                    }
                }
                if !all_fixed {
                    continue;
                }
                let bound = (row.rhs - g_sum) / row.coef;
                if row.coef > 0.0 {
                    upper[row.var] = upper[row.var].min(bound);
                } else {
                    lower[row.var] = lower[row.var].max(bound);
                }
            }
        }
        lower.iter().zip(&upper).all(|(l, u)| l <= u).then_some((lower, upper))
    }

    /// Relaxation minimizer and objective, `None` if the node is empty.
    fn solve(&mut self, fixed: &[Option<bool>]) -> Result<Option<(Vec<f64>, f64)>, QpError> {
        let Some((lower, upper)) = self.bounds(fixed) else {
            return Ok(None);
        };
        let mut x = vec![0.0; self.target.len()];
        for &i in &self.decomposition.free {
            x[i] = self.target[i].clamp(lower[i], upper[i]);
        }
        for (c, comp) in self.decomposition.components.iter().enumerate() {
            let key: Vec<u64> = comp.vars.iter().flat_map(|&i| [lower[i].to_bits(), upper[i].to_bits()]).collect();
            let entry = match self.cache.get(&(c, key.clone())) {
                Some(hit) => hit.clone(),
                None => {
                    let solved = solve_with_retry(&comp.vars, &comp.rows, self.target, &lower, &upper, &self.rows, &self.qp)?;
                    self.cache.insert((c, key), solved.clone());
                    solved
                }
            };
            let Some(local) = entry else {
                return Ok(None);
            };
            for (k, &i) in comp.vars.iter().enumerate() {
                x[i] = local[k];
            }
        }
        let obj = squared_distance(&x, self.target);
        Ok(Some((x, obj)))
    }
}

fn solve_with_retry(
    vars: &[usize],
    rows_idx: &[usize],
    target: &[f64],
    lower: &[f64],
    upper: &[f64],
    rows: &[LinearRow],
    opts: &QpOptions,
) -> Result<Option<Vec<f64>>, QpError> {
    let mut opts = *opts;
    for attempt in 0..2 {
        match solve_component(vars, rows_idx, target, lower, upper, rows, &opts) {
            Ok(sol) => return Ok(Some(sol.x)),
            Err(QpError::Infeasible) => return Ok(None),
            Err(e @ QpError::NotConverged { .. }) if attempt == 1 => return Err(e),
            Err(QpError::NotConverged { .. }) => opts.max_iter *= 10,
        }
    }
    unreachable!("retry loop returns")
}

fn squared_distance(x: &[f64], d: &[f64]) -> f64 {
    x.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Fixes binaries forced by the logic rows; `false` if some row cannot hold.
fn propagate(set: &ConstraintSet, fixed: &mut [Option<bool>]) -> bool {
    loop {
        let mut changed = false;
        for row in set.indicators.iter().flat_map(|g| &g.logic) {
            let min_lhs: f64 = row
                .binaries
                .iter()
                .map(|&(b, g)| match fixed[b] {
                    Some(true) => g,
                    Some(false) => 0.0,
                    None => g.min(0.0),
                })
                .sum();
            if min_lhs > row.rhs + 1e-12 {
                return false;
            }
            for &(b, g) in &row.binaries {
                if fixed[b].is_none() && min_lhs - g.min(0.0) + g.max(0.0) > row.rhs + 1e-12 {
                    fixed[b] = Some(g < 0.0);
                    changed = true;
                }
            }
        }
        if !changed {
            return true;
        }
    }
}

/// First group that no completion of `fixed` satisfies at `x`.
fn first_failing<'s>(set: &'s ConstraintSet, x: &[f64], fixed: &[Option<bool>], tol: f64) -> Option<&'s IndicatorGroup> {
    set.indicators.iter().find(|g| group_assignment_with(g, x, fixed, tol).is_none())
}

/// Lexicographically smallest binaries consistent with `x`.
fn assignment(set: &ConstraintSet, x: &[f64], tol: f64) -> Option<Vec<bool>> {
    let free = vec![None; set.n_binaries];
    let mut bins = vec![false; set.n_binaries];
    for g in &set.indicators {
        let a = group_assignment_with(g, x, &free, tol)?;
        for (&b, v) in g.binaries.iter().zip(a) {
            bins[b] = v;
        }
    }
    Some(bins)
}

struct Incumbent {
    x: Vec<f64>,
    obj: f64,
    bins: Vec<bool>,
}

impl Incumbent {
    fn offer(&mut self, x: Vec<f64>, obj: f64, bins: Vec<bool>) {
        let better = obj < self.obj - TIE_EPS || ((obj - self.obj).abs() <= TIE_EPS && bins < self.bins);
        if better {
            *self = Incumbent { x, obj, bins };
        }
    }
}

struct Node {
    lb: f64,
    seq: usize,
    fixed: Vec<Option<bool>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: reverse so the smallest (lb, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.lb.total_cmp(&self.lb).then_with(|| other.seq.cmp(&self.seq))
    }
}

fn branch_var(group: &IndicatorGroup, fixed: &[Option<bool>]) -> Option<usize> {
    group.binaries.iter().copied().find(|&b| fixed[b].is_none())
}

/// Euclidean projection of `data` onto the physical set.
pub fn project_physical(data: &[f64], set: &ConstraintSet, opts: &SolverOptions) -> Result<ProjectionResult, ProjectionError> {
    if data.len() != set.n_vars() {
        return Err(ProjectionError::Dimension { expected: set.n_vars(), got: data.len() });
    }
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(ProjectionError::NonFinite(i));
    }
    let tol = completion_tol(opts);
    let mut relax = Relaxation::new(set, data);
    let mut root = vec![None; set.n_binaries];
    if !propagate(set, &mut root) {
        return Ok(infeasible(data, set));
    }
    let Some((_, root_lb)) = relax.solve(&root)? else {
        return Ok(infeasible(data, set));
    };

    let witness_bins = assignment(set, &set.witness, tol).unwrap_or_else(|| vec![false; set.n_binaries]);
    let mut inc = Incumbent { obj: squared_distance(&set.witness, data), x: set.witness.clone(), bins: witness_bins };
    dive(&mut relax, set, root.clone(), tol, &mut inc)?;

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node { lb: root_lb, seq, fixed: root });
    let mut nodes = 0usize;
    let mut status = Status::Optimal;
    while let Some(node) = heap.pop() {
        if node.lb >= inc.obj - opts.gap_tol {
            break;
        }
        if nodes >= opts.node_budget {
            status = Status::NodeLimit;
            break;
        }
        nodes += 1;
        let Some((x, obj)) = relax.solve(&node.fixed)? else {
            continue;
        };
        let Some(group) = first_failing(set, &x, &node.fixed, tol) else {
            if let Some(bins) = assignment(set, &x, tol) {
                inc.offer(x, obj, bins);
            }
            continue;
        };
        let Some(b) = branch_var(group, &node.fixed) else {
            // All binaries of the group fixed yet its bounds are not met:
            // numerically empty node.
            continue;
        };
        for value in [false, true] {
            let mut fixed = node.fixed.clone();
            fixed[b] = Some(value);
            if !propagate(set, &mut fixed) {
                continue;
            }
            if let Some((_, lb)) = relax.solve(&fixed)? {
                if lb < inc.obj - opts.gap_tol {
                    seq += 1;
                    heap.push(Node { lb, seq, fixed });
                }
            }
        }
    }
    Ok(finish(data, set, inc, status, nodes))
}

/// Greedy descent into the cheaper child until a rule-feasible point appears.
fn dive(
    relax: &mut Relaxation<'_>,
    set: &ConstraintSet,
    mut fixed: Vec<Option<bool>>,
    tol: f64,
    inc: &mut Incumbent,
) -> Result<(), QpError> {
    loop {
        let Some((x, obj)) = relax.solve(&fixed)? else {
            return Ok(());
        };
        let Some(group) = first_failing(set, &x, &fixed, tol) else {
            if let Some(bins) = assignment(set, &x, tol) {
                inc.offer(x, obj, bins);
            }
            return Ok(());
        };
        let Some(b) = branch_var(group, &fixed) else {
            return Ok(());
        };
        let mut best: Option<(f64, Vec<Option<bool>>)> = None;
        for value in [false, true] {
            let mut child = fixed.clone();
            child[b] = Some(value);
            if !propagate(set, &mut child) {
                continue;
            }
            if let Some((_, lb)) = relax.solve(&child)? {
                if best.as_ref().is_none_or(|(l, _)| lb < *l) {
                    best = Some((lb, child));
                }
            }
        }
        match best {
            Some((_, child)) => fixed = child,
            None => return Ok(()),
        }
    }
}

fn per_vital_dist(x: &[f64], d: &[f64], n_vitals: usize, w: usize) -> Vec<f64> {
    (0..n_vitals)
        .map(|v| (0..w).map(|t| var_index(v, t, w)).map(|i| (d[i] - x[i]) * (d[i] - x[i])).sum())
        .collect()
}

fn finish(data: &[f64], set: &ConstraintSet, inc: Incumbent, status: Status, nodes: usize) -> ProjectionResult {
    let phys_dist = per_vital_dist(&inc.x, data, set.n_vitals, set.window_len);
    let objective = phys_dist.iter().sum();
    ProjectionResult { corrected: inc.x, phys_dist, binaries: inc.bins, status, nodes_explored: nodes, objective }
}

fn infeasible(data: &[f64], set: &ConstraintSet) -> ProjectionResult {
    ProjectionResult {
        corrected: data.to_vec(),
        phys_dist: vec![0.0; set.n_vitals],
        binaries: vec![false; set.n_binaries],
        status: Status::Infeasible,
        nodes_explored: 0,
        objective: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{build_physical, standard_registry};
    use crate::preprocess::transform::{inverse_transform, transform};
    use crate::projection::verify_feasibility;

    fn set_raw(reg: &crate::constraints::VitalRegistry, x: &mut [f64], w: usize, name: &str, t: usize, raw: f64) {
        let v = reg.index_of(name).unwrap();
        x[var_index(v, t, w)] = transform(reg.get(v), raw).unwrap();
    }

    #[test]
    fn witness_is_a_fixed_point() {
        let reg = standard_registry();
        let set = build_physical(&reg, 6).unwrap();
        let r = project_physical(&set.witness, &set, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!(r.objective <= 1e-20);
        assert!(r.phys_dist.iter().all(|&p| p <= 1e-20));
        for (a, b) in r.corrected.iter().zip(&set.witness) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn hot_temperature_clamps_to_upper_bound() {
        let reg = standard_registry();
        let set = build_physical(&reg, 6).unwrap();
        let mut x = set.witness.clone();
        for t in 0..6 {
            set_raw(&reg, &mut x, 6, "Temp", t, 50.0);
        }
        let r = project_physical(&x, &set, &SolverOptions::default()).unwrap();
        let temp = reg.index_of("Temp").unwrap();
        for t in 0..6 {
            let raw = inverse_transform(reg.get(temp), r.corrected[var_index(temp, t, 6)]);
            assert!((raw - 45.0).abs() < 1e-9, "{raw}");
        }
        // only Temp moved
        for (v, &p) in r.phys_dist.iter().enumerate() {
            assert_eq!(p > 0.0, v == temp);
        }
    }

    #[test]
    fn conflicting_acid_base_is_resolved() {
        let reg = standard_registry();
        let set = build_physical(&reg, 1).unwrap();
        let mut x = set.witness.clone();
        set_raw(&reg, &mut x, 1, "HCO3", 0, 8.0);
        set_raw(&reg, &mut x, 1, "BaseExcess", 0, 5.0);
        assert!(!verify_feasibility(&x, &set, 1e-6).is_empty());
        let r = project_physical(&x, &set, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!(verify_feasibility(&r.corrected, &set, 1e-6).is_empty());
        assert!(r.objective > 0.0);
        assert!((r.objective - r.phys_dist.iter().sum::<f64>()).abs() == 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        let reg = standard_registry();
        let set = build_physical(&reg, 2).unwrap();
        let opts = SolverOptions::default();
        assert!(matches!(project_physical(&[0.0; 3], &set, &opts), Err(ProjectionError::Dimension { .. })));
        let mut x = set.witness.clone();
        x[5] = f64::NAN;
        assert_eq!(project_physical(&x, &set, &opts).unwrap_err(), ProjectionError::NonFinite(5));
    }

    #[test]
    fn zero_budget_returns_feasible_incumbent() {
        let reg = standard_registry();
        let set = build_physical(&reg, 2).unwrap();
        let mut x = set.witness.clone();
        set_raw(&reg, &mut x, 2, "HCO3", 0, 8.0);
        set_raw(&reg, &mut x, 2, "BaseExcess", 0, 5.0);
        set_raw(&reg, &mut x, 2, "pH", 1, 6.9);
        set_raw(&reg, &mut x, 2, "PaCO2", 1, 60.0);
        let opts = SolverOptions { node_budget: 0, ..SolverOptions::default() };
        let r = project_physical(&x, &set, &opts).unwrap();
        assert!(matches!(r.status, Status::NodeLimit | Status::Optimal));
        assert!(verify_feasibility(&r.corrected, &set, 1e-6).is_empty());
        let full = project_physical(&x, &set, &SolverOptions::default()).unwrap();
        assert!(full.objective <= r.objective + 1e-9);
    }

    #[test]
    fn logic_propagation() {
        let reg = standard_registry().subset(&["HCO3", "BaseExcess", "Lactate"]).unwrap();
        let set = build_physical(&reg, 1).unwrap();
        let g = set.indicators.iter().find(|g| !g.logic.is_empty()).unwrap();
        let (z, y, s) = (g.binaries[0], g.binaries[1], g.binaries[2]);
        let mut fixed = vec![None; set.n_binaries];
        fixed[z] = Some(true);
        fixed[y] = Some(false);
        assert!(propagate(&set, &mut fixed));
        assert_eq!(fixed[s], Some(true));
        let mut fixed = vec![None; set.n_binaries];
        fixed[z] = Some(true);
        fixed[y] = Some(false);
        fixed[s] = Some(false);
        assert!(!propagate(&set, &mut fixed));
    }
}
