//! Euclidean projection onto a box intersected with affine half-spaces:
//!
//! ```text
//!     minimize    sum_i (x_i - d_i)^2
//!     subject to  lower <= x <= upper
//!                 a_r' x <= b_r      for every row r
//! ```
//!
//! Variables are first split into independent components by the rows that
//! couple them. Row-free variables are clamped. Each coupled component is
//! solved with the dual active-set method of Goldfarb and Idnani (identity
//! Hessian), followed by an exact re-solve on the final active set and a KKT
//! certificate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sparse affine inequality `sum(coef * x[var]) <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { terms, rhs }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Positive when violated.
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.eval(x) - self.rhs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpOptions {
    pub max_iter: usize,
    pub kkt_tol: f64,
    /// Solve row-free variables by clamping. Disabling it routes every
    /// variable through the active-set solver (used for cross-checks).
    pub clamp_shortcut: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { max_iter: 2_000, kkt_tol: 1e-8, clamp_shortcut: true }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("constraints admit no point")]
    Infeasible,
    #[error("active-set iteration limit reached (KKT residual {residual:e})")]
    NotConverged { residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// `sum (x - d)^2`
    pub objective: f64,
    /// Multiplier of each input row (zero when inactive).
    pub row_multipliers: Vec<f64>,
    pub kkt_residual: f64,
}

/// Connected components of the variable/row incidence graph.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub components: Vec<Component>,
    /// Variables not touched by any row.
    pub free: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Component {
    pub vars: Vec<usize>,
    pub rows: Vec<usize>,
}

impl Decomposition {
    pub fn new(n: usize, rows: &[LinearRow]) -> Self {
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut touched = vec![false; n];
        for row in rows {
            let mut it = row.terms.iter().map(|&(j, _)| j);
            if let Some(first) = it.next() {
                touched[first] = true;
                for j in it {
                    touched[j] = true;
                    let (a, b) = (find(&mut parent, first), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut root_to_comp = vec![usize::MAX; n];
        let mut components: Vec<Component> = Vec::new();
        let mut free = Vec::new();
        for i in 0..n {
            if !touched[i] {
                free.push(i);
                continue;
            }
            let r = find(&mut parent, i);
            if root_to_comp[r] == usize::MAX {
                root_to_comp[r] = components.len();
                components.push(Component { vars: Vec::new(), rows: Vec::new() });
            }
            components[root_to_comp[r]].vars.push(i);
        }
        for (ri, row) in rows.iter().enumerate() {
            if let Some(&(j, _)) = row.terms.first() {
                let c = root_to_comp[find(&mut parent, j)];
                components[c].rows.push(ri);
            }
        }
        Self { components, free }
    }
}

/// Projects `target` onto `{lower <= x <= upper, rows}`.
pub fn solve_node_qp(
    target: &[f64],
    lower: &[f64],
    upper: &[f64],
    rows: &[LinearRow],
    opts: &QpOptions,
) -> Result<QpSolution, QpError> {
    let decomposition = Decomposition::new(target.len(), rows);
    solve_decomposed(&decomposition, target, lower, upper, rows, opts)
}

pub fn solve_decomposed(
    decomposition: &Decomposition,
    target: &[f64],
    lower: &[f64],
    upper: &[f64],
    rows: &[LinearRow],
    opts: &QpOptions,
) -> Result<QpSolution, QpError> {
    let n = target.len();
    let mut x = vec![0.0; n];
    let mut row_multipliers = vec![0.0; rows.len()];
    let mut residual: f64 = 0.0;

    let mut singletons = Vec::new();
    for &i in &decomposition.free {
        if lower[i] > upper[i] {
            return Err(QpError::Infeasible);
        }
        if opts.clamp_shortcut {
            x[i] = target[i].clamp(lower[i], upper[i]);
        } else {
            singletons.push(i);
        }
    }
    for &i in &singletons {
        let sol = solve_component(&[i], &[], target, lower, upper, rows, opts)?;
        x[i] = sol.x[0];
        residual = residual.max(sol.residual);
    }
    for comp in &decomposition.components {
        let sol = solve_component(&comp.vars, &comp.rows, target, lower, upper, rows, opts)?;
        for (k, &i) in comp.vars.iter().enumerate() {
            x[i] = sol.x[k];
        }
        for (k, &r) in comp.rows.iter().enumerate() {
            row_multipliers[r] = sol.row_multipliers[k];
        }
        residual = residual.max(sol.residual);
    }
    let objective = x.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(QpSolution { x, objective, row_multipliers, kkt_residual: residual })
}

pub struct ComponentSolution {
    pub x: Vec<f64>,
    pub row_multipliers: Vec<f64>,
    pub residual: f64,
}

/// Dense constraint `a' x <= b` over a component's local variables.
struct DenseRow {
    a: DVector<f64>,
    b: f64,
    /// `Some((local var, is_upper))` for bound rows.
    bound: Option<(usize, bool)>,
}

pub fn solve_component(
    vars: &[usize],
    row_ids: &[usize],
    target: &[f64],
    lower: &[f64],
    upper: &[f64],
    rows: &[LinearRow],
    opts: &QpOptions,
) -> Result<ComponentSolution, QpError> {
    let n = vars.len();
    let local = |global: usize| vars.binary_search(&global).expect("row variable inside component");
    let mut cons: Vec<DenseRow> = Vec::with_capacity(row_ids.len() + 2 * n);
    for &r in row_ids {
        let mut a = DVector::zeros(n);
        for &(j, coef) in &rows[r].terms {
            a[local(j)] += coef;
        }
        cons.push(DenseRow { a, b: rows[r].rhs, bound: None });
    }
    for (k, &i) in vars.iter().enumerate() {
        if lower[i] > upper[i] {
            return Err(QpError::Infeasible);
        }
        if upper[i].is_finite() {
            let mut a = DVector::zeros(n);
            a[k] = 1.0;
            cons.push(DenseRow { a, b: upper[i], bound: Some((k, true)) });
        }
        if lower[i].is_finite() {
            let mut a = DVector::zeros(n);
            a[k] = -1.0;
            cons.push(DenseRow { a, b: -lower[i], bound: Some((k, false)) });
        }
    }
    let d = DVector::from_iterator(n, vars.iter().map(|&i| target[i]));
    let (x, active, mult) = goldfarb_idnani(&d, &cons, opts.max_iter)?;
    let (x, mult) = polish(&d, &cons, &active, x, mult);
    let residual = kkt_residual(&d, &cons, &active, &x, &mult);
    if residual > opts.kkt_tol {
        return Err(QpError::NotConverged { residual });
    }
    let mut row_multipliers = vec![0.0; row_ids.len()];
    for (&k, &u) in active.iter().zip(&mult) {
        if k < row_ids.len() {
            row_multipliers[k] = u;
        }
    }
    Ok(ComponentSolution { x: x.iter().copied().collect(), row_multipliers, residual })
}

fn violation(c: &DenseRow, x: &DVector<f64>) -> f64 {
    c.a.dot(x) - c.b
}

/// Returns `(x, active set, multipliers)`.
fn goldfarb_idnani(
    d: &DVector<f64>,
    cons: &[DenseRow],
    max_iter: usize,
) -> Result<(DVector<f64>, Vec<usize>, Vec<f64>), QpError> {
    let n = d.len();
    let mut x = d.clone();
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut iterations = 0usize;

    loop {
        // Most violated inactive constraint; first index wins ties.
        let mut pick: Option<(usize, f64)> = None;
        for (j, c) in cons.iter().enumerate() {
            if active.contains(&j) {
                continue;
            }
            let s = violation(c, &x);
            let tol = 1e-13 * (1.0 + c.b.abs());
            if s > tol && pick.is_none_or(|(_, best)| s > best) {
                pick = Some((j, s));
            }
        }
        let Some((p, _)) = pick else {
            return Ok((x, active, u));
        };
        let ap = &cons[p].a;
        let mut up = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                let residual = kkt_residual(d, cons, &active, &x, &u);
                return Err(QpError::NotConverged { residual });
            }
            let (r, z) = split_direction(cons, &active, ap, n);
            let zz = z.dot(&z);
            let full_step = if zz > 1e-20 * ap.dot(ap) {
                violation(&cons[p], &x) / z.dot(ap)
            } else {
                f64::INFINITY
            };
            let mut partial = f64::INFINITY;
            let mut drop = None;
            for (k, &rk) in r.iter().enumerate() {
                if rk > 1e-14 {
                    let ratio = u[k] / rk;
                    if ratio < partial {
                        partial = ratio;
                        drop = Some(k);
                    }
                }
            }
            if !full_step.is_finite() && !partial.is_finite() {
                return Err(QpError::Infeasible);
            }
            let step = full_step.min(partial);
            if full_step.is_finite() {
                x -= step * &z;
            }
            for (uk, rk) in u.iter_mut().zip(r.iter()) {
                *uk -= step * rk;
            }
            up += step;
            if full_step <= partial {
                active.push(p);
                u.push(up);
                break;
            }
            let k = drop.expect("partial step has a blocking constraint");
            active.remove(k);
            u.remove(k);
        }
    }
}

/// Splits `ap = N r + z` with `z` orthogonal to the active normals `N`.
fn split_direction(cons: &[DenseRow], active: &[usize], ap: &DVector<f64>, n: usize) -> (Vec<f64>, DVector<f64>) {
    if active.is_empty() {
        return (Vec::new(), ap.clone());
    }
    let nmat = DMatrix::from_columns(&active.iter().map(|&k| cons[k].a.clone()).collect::<Vec<_>>());
    let qr = nmat.clone().qr();
    let q = qr.q();
    let rmat = qr.r();
    let qtb = q.transpose() * ap;
    let r = rmat.solve_upper_triangular(&qtb).unwrap_or_else(|| DVector::zeros(active.len()));
    let z = ap - &nmat * &r;
    debug_assert_eq!(z.len(), n);
    (r.iter().copied().collect(), z)
}

/// Exact solve on the final working set: `x = d - N u`, `N' x = b`.
fn polish(
    d: &DVector<f64>,
    cons: &[DenseRow],
    active: &[usize],
    x0: DVector<f64>,
    u0: Vec<f64>,
) -> (DVector<f64>, Vec<f64>) {
    if active.is_empty() {
        return (x0, u0);
    }
    let nmat = DMatrix::from_columns(&active.iter().map(|&k| cons[k].a.clone()).collect::<Vec<_>>());
    let b = DVector::from_iterator(active.len(), active.iter().map(|&k| cons[k].b));
    let rhs = nmat.transpose() * d - b;
    let qr = nmat.clone().qr();
    let rmat = qr.r();
    let Some(w) = rmat.transpose().solve_lower_triangular(&rhs) else {
        return (x0, u0);
    };
    let Some(u) = rmat.solve_upper_triangular(&w) else {
        return (x0, u0);
    };
    let mut x = d - &nmat * &u;
    for &k in active {
        if let Some((i, is_upper)) = cons[k].bound {
            x[i] = if is_upper { cons[k].b } else { -cons[k].b };
        }
    }
    let u: Vec<f64> = u.iter().copied().collect();
    if kkt_residual(d, cons, active, &x, &u) <= kkt_residual(d, cons, active, &x0, &u0) {
        (x, u)
    } else {
        (x0, u0)
    }
}

fn kkt_residual(d: &DVector<f64>, cons: &[DenseRow], active: &[usize], x: &DVector<f64>, u: &[f64]) -> f64 {
    let mut grad = x - d;
    let mut worst: f64 = 0.0;
    for (&k, &uk) in active.iter().zip(u) {
        grad += uk * &cons[k].a;
        worst = worst.max(-uk).max((uk * violation(&cons[k], x)).abs());
    }
    worst = worst.max(grad.amax());
    for c in cons {
        worst = worst.max(violation(c, x));
    }
    worst
}
