//! Independent reference solvers used by the integration and acceptance tests.
#![allow(dead_code)]

use clinproj::constraints::{ConstraintSet, VitalRegistry};
use clinproj::qp::LinearRow;

/// Exact projection onto a box plus a few rows by enumerating every
/// bound status (lower / upper / free) and active-row subset, keeping the
/// first combination that satisfies the KKT conditions.
pub fn kkt_enumeration(d: &[f64], lower: &[f64], upper: &[f64], rows: &[LinearRow]) -> Option<Vec<f64>> {
    let n = d.len();
    let m = rows.len();
    assert!(n <= 12 && m <= 6, "oracle is exponential");
    let dense: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut a = vec![0.0; n];
            for &(j, c) in &r.terms {
                a[j] += c;
            }
            a
        })
        .collect();
    let tol = 1e-9;
    let total = 3usize.pow(n as u32);
    for subset in 0u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|r| subset >> r & 1 == 1).collect();
        for code in 0..total {
            // status: 0 free, 1 lower, 2 upper
            let mut status = vec![0u8; n];
            let mut c = code;
            for s in status.iter_mut() {
                *s = (c % 3) as u8;
                c /= 3;
            }
            let mut x = d.to_vec();
            for i in 0..n {
                match status[i] {
                    1 => x[i] = lower[i],
                    2 => x[i] = upper[i],
                    _ => {}
                }
            }
            let free: Vec<usize> = (0..n).filter(|&i| status[i] == 0).collect();
            // (A_F A_F') lambda = A x0 - b with x0 = fixed part + d on free
            let k = active.len();
            let mut g = vec![vec![0.0; k]; k];
            let mut rhs = vec![0.0; k];
            for (p, &rp) in active.iter().enumerate() {
                rhs[p] = dense[rp].iter().zip(&x).map(|(a, xi)| a * xi).sum::<f64>() - rows[rp].rhs;
                for (q, &rq) in active.iter().enumerate() {
                    g[p][q] = free.iter().map(|&i| dense[rp][i] * dense[rq][i]).sum();
                }
            }
            let Some(lambda) = solve_dense(g, rhs) else { continue };
            if lambda.iter().any(|&l| l < -tol) {
                continue;
            }
            for &i in &free {
                x[i] = d[i] - active.iter().zip(&lambda).map(|(&r, l)| dense[r][i] * l).sum::<f64>();
            }
            let feasible = (0..n).all(|i| x[i] >= lower[i] - tol && x[i] <= upper[i] + tol)
                && rows.iter().all(|r| r.violation(&x) <= tol)
                && active.iter().all(|&r| rows[r].violation(&x).abs() <= tol);
            if !feasible {
                continue;
            }
            let dual_ok = (0..n).all(|i| {
                let at: f64 = active.iter().zip(&lambda).map(|(&r, l)| dense[r][i] * l).sum();
                match status[i] {
                    1 => x[i] - d[i] + at >= -tol,
                    2 => d[i] - x[i] - at >= -tol,
                    _ => true,
                }
            });
            if dual_ok {
                return Some(x);
            }
        }
    }
    None
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Dykstra's alternating projections onto the box and each half-space.
pub fn dykstra(d: &[f64], lower: &[f64], upper: &[f64], rows: &[LinearRow]) -> Vec<f64> {
    let n = d.len();
    let mut x = d.to_vec();
    let sets = rows.len() + 1;
    let mut corr = vec![vec![0.0; n]; sets];
    for _ in 0..200_000 {
        let before = x.clone();
        for (s, c) in corr.iter_mut().enumerate() {
            let y: Vec<f64> = x.iter().zip(c.iter()).map(|(a, b)| a + b).collect();
            let p = if s == 0 {
                y.iter().enumerate().map(|(i, &v)| v.clamp(lower[i], upper[i])).collect::<Vec<_>>()
            } else {
                let row = &rows[s - 1];
                let viol = row.violation(&y);
                let norm2: f64 = row.terms.iter().map(|&(_, a)| a * a).sum();
                let mut p = y.clone();
                if viol > 0.0 && norm2 > 0.0 {
                    for &(j, a) in &row.terms {
                        p[j] -= viol / norm2 * a;
                    }
                }
                p
            };
            for i in 0..n {
                c[i] = y[i] - p[i];
            }
            x = p;
        }
        let moved: f64 = x.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if moved < 1e-15 {
            break;
        }
    }
    x
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Node bounds implied by a full binary assignment, `None` when empty or when
/// a logic row fails.
pub fn bounds_for(set: &ConstraintSet, bins: &[bool]) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut lo = set.lower.clone();
    let mut hi = set.upper.clone();
    for g in &set.indicators {
        if !g.logic.iter().all(|l| l.satisfied(bins)) {
            return None;
        }
        for r in &g.rows {
            let gs: f64 = r.binaries.iter().map(|&(b, c)| if bins[b] { c } else { 0.0 }).sum();
            let bound = (r.rhs - gs) / r.coef;
            if r.coef > 0.0 {
                hi[r.var] = hi[r.var].min(bound);
            } else {
                lo[r.var] = lo[r.var].max(bound);
            }
        }
    }
    lo.iter().zip(&hi).all(|(l, h)| l <= h).then_some((lo, hi))
}

/// Minimum squared distance over all binary assignments, each node solved by
/// `node`.
pub fn enumerate_binaries(
    d: &[f64],
    set: &ConstraintSet,
    node: impl Fn(&[f64], &[f64], &[f64], &[LinearRow]) -> Option<Vec<f64>>,
) -> Option<(f64, Vec<f64>)> {
    let rows = set.affine_rows();
    let m = set.n_binaries;
    assert!(m <= 10, "oracle is exponential");
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let bins: Vec<bool> = (0..m).map(|b| mask >> b & 1 == 1).collect();
        let Some((lo, hi)) = bounds_for(set, &bins) else { continue };
        let Some(x) = node(d, &lo, &hi, &rows) else { continue };
        let obj = sq_dist(&x, d);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best
}

/// Small registries for exhaustive checks: `(vital names, max window)`.
pub const TINY_CONFIGS: &[(&[&str], usize)] = &[
    (&["HCO3", "BaseExcess"], 3),
    (&["HCO3", "BaseExcess", "Lactate"], 1),
    (&["pH", "HCO3", "PaCO2"], 2),
    (&["Lactate", "BaseExcess", "Temp"], 3),
    (&["MAP", "DBP", "SBP"], 3),
    (&["HCO3", "BaseExcess", "Glucose"], 3),
    (&["Bilirubin_direct", "Bilirubin_total", "HCO3"], 3),
];

pub fn tiny_registry(full: &VitalRegistry, idx: usize) -> (VitalRegistry, usize) {
    let (names, w) = TINY_CONFIGS[idx % TINY_CONFIGS.len()];
    (full.subset(names).expect("known vitals"), w)
}
