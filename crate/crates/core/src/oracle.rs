//! Exact solutions of small QPs by active-set enumeration.
//!
//! For every subset `S` of the constraints the equality-constrained problem
//!
//! ```text
//! [ G   −A_Sᵀ ] [x  ]   [−c ]
//! [ A_S   0   ] [λ_S] = [b_S]
//! ```
//!
//! is solved; candidates with `λ_S ≥ 0` and `Ax ≥ b` are KKT points, and the
//! one with the least objective is returned. Subsets where `A_S` loses row
//! rank or `G` is not positive definite on the null space of `A_S` are
//! skipped.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::qp::QpProblem;

/// Largest `m` accepted (2^m subsets).
pub const MAX_CONSTRAINTS: usize = 16;

const FEASIBILITY_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x: DVector<f64>,
    /// Multipliers for all `m` constraints, zero off the active set.
    pub lambda: DVector<f64>,
    /// Active constraint indices, ascending.
    pub active_set: Vec<usize>,
    pub objective: f64,
    /// False when another KKT candidate reaches the same objective at a
    /// different `x`.
    pub unique: bool,
}

pub fn solve_oracle(p: &QpProblem) -> Result<OracleSolution> {
    let (n, m) = (p.n(), p.m());
    if m > MAX_CONSTRAINTS {
        return Err(Error::UnsupportedSize {
            m,
            max: MAX_CONSTRAINTS,
        });
    }

    let mut subsets: Vec<Vec<usize>> = (0u32..1 << m)
        .filter(|mask| mask.count_ones() as usize <= n)
        .map(|mask| (0..m).filter(|i| mask & (1 << i) != 0).collect())
        .collect();
    subsets.sort();

    let mut candidates: Vec<OracleSolution> = Vec::new();
    for active in subsets {
        let Some((x, lambda)) = solve_equality_kkt(p, &active) else {
            continue;
        };
        if lambda.iter().any(|&l| l < -FEASIBILITY_TOL) {
            continue;
        }
        let slack = p.a() * &x - p.b();
        if slack.iter().any(|&s| s < -FEASIBILITY_TOL) {
            continue;
        }
        let objective = p.objective(&x);
        candidates.push(OracleSolution {
            x,
            lambda,
            active_set: active,
            objective,
            unique: true,
        });
    }

    let ties = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
    // subsets were visited in lexicographic order, so the first minimizer wins ties
    let mut best_idx = None;
    for (i, cand) in candidates.iter().enumerate() {
        match best_idx {
            None => best_idx = Some(i),
            Some(b) => {
                let best: &OracleSolution = &candidates[b];
                if cand.objective < best.objective && !ties(cand.objective, best.objective) {
                    best_idx = Some(i);
                }
            }
        }
    }
    let best_idx = best_idx.ok_or(Error::Infeasible)?;
    let unique = !candidates
        .iter()
        .any(|c| ties(c.objective, candidates[best_idx].objective) && (&c.x - &candidates[best_idx].x).amax() > 1e-9);
    let mut best = candidates.swap_remove(best_idx);
    best.unique = unique;
    Ok(best)
}

/// Solves the equality-constrained KKT system for the active set, returning
/// `x` and the full-length multiplier vector.
fn solve_equality_kkt(p: &QpProblem, active: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
    let (n, k) = (p.n(), active.len());
    let a_s = DMatrix::from_fn(k, n, |r, col| p.a()[(active[r], col)]);

    // rank of A_S and a basis of its null space from the eigenvectors of A_SᵀA_S
    let gram = a_s.tr_mul(&a_s);
    let eig = SymmetricEigen::new(gram);
    let scale = eig.eigenvalues.amax().max(1.0);
    let null_cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= RANK_TOL * scale).collect();
    if n - null_cols.len() != k {
        return None;
    }
    if !null_cols.is_empty() {
        let z = DMatrix::from_fn(n, null_cols.len(), |r, c| eig.eigenvectors[(r, null_cols[c])]);
        let reduced = z.tr_mul(&(p.g() * &z));
        let min_eig = SymmetricEigen::new(reduced).eigenvalues.min();
        if min_eig <= RANK_TOL {
            log::debug!("oracle: skipping active set {active:?}: reduced Hessian is not positive definite");
            return None;
        }
    }

    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(p.g());
    kkt.view_mut((0, n), (n, k)).copy_from(&(-a_s.transpose()));
    kkt.view_mut((n, 0), (k, n)).copy_from(&a_s);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-p.c()));
    for (r, &i) in active.iter().enumerate() {
        rhs[n + r] = p.b()[i];
    }

    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let mut lambda = DVector::zeros(p.m());
    for (r, &i) in active.iter().enumerate() {
        lambda[i] = sol[n + r];
    }
    Some((x, lambda))
}
