//! Newton system shared by the predictor and corrector steps.
//!
//! Both algorithms solve
//!
//! ```text
//! [ G   0  −Aᵀ ] [Δx]   [r1]
//! [ A  −I   0  ] [Δy] = [r2]
//! [ 0   Λ   Y  ] [Δλ]   [r3]
//! ```
//!
//! with `Λ = diag(λ)` and `Y = diag(y)`. Eliminating `Δλ = Y⁻¹(r3 − ΛΔy)` and
//! `Δy = AΔx − r2` leaves the n×n system
//!
//! ```text
//! (G + Aᵀ Y⁻¹Λ A) Δx = r1 + Aᵀ Y⁻¹ (r3 + Λ r2)
//! ```
//!
//! which is symmetric positive definite for `G ⪰ 0`, `y, λ > 0` unless `G`
//! and `A` share a null direction.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::qp::{IterPoint, QpProblem};

/// Diagonal shifts tried, in order, when the condensed matrix is not
/// numerically positive definite.
const REGULARIZATION: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// A search direction `(Δx, Δy, Δλ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub dx: DVector<f64>,
    pub dy: DVector<f64>,
    pub dlambda: DVector<f64>,
}

impl Direction {
    pub fn zeros(n: usize, m: usize) -> Self {
        Direction {
            dx: DVector::zeros(n),
            dy: DVector::zeros(m),
            dlambda: DVector::zeros(m),
        }
    }
}

/// Cholesky factorization of the condensed matrix at one iterate.
#[derive(Debug, Clone)]
pub struct NewtonFactorization<'a> {
    problem: &'a QpProblem,
    y: DVector<f64>,
    lambda: DVector<f64>,
    condensed: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    shift: f64,
}

/// Builds and factors `G + Aᵀ Y⁻¹Λ A` at `z`.
pub fn factor<'a>(p: &'a QpProblem, z: &IterPoint) -> Result<NewtonFactorization<'a>> {
    if z.y.len() != p.m() || z.lambda.len() != p.m() {
        return Err(Error::InvalidArgument(format!(
            "iterate has {} slacks and {} multipliers; problem has m = {}",
            z.y.len(),
            z.lambda.len(),
            p.m()
        )));
    }
    if !z.is_strictly_positive() {
        return Err(Error::InvalidArgument("factor needs y > 0 and lambda > 0".into()));
    }

    let scaling = z.lambda.component_div(&z.y);
    let mut scaled_a = p.a().clone();
    for (mut row, &d) in scaled_a.row_iter_mut().zip(scaling.iter()) {
        row *= d;
    }
    let mut condensed = p.g() + p.a().tr_mul(&scaled_a);
    // enforce exact symmetry before factoring
    condensed = (&condensed + condensed.transpose()) * 0.5;

    if !condensed.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalFailure("condensed Newton matrix is not finite".into()));
    }

    let mut shift = 0.0;
    let mut chol = Cholesky::new(condensed.clone());
    if chol.is_none() {
        for &delta in &REGULARIZATION {
            let scale = condensed.diagonal().amax().max(1.0);
            let shifted = &condensed + DMatrix::identity(p.n(), p.n()) * (delta * scale);
            chol = Cholesky::new(shifted);
            if chol.is_some() {
                shift = delta * scale;
                break;
            }
        }
    }
    let chol =
        chol.ok_or_else(|| Error::NumericalFailure("condensed Newton matrix is singular after regularization".into()))?;

    Ok(NewtonFactorization {
        problem: p,
        y: z.y.clone(),
        lambda: z.lambda.clone(),
        condensed,
        chol,
        shift,
    })
}

impl<'a> NewtonFactorization<'a> {
    /// The condensed matrix `G + Aᵀ Y⁻¹Λ A` (without any regularization).
    pub fn condensed_matrix(&self) -> &DMatrix<f64> {
        &self.condensed
    }

    /// Diagonal shift that was needed to factor the condensed matrix.
    pub fn regularization(&self) -> f64 {
        self.shift
    }

    /// Solves the full block system for the right-hand side `(r1, r2, r3)`.
    pub fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>, r3: &DVector<f64>) -> Result<Direction> {
        let (n, m) = (self.problem.n(), self.problem.m());
        if r1.len() != n || r2.len() != m || r3.len() != m {
            return Err(Error::InvalidArgument(format!(
                "rhs blocks have lengths ({}, {}, {}), expected ({n}, {m}, {m})",
                r1.len(),
                r2.len(),
                r3.len()
            )));
        }
        let a = self.problem.a();

        let inner = (r3 + self.lambda.component_mul(r2)).component_div(&self.y);
        let rhs = r1 + a.tr_mul(&inner);

        let mut dx = self.chol.solve(&rhs);
        // iterative refinement against the unshifted matrix
        let refine_steps = if self.shift > 0.0 { 3 } else { 1 };
        for _ in 0..refine_steps {
            let residual = &rhs - &self.condensed * &dx;
            dx += self.chol.solve(&residual);
        }

        let dy = a * &dx - r2;
        let dlambda = (r3 - self.lambda.component_mul(&dy)).component_div(&self.y);

        if dx.iter().chain(dy.iter()).chain(dlambda.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("Newton direction is not finite".into()));
        }
        Ok(Direction { dx, dy, dlambda })
    }
}

/// Largest `α ∈ (0, 1]` keeping `y + αΔy ≥ 0` and `λ + αΔλ ≥ 0`.
pub fn max_step_nonneg(y: &DVector<f64>, lambda: &DVector<f64>, dy: &DVector<f64>, dlambda: &DVector<f64>) -> f64 {
    ratio_bound(y, dy, 1.0).min(ratio_bound(lambda, dlambda, 1.0))
}

/// `min(α_τ^pri, α_τ^dual)` where each is the largest `α ∈ (0, 1]` with
/// `v + αΔv ≥ (1 − τ) v`.
pub fn fraction_to_boundary(
    y: &DVector<f64>,
    lambda: &DVector<f64>,
    dy: &DVector<f64>,
    dlambda: &DVector<f64>,
    tau: f64,
) -> f64 {
    ratio_bound(y, dy, tau).min(ratio_bound(lambda, dlambda, tau))
}

// min(1, min over Δv_i < 0 of −τ v_i / Δv_i)
fn ratio_bound(v: &DVector<f64>, dv: &DVector<f64>, tau: f64) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&vi, &d)| -tau * vi / d)
        .fold(1.0, f64::min)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn v(s: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(s)
    }

    fn problem(n: usize, m: usize, g: &[f64], a: &[f64]) -> QpProblem {
        QpProblem::from_row_slices(n, m, g, &vec![0.0; n], a, &vec![0.0; m]).unwrap()
    }

    fn at(n: usize, y: &[f64], l: &[f64]) -> IterPoint {
        IterPoint::new(DVector::zeros(n), v(y), v(l)).unwrap()
    }

    #[test]
    fn condensed_matrix_examples() {
        let p = problem(1, 1, &[1.0], &[1.0]);
        assert_eq!(
            factor(&p, &at(1, &[1.0], &[1.0])).unwrap().condensed_matrix()[(0, 0)],
            2.0
        );

        let p = problem(1, 2, &[0.0], &[1.0, -1.0]);
        assert_eq!(
            factor(&p, &at(1, &[1.0, 1.0], &[2.0, 2.0])).unwrap().condensed_matrix()[(0, 0)],
            4.0
        );

        let p = problem(2, 1, &[3.0, 1.0, 1.0, 2.0], &[0.0, 0.0]);
        let f = factor(&p, &at(2, &[1.0], &[5.0])).unwrap();
        assert_eq!(f.condensed_matrix(), p.g());
    }

    #[test]
    fn solve_examples() {
        let p = problem(1, 1, &[1.0], &[1.0]);
        let f = factor(&p, &at(1, &[1.0], &[1.0])).unwrap();
        let d = f.solve(&v(&[0.0]), &v(&[0.0]), &v(&[-1.0])).unwrap();
        assert_abs_diff_eq!(d.dx[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dy[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dlambda[0], -0.5, epsilon = 1e-15);

        let d = f.solve(&v(&[0.0]), &v(&[0.0]), &v(&[0.0])).unwrap();
        assert_eq!(d, Direction::zeros(1, 1));

        let p = problem(1, 1, &[2.0], &[1.0]);
        let f = factor(&p, &at(1, &[2.0], &[1.0])).unwrap();
        let d = f.solve(&v(&[1.0]), &v(&[0.0]), &v(&[0.0])).unwrap();
        assert_abs_diff_eq!(d.dx[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dy[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dlambda[0], -0.2, epsilon = 1e-15);
    }

    #[test]
    fn solve_rejects_bad_rhs() {
        let p = problem(1, 1, &[1.0], &[1.0]);
        let f = factor(&p, &at(1, &[1.0], &[1.0])).unwrap();
        assert!(matches!(
            f.solve(&v(&[0.0, 1.0]), &v(&[0.0]), &v(&[0.0])),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn factor_requires_positive_iterate() {
        let p = problem(1, 1, &[1.0], &[1.0]);
        assert!(factor(&p, &at(1, &[0.0], &[1.0])).is_err());
    }

    #[test]
    fn singular_condensed_matrix_is_regularized_or_fails() {
        // G = 0 and A has no column support on x₂: condensed matrix is singular
        let p = problem(2, 1, &[0.0; 4], &[1.0, 0.0]);
        let f = factor(&p, &at(2, &[1.0], &[1.0])).unwrap();
        assert!(f.regularization() > 0.0);
    }

    #[test]
    fn ratio_test_examples() {
        assert_eq!(max_step_nonneg(&v(&[1.0]), &v(&[1.0]), &v(&[-2.0]), &v(&[1.0])), 0.5);
        assert_eq!(
            max_step_nonneg(&v(&[1.0, 3.0]), &v(&[1.0, 2.0]), &v(&[0.0, 1.0]), &v(&[2.0, 0.0])),
            1.0
        );
        assert_eq!(
            max_step_nonneg(&v(&[1.0, 4.0]), &v(&[2.0, 2.0]), &v(&[-4.0, -1.0]), &v(&[-1.0, -8.0])),
            0.25
        );
    }

    #[test]
    fn fraction_to_boundary_examples() {
        let (y, l) = (v(&[1.0]), v(&[1.0]));
        assert_abs_diff_eq!(
            fraction_to_boundary(&y, &l, &v(&[-1.0]), &v(&[0.0]), 0.9),
            0.9,
            epsilon = 1e-15
        );
        assert_eq!(fraction_to_boundary(&y, &l, &v(&[1.0]), &v(&[1.0]), 0.5), 1.0);

        let (y, l) = (v(&[1.0, 4.0]), v(&[2.0, 2.0]));
        let (dy, dl) = (v(&[-4.0, -1.0]), v(&[-1.0, -8.0]));
        let exact = max_step_nonneg(&y, &l, &dy, &dl);
        assert_abs_diff_eq!(
            fraction_to_boundary(&y, &l, &dy, &dl, 1.0 - 1e-12),
            exact,
            epsilon = 1e-11
        );
    }
}
