//! Mehrotra's predictor-corrector for convex QP, the comparison baseline.
//!
//! Every iteration factors the Newton matrix once and solves it twice:
//!
//! 1. affine direction with third block `−ΛYe`;
//! 2. centering parameter `σ = (μ_aff/μ)³` from the largest nonnegative
//!    affine step;
//! 3. corrector direction with third block `−ΛYe − ΔΛ^aff ΔY^aff e + σμe`;
//! 4. a single fraction-to-boundary step `τ_k` for both primal and dual.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kkt::{self, Direction};
use crate::qp::{self, IterPoint, QpProblem, SolveResult, SolverParams, Status};

/// Per-iteration quantities of the baseline method.
#[derive(Debug, Clone, PartialEq)]
pub struct MehrotraState {
    /// Iterate at the start of the iteration.
    pub point: IterPoint,
    pub iteration: usize,
    pub mu: f64,
    pub mu_aff: f64,
    pub sigma: f64,
    pub tau: f64,
    pub alpha_aff: f64,
    pub alpha: f64,
}

/// `x = 0`, `y = λ = max(1, ‖b‖∞) e`.
pub fn default_start(p: &QpProblem) -> IterPoint {
    let scale = p.b().amax().max(1.0);
    IterPoint {
        x: DVector::zeros(p.n()),
        y: DVector::from_element(p.m(), scale),
        lambda: DVector::from_element(p.m(), scale),
    }
}

/// `(y + αΔy)ᵀ(λ + αΔλ) / m` for the affine direction.
pub fn affine_duality_gap(z: &IterPoint, aff: &Direction, alpha: f64) -> f64 {
    let y = &z.y + &aff.dy * alpha;
    let lambda = &z.lambda + &aff.dlambda * alpha;
    y.dot(&lambda) / z.m() as f64
}

pub fn solve_mehrotra(p: &QpProblem, params: &SolverParams, z0: &IterPoint) -> Result<SolveResult> {
    solve_mehrotra_traced(p, params, z0).map(|(result, _)| result)
}

/// Same as [`solve_mehrotra`] but also returns one [`MehrotraState`] per
/// completed iteration.
pub fn solve_mehrotra_traced(
    p: &QpProblem,
    params: &SolverParams,
    z0: &IterPoint,
) -> Result<(SolveResult, Vec<MehrotraState>)> {
    params.validate()?;
    qp::kkt_residuals(p, z0)?;
    if !z0.is_strictly_positive() {
        return Err(Error::InvalidArgument(
            "starting point needs y > 0 and lambda > 0".into(),
        ));
    }

    let started = Instant::now();
    let m = p.m() as f64;
    let mut z = z0.clone();
    let mut mu_history = vec![z.gap() / m];
    let mut trace = Vec::new();

    let finish = |z: IterPoint, status, iterations, mu_history| SolveResult {
        point: z,
        status,
        iterations,
        mu_history,
        wall_time: started.elapsed(),
    };

    for iteration in 0..params.max_iter {
        if qp::is_converged(p, &z, params.eps) {
            return Ok((finish(z, Status::Converged, iteration, mu_history), trace));
        }

        let res = qp::kkt_residuals(p, &z)?;
        let r1 = -&res.dual;
        let r2 = -&res.primal;
        let mu = z.gap() / m;

        let step = factor_and(p, &z, |f| {
            let aff = f.solve(&r1, &r2, &(-&res.comp))?;
            let alpha_aff = kkt::max_step_nonneg(&z.y, &z.lambda, &aff.dy, &aff.dlambda);
            let mu_aff = affine_duality_gap(&z, &aff, alpha_aff);
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

            let r3 = -&res.comp - aff.dy.component_mul(&aff.dlambda) + DVector::from_element(p.m(), sigma * mu);
            let dir = f.solve(&r1, &r2, &r3)?;
            Ok((dir, alpha_aff, mu_aff, sigma))
        });
        let (dir, alpha_aff, mu_aff, sigma) = match step {
            Ok(step) => step,
            Err(Error::NumericalFailure(reason)) => {
                log::debug!("mehrotra: iteration {iteration}: {reason}");
                return Ok((finish(z, Status::NumericalFailure, iteration, mu_history), trace));
            }
            Err(e) => return Err(e),
        };

        let tau = params.tau_rule.tau(mu);
        let alpha = kkt::fraction_to_boundary(&z.y, &z.lambda, &dir.dy, &dir.dlambda, tau);
        let next = z.step(&dir, alpha);

        trace.push(MehrotraState {
            point: z,
            iteration,
            mu,
            mu_aff,
            sigma,
            tau,
            alpha_aff,
            alpha,
        });

        if !next.is_strictly_positive() || !next.x.iter().all(|v| v.is_finite()) {
            log::debug!("mehrotra: iteration {iteration}: iterate left the positive orthant");
            let z = trace.last().map(|s| s.point.clone()).expect("state was just pushed");
            return Ok((finish(z, Status::NumericalFailure, iteration, mu_history), trace));
        }
        z = next;
        mu_history.push(z.gap() / m);
    }

    let status = if qp::is_converged(p, &z, params.eps) {
        Status::Converged
    } else {
        Status::MaxIterations
    };
    let iterations = trace.len();
    Ok((finish(z, status, iterations, mu_history), trace))
}

fn factor_and<T>(
    p: &QpProblem,
    z: &IterPoint,
    body: impl FnOnce(&kkt::NewtonFactorization<'_>) -> Result<T>,
) -> Result<T> {
    let f = kkt::factor(p, z)?;
    body(&f)
}
