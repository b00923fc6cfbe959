//! Safeguarded predictor-corrector for convex QP.
//!
//! Each iteration works from an iterate inside the wide neighborhood
//! `N∞⁻(γ) = { y_i λ_i ≥ γμ }`:
//!
//! 1. **Predictor.** Solve for the affine direction and take the largest step
//!    `α_a` that keeps `(y, λ)` positive. If `(1 − α_a) y(α_a)ᵀλ(α_a) ≤ ε` and
//!    the predicted point passes the termination test, stop there.
//! 2. **Cap.** With `t = max_{i∈I₊} Δy_iΔλ_i / (y_iλ_i)` over the indices where
//!    the affine products are positive, `ξ = 1 − (2γt/(1−γ))^{1/3}` and
//!    `α_a ← min(α_a, ξ)`.
//! 3. **Corrector.** Target `μ_t = (1 − α_a)³ μ`. For `α_a ≥ 0.1` the third
//!    block is `−ΛYe − ΔΛ^aff ΔY^aff e + μ_t e`; below that the second-order
//!    term is damped to `α_a ΔΛ^aff ΔY^aff e`. The step `α_c` is the largest
//!    one that stays in the neighborhood.
//! 4. **Safeguard.** If `α_c < γ/(√2 n)`, re-solve with the damped third block
//!    and `μ_t = β/(1−β) μ`, then recompute `α_c`.
//!
//! The first two right-hand-side blocks of the corrector carry the current
//! feasibility residuals, so a feasible start stays feasible and an
//! infeasible one contracts its residuals by `1 − α_c` per iteration.
//! From an infeasible start, both the predictor exit and every `α_c` must
//! also keep `μ` from outrunning that contraction (see `Pacing`).

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kkt::{self, Direction};
use crate::qp::{self, IterPoint, QpProblem, SolveResult, SolverParams, Status};

/// Lower bound on the predictor cap `ξ`.
pub const XI_MIN: f64 = 0.1;

/// Predictor steps below this use the damped corrector.
pub const SMALL_STEP: f64 = 0.1;

/// The predictor step is pulled back from the positivity boundary by this
/// relative margin.
const PREDICTOR_MARGIN: f64 = 1e-8;

/// Bisection width for the neighborhood step search.
const BISECTION_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorrectorBranch {
    /// `α_a ≥ 0.1`: full second-order correction.
    LargeStep,
    /// `α_a < 0.1`: second-order term damped by `α_a`.
    SmallStep,
    /// The corrector step collapsed; recentering toward `β/(1−β) μ`.
    Safeguard,
}

/// What one iteration of the revised method did.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeguardState {
    pub iteration: usize,
    /// `μ` at the start of the iteration.
    pub mu: f64,
    /// Predictor step before the cap.
    pub alpha_a_raw: f64,
    /// Predictor step after the cap.
    pub alpha_a: f64,
    pub xi: f64,
    pub t: f64,
    /// Whether `α_a > ξ` triggered the cap.
    pub capped: bool,
    pub branch: CorrectorBranch,
    pub mu_target: f64,
    /// Corrector step of the large/small-step branch; set only when the
    /// safeguard replaced it.
    pub pre_safeguard_alpha_c: Option<f64>,
    pub alpha_c: f64,
    /// Iterate after the update.
    pub point: IterPoint,
}

/// The ray `(x, y, λ) + α (Δx, Δy, Δλ)`.
#[derive(Debug, Clone, Copy)]
pub struct StepCurve<'a> {
    pub base: &'a IterPoint,
    pub dir: &'a Direction,
}

impl StepCurve<'_> {
    pub fn at(&self, alpha: f64) -> IterPoint {
        if alpha == 0.0 {
            return self.base.clone();
        }
        self.base.step(self.dir, alpha)
    }
}

/// `t` over the indices with positive affine products and the cap
/// `ξ = 1 − (2γt/(1−γ))^{1/3}` clamped to `[XI_MIN, 1]`.
///
/// With no positive products `t = 0` and `ξ = 1`.
pub fn compute_t_and_xi(z: &IterPoint, aff: &Direction, gamma: f64) -> (f64, f64) {
    let t =
        z.y.iter()
            .zip(z.lambda.iter())
            .zip(aff.dy.iter().zip(aff.dlambda.iter()))
            .map(|((y, l), (dy, dl))| (dy * dl, y * l))
            .filter(|(prod, _)| *prod > 0.0)
            .map(|(prod, base)| prod / base)
            .fold(0.0, f64::max);
    let xi = 1.0 - (2.0 * gamma * t / (1.0 - gamma)).cbrt();
    (t, xi.clamp(XI_MIN, 1.0))
}

/// Largest `α ∈ (0, 1]` for which `z + αΔ` is strictly positive and satisfies
/// `min_i y_iλ_i ≥ γμ − tol`.
///
/// The positivity ratio test gives an upper bound; if the bound itself is not
/// admissible, bisection narrows `[0, bound]` to width `1e-12` and returns the
/// admissible end. `z` itself is assumed admissible.
pub fn max_step_in_neighborhood(z: &IterPoint, dir: &Direction, gamma: f64, tol: f64) -> f64 {
    largest_admissible_step(z, dir, |_, p| qp::in_neighborhood(p, gamma, tol))
}

// Largest α below the positivity bound with `accept(α, z + αΔ)`, assuming the
// accepted steps form an interval starting at 0.
fn largest_admissible_step(z: &IterPoint, dir: &Direction, accept: impl Fn(f64, &IterPoint) -> bool) -> f64 {
    let curve = StepCurve { base: z, dir };
    let admissible = |alpha: f64| {
        let p = curve.at(alpha);
        p.is_strictly_positive() && accept(alpha, &p)
    };

    let upper = kkt::max_step_nonneg(&z.y, &z.lambda, &dir.dy, &dir.dlambda);
    if admissible(upper) {
        return upper;
    }
    let (mut lo, mut hi) = (0.0, upper);
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        if admissible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Keeps the complementarity gap from shrinking faster than the feasibility
/// residuals when the start is infeasible.
///
/// The corrector contracts the residuals by exactly `1 − α_c`, so after `k`
/// updates they equal `ν_k r₀` with `ν_k = Π (1 − α_c)`. A corrector step is
/// accepted only if `ν_k (1 − α) ≤ PACING_SLACK · μ(α) / μ₀`. Without this an
/// iterate can reach `μ ≈ 1e-20` with residuals still near `1e-3`, where the
/// Newton matrix is too ill-conditioned to remove them. When `yᵀλ < ε` is
/// reached the residuals are then far below the termination tolerance. The
/// condition is void when the start is feasible to within that tolerance.
#[derive(Debug, Clone, Copy)]
struct Pacing {
    mu0: f64,
    nu: f64,
    active: bool,
}

/// Slack of the pacing condition; the start satisfies it strictly.
const PACING_SLACK: f64 = 10.0;

impl Pacing {
    fn new(p: &QpProblem, z0: &IterPoint) -> Result<Self> {
        let r = qp::kkt_residuals(p, z0)?;
        Ok(Pacing {
            mu0: qp::complementarity_measure(z0)?,
            nu: 1.0,
            active: r.dual.amax().max(r.primal.amax()) > p.feasibility_tolerance(),
        })
    }

    fn accepts(&self, alpha: f64, point: &IterPoint) -> bool {
        !self.active || self.nu * (1.0 - alpha) * self.mu0 <= PACING_SLACK * point.gap() / point.m() as f64
    }

    fn advance(&mut self, alpha_c: f64) {
        self.nu *= 1.0 - alpha_c;
    }
}

/// Starting point for the revised method.
///
/// `x = 0`, `y_i = max(1, max(1, |b_i|) + (Ax − b)_i)`,
/// `λ = max(1, ‖c‖∞/m) e`. If that point is not in `N∞⁻(γ)` the multipliers
/// are recentered to `λ_i = μ / y_i`, which puts every product on `μ`.
pub fn default_start(p: &QpProblem, params: &SolverParams) -> IterPoint {
    let m = p.m();
    let x = DVector::zeros(p.n());
    let residual = p.a() * &x - p.b();
    let y = DVector::from_iterator(
        m,
        p.b()
            .iter()
            .zip(residual.iter())
            .map(|(b, r)| (b.abs().max(1.0) + r).max(1.0)),
    );
    let lambda = DVector::from_element(m, (p.c().amax() / m as f64).max(1.0));
    let mut z = IterPoint { x, y, lambda };
    if !qp::in_neighborhood(&z, params.gamma, 0.0) {
        let mu = z.gap() / m as f64;
        z.lambda = z.y.map(|yi| mu / yi);
    }
    z
}

pub fn solve_revised(p: &QpProblem, params: &SolverParams, z0: &IterPoint) -> Result<SolveResult> {
    solve_revised_traced(p, params, z0).map(|(result, _)| result)
}

/// Same as [`solve_revised`] but also returns one [`SafeguardState`] per
/// corrector update.
pub fn solve_revised_traced(
    p: &QpProblem,
    params: &SolverParams,
    z0: &IterPoint,
) -> Result<(SolveResult, Vec<SafeguardState>)> {
    params.validate()?;
    qp::kkt_residuals(p, z0)?;
    if !z0.is_strictly_positive() {
        return Err(Error::InvalidArgument(
            "starting point needs y > 0 and lambda > 0".into(),
        ));
    }
    if !qp::in_neighborhood(z0, params.gamma, params.neighborhood_tol) {
        let mu = qp::complementarity_measure(z0)?;
        return Err(Error::InvalidStart {
            min_product: z0.products().min(),
            bound: params.gamma * mu,
        });
    }

    let started = Instant::now();
    let m = p.m();
    let safeguard_threshold = params.gamma / (std::f64::consts::SQRT_2 * p.n() as f64);
    let mut z = z0.clone();
    let mut mu_history = vec![z.gap() / m as f64];
    let mut trace: Vec<SafeguardState> = Vec::new();
    let mut pacing = Pacing::new(p, z0)?;

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

        let outcome = match iterate(p, params, &z, iteration, safeguard_threshold, &pacing) {
            Ok(outcome) => outcome,
            Err(Error::NumericalFailure(reason)) => {
                log::debug!("revised: iteration {iteration}: {reason}");
                return Ok((finish(z, Status::NumericalFailure, iteration, mu_history), trace));
            }
            Err(e) => return Err(e),
        };

        match outcome {
            Outcome::PredictorExit(point) => {
                mu_history.push(point.gap() / m as f64);
                return Ok((finish(point, Status::Converged, iteration + 1, mu_history), trace));
            }
            Outcome::Corrected(state) => {
                z = state.point.clone();
                mu_history.push(z.gap() / m as f64);
                pacing.advance(state.alpha_c);
                trace.push(*state);
            }
        }
    }

    let status = if qp::is_converged(p, &z, params.eps) {
        Status::Converged
    } else {
        Status::MaxIterations
    };
    let iterations = mu_history.len() - 1;
    Ok((finish(z, status, iterations, mu_history), trace))
}

enum Outcome {
    PredictorExit(IterPoint),
    Corrected(Box<SafeguardState>),
}

fn iterate(
    p: &QpProblem,
    params: &SolverParams,
    z: &IterPoint,
    iteration: usize,
    safeguard_threshold: f64,
    pacing: &Pacing,
) -> Result<Outcome> {
    let m = p.m();
    let gamma = params.gamma;
    let mu = z.gap() / m as f64;

    let res = qp::kkt_residuals(p, z)?;
    let r1 = -&res.dual;
    let r2 = -&res.primal;
    let neg_comp = -&res.comp;

    let f = kkt::factor(p, z)?;

    // predictor
    let aff = f.solve(&r1, &r2, &neg_comp)?;
    let alpha_a_raw = kkt::max_step_nonneg(&z.y, &z.lambda, &aff.dy, &aff.dlambda) * (1.0 - PREDICTOR_MARGIN);
    let predicted = z.step(&aff, alpha_a_raw);
    if (1.0 - alpha_a_raw) * predicted.gap() <= params.eps
        && predicted.is_strictly_positive()
        && pacing.accepts(alpha_a_raw, &predicted)
        && qp::is_converged(p, &predicted, params.eps)
    {
        return Ok(Outcome::PredictorExit(predicted));
    }

    // cap
    let (t, xi) = compute_t_and_xi(z, &aff, gamma);
    let capped = alpha_a_raw > xi;
    let alpha_a = if capped { xi } else { alpha_a_raw };

    // corrector
    let aff_products = aff.dy.component_mul(&aff.dlambda);
    let corrector_rhs = |damping: f64, mu_target: f64| -> DVector<f64> {
        &neg_comp - &aff_products * damping + DVector::from_element(m, mu_target)
    };

    let mut mu_target = (1.0 - alpha_a).powi(3) * mu;
    let mut branch = if alpha_a >= SMALL_STEP {
        CorrectorBranch::LargeStep
    } else {
        CorrectorBranch::SmallStep
    };
    let damping = match branch {
        CorrectorBranch::LargeStep => 1.0,
        _ => alpha_a,
    };
    let mut dir = f.solve(&r1, &r2, &corrector_rhs(damping, mu_target))?;
    let corrector_step = |dir: &Direction| {
        largest_admissible_step(z, dir, |alpha, p| {
            qp::in_neighborhood(p, gamma, params.neighborhood_tol) && pacing.accepts(alpha, p)
        })
    };
    let mut alpha_c = corrector_step(&dir);

    // safeguard
    let mut pre_safeguard_alpha_c = None;
    if alpha_c < safeguard_threshold {
        pre_safeguard_alpha_c = Some(alpha_c);
        branch = CorrectorBranch::Safeguard;
        mu_target = params.beta / (1.0 - params.beta) * mu;
        dir = f.solve(&r1, &r2, &corrector_rhs(alpha_a, mu_target))?;
        alpha_c = corrector_step(&dir);
    }

    if !(alpha_c > 0.0) {
        return Err(Error::NumericalFailure(format!(
            "no admissible corrector step (branch {branch:?})"
        )));
    }
    let point = z.step(&dir, alpha_c);
    if !point.is_strictly_positive() || !qp::in_neighborhood(&point, gamma, params.neighborhood_tol) {
        return Err(Error::NumericalFailure("corrector step left the neighborhood".into()));
    }

    Ok(Outcome::Corrected(Box::new(SafeguardState {
        iteration,
        mu,
        alpha_a_raw,
        alpha_a,
        xi,
        t,
        capped,
        branch,
        mu_target,
        pre_safeguard_alpha_c,
        alpha_c,
        point,
    })))
}
