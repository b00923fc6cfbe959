//! Problem and iterate types shared by both interior-point solvers.
//!
//! Problems are stated as
//!
//! ```text
//! minimize ½ xᵀGx + cᵀx   subject to  Ax ≥ b
//! ```
//!
//! and an iterate carries the primal point `x`, the slacks `y = Ax − b` and
//! the multipliers `λ`. The optimality conditions are
//!
//! ```text
//! Gx − Aᵀλ + c = 0
//! Ax − y − b   = 0
//! y_i λ_i      = 0,   (y, λ) ≥ 0
//! ```

use std::time::Duration;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum eigenvalue of `G` accepted as positive semidefinite.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Convex QP data `(G, c, A, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    g: DMatrix<f64>,
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl QpProblem {
    /// Validates dimensions, symmetrizes `G` and checks that it is positive
    /// semidefinite.
    pub fn new(g: DMatrix<f64>, c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = c.len();
        let m = b.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!(
                "need n >= 1 and m >= 1, got n = {n}, m = {m}"
            )));
        }
        if g.shape() != (n, n) {
            return Err(Error::InvalidArgument(format!(
                "G is {}x{}, expected {n}x{n}",
                g.nrows(),
                g.ncols()
            )));
        }
        if a.shape() != (m, n) {
            return Err(Error::InvalidArgument(format!(
                "A is {}x{}, expected {m}x{n}",
                a.nrows(),
                a.ncols()
            )));
        }
        if g.iter()
            .chain(c.iter())
            .chain(a.iter())
            .chain(b.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("problem data contains non-finite values".into()));
        }

        let g = (&g + g.transpose()) * 0.5;
        let min_eigenvalue = SymmetricEigen::new(g.clone()).eigenvalues.min();
        if min_eigenvalue < -PSD_TOLERANCE {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue });
        }

        Ok(QpProblem { g, c, a, b })
    }

    /// Builds a problem from row-major slices.
    pub fn from_row_slices(n: usize, m: usize, g: &[f64], c: &[f64], a: &[f64], b: &[f64]) -> Result<Self> {
        check_len("G", g.len(), n * n)?;
        check_len("c", c.len(), n)?;
        check_len("A", a.len(), m * n)?;
        check_len("b", b.len(), m)?;
        QpProblem::new(
            DMatrix::from_row_slice(n, n, g),
            DVector::from_column_slice(c),
            DMatrix::from_row_slice(m, n, a),
            DVector::from_column_slice(b),
        )
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// `½ xᵀGx + cᵀx`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.g * x)) + self.c.dot(x)
    }

    /// Feasibility residual bound used by the termination tests:
    /// `1e-6 · (1 + ‖b‖∞ + ‖c‖∞)`.
    pub fn feasibility_tolerance(&self) -> f64 {
        1e-6 * (1.0 + self.b.amax() + self.c.amax())
    }

    /// Parses the JSON problem document (`n`, `m`, `G`, `c`, `A`, `b`).
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: QpFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_problem()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&QpFile::from(self)).expect("QP data always serializes")
    }
}

fn check_len(field: &str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::Parse(format!(
            "field `{field}`: expected {expected} entries, found {found}"
        )));
    }
    Ok(())
}

/// On-disk layout of a [`QpProblem`]; matrices are row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpFile {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "G")]
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl QpFile {
    pub fn into_problem(self) -> Result<QpProblem> {
        QpProblem::from_row_slices(self.n, self.m, &self.g, &self.c, &self.a, &self.b)
    }
}

impl From<&QpProblem> for QpFile {
    fn from(p: &QpProblem) -> Self {
        QpFile {
            n: p.n(),
            m: p.m(),
            g: p.g.transpose().iter().copied().collect(),
            c: p.c.iter().copied().collect(),
            a: p.a.transpose().iter().copied().collect(),
            b: p.b.iter().copied().collect(),
        }
    }
}

/// Primal-dual iterate `(x, y, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterPoint {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl IterPoint {
    pub fn new(x: DVector<f64>, y: DVector<f64>, lambda: DVector<f64>) -> Result<Self> {
        if y.len() != lambda.len() {
            return Err(Error::InvalidArgument(format!(
                "y has {} entries but lambda has {}",
                y.len(),
                lambda.len()
            )));
        }
        Ok(IterPoint { x, y, lambda })
    }

    pub fn from_slices(x: &[f64], y: &[f64], lambda: &[f64]) -> Result<Self> {
        IterPoint::new(
            DVector::from_column_slice(x),
            DVector::from_column_slice(y),
            DVector::from_column_slice(lambda),
        )
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    /// `yᵀλ`.
    pub fn gap(&self) -> f64 {
        self.y.dot(&self.lambda)
    }

    /// Componentwise products `y_i λ_i`.
    pub fn products(&self) -> DVector<f64> {
        self.y.component_mul(&self.lambda)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.y.iter().chain(self.lambda.iter()).all(|&v| v > 0.0)
    }

    /// The point `(x, y, λ) + α (Δx, Δy, Δλ)`.
    pub fn step(&self, dir: &crate::kkt::Direction, alpha: f64) -> IterPoint {
        IterPoint {
            x: &self.x + &dir.dx * alpha,
            y: &self.y + &dir.dy * alpha,
            lambda: &self.lambda + &dir.dlambda * alpha,
        }
    }
}

/// The three residual blocks of the optimality conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct KktResiduals {
    /// `Gx − Aᵀλ + c`
    pub dual: DVector<f64>,
    /// `Ax − y − b`
    pub primal: DVector<f64>,
    /// `y_i λ_i`
    pub comp: DVector<f64>,
}

fn check_dims(p: &QpProblem, z: &IterPoint) -> Result<()> {
    if z.x.len() != p.n() || z.y.len() != p.m() || z.lambda.len() != p.m() {
        return Err(Error::InvalidArgument(format!(
            "iterate has |x| = {}, |y| = {}, |lambda| = {}; problem has n = {}, m = {}",
            z.x.len(),
            z.y.len(),
            z.lambda.len(),
            p.n(),
            p.m()
        )));
    }
    Ok(())
}

pub fn kkt_residuals(p: &QpProblem, z: &IterPoint) -> Result<KktResiduals> {
    check_dims(p, z)?;
    Ok(KktResiduals {
        dual: p.g() * &z.x - p.a().tr_mul(&z.lambda) + p.c(),
        primal: p.a() * &z.x - &z.y - p.b(),
        comp: z.products(),
    })
}

/// `μ = yᵀλ / m`.
pub fn complementarity_measure(z: &IterPoint) -> Result<f64> {
    let m = z.m();
    if m == 0 {
        return Err(Error::InvalidArgument("complementarity measure needs m >= 1".into()));
    }
    Ok(z.gap() / m as f64)
}

/// Centrality test for `N∞⁻(γ)`: `min_i y_i λ_i ≥ γ μ − tol`.
///
/// Feasibility is not part of this test; the solvers start infeasible and
/// drive the residuals down alongside `μ`.
pub fn in_neighborhood(z: &IterPoint, gamma: f64, tol: f64) -> bool {
    let Ok(mu) = complementarity_measure(z) else {
        return false;
    };
    let min_product = z.products().min();
    min_product >= gamma * mu - tol
}

/// Membership in the strictly feasible set: both linear residuals within
/// `tol` and `(y, λ) > 0`.
pub fn is_strictly_feasible(p: &QpProblem, z: &IterPoint, tol: f64) -> bool {
    let Ok(r) = kkt_residuals(p, z) else {
        return false;
    };
    r.dual.amax() <= tol && r.primal.amax() <= tol && z.is_strictly_positive()
}

/// Termination test shared by both solvers: `yᵀλ < ε` and both feasibility
/// residuals below [`QpProblem::feasibility_tolerance`].
pub fn is_converged(p: &QpProblem, z: &IterPoint, eps: f64) -> bool {
    if z.gap() >= eps {
        return false;
    }
    let Ok(r) = kkt_residuals(p, z) else {
        return false;
    };
    let tol = p.feasibility_tolerance();
    r.dual.amax() <= tol && r.primal.amax() <= tol
}

/// Fraction-to-boundary schedule for the Mehrotra baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauRule {
    /// `τ_k = max(floor, 1 − μ_k)`.
    Adaptive {
        floor: f64,
    },
    Fixed(f64),
}

impl TauRule {
    pub fn tau(&self, mu: f64) -> f64 {
        let tau = match *self {
            TauRule::Adaptive { floor } => floor.max(1.0 - mu),
            TauRule::Fixed(tau) => tau,
        };
        // τ must stay strictly below one to keep the iterate interior
        tau.min(1.0 - f64::EPSILON)
    }
}

impl Default for TauRule {
    fn default() -> Self {
        TauRule::Adaptive { floor: 0.995 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Neighborhood width, in `(0, 1/4)`.
    pub gamma: f64,
    /// Safeguard parameter, in `[γ, 1/4)`.
    pub beta: f64,
    /// Termination threshold on `yᵀλ`.
    pub eps: f64,
    pub tau_rule: TauRule,
    pub max_iter: usize,
    /// Slack allowed in `y_i λ_i ≥ γμ` comparisons.
    pub neighborhood_tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            gamma: 0.1,
            beta: 0.1,
            eps: 1e-8,
            tau_rule: TauRule::default(),
            max_iter: 100,
            neighborhood_tol: 1e-12,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 0.25) {
            return Err(Error::InvalidArgument(format!(
                "gamma = {} must lie in (0, 1/4)",
                self.gamma
            )));
        }
        if !(self.beta >= self.gamma && self.beta < 0.25) {
            return Err(Error::InvalidArgument(format!(
                "beta = {} must lie in [gamma, 1/4) with gamma = {}",
                self.beta, self.gamma
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps = {} must be positive", self.eps)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.neighborhood_tol >= 0.0) {
            return Err(Error::InvalidArgument("neighborhood_tol must be nonnegative".into()));
        }
        if let TauRule::Fixed(tau) = self.tau_rule {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::InvalidArgument(format!("tau = {tau} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIterations,
    NumericalFailure,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "Converged",
            Status::MaxIterations => "MaxIterations",
            Status::NumericalFailure => "NumericalFailure",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Converged" => Ok(Status::Converged),
            "MaxIterations" => Ok(Status::MaxIterations),
            "NumericalFailure" => Ok(Status::NumericalFailure),
            other => Err(Error::Parse(format!("unknown status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub point: IterPoint,
    pub status: Status,
    pub iterations: usize,
    /// `μ` of the starting point followed by `μ` after every update.
    pub mu_history: Vec<f64>,
    pub wall_time: Duration,
}
