//! Generalized Predictive Control problem assembly.
//!
//! The plant is the noise-free CARIMA model
//!
//! ```text
//! A(z⁻¹) y(t) = B(z⁻¹) z⁻ᵈ u(t−1)        ⇔        Ã(z⁻¹) y(t) = B(z⁻¹) Δu(t−d−1)
//! ```
//!
//! with `Ã = ΔA` and `Δ = 1 − z⁻¹`. The j-step predictor comes from the
//! Diophantine split `1 = E_j Ã + z⁻ʲ F_j`:
//!
//! ```text
//! ŷ(t+d+k) = G_{d+k} Δu(t+k−1) + F_{d+k} y(t),      G_j = E_j B
//! ```
//!
//! Splitting `G_{d+k}` into its first `k` coefficients (future moves) and the
//! rest (past moves) gives `ŷ = Γ u + f` with the lower-triangular Toeplitz
//! dynamic matrix `Γ` and the free response `f`. Minimizing
//! `δ‖ŷ − w‖² + η‖u‖²` is then the QP `½uᵀGu + cᵀu + f₀` with
//!
//! ```text
//! G = 2(δΓᵀΓ + ηI),   c = 2δΓᵀ(f − w),   f₀ = δ(f − w)ᵀ(f − w)
//! ```
//!
//! Polynomials are stored as coefficient vectors in ascending powers of `z⁻¹`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::QpProblem;

/// Slack allowed on `u_prev` against its bounds when building constraints.
pub const BOUND_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument(
                "polynomial needs at least one coefficient".into(),
            ));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("polynomial coefficients must be finite".into()));
        }
        Ok(Polynomial { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficient of `z⁻ᵏ`, zero past the degree.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn is_monic(&self) -> bool {
        self.coeffs[0] == 1.0
    }

    /// Value at `z = 1`.
    pub fn sum(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial { coeffs: out }
    }
}

/// `Ã = (1 − z⁻¹) A`.
pub fn a_tilde(a: &Polynomial) -> Polynomial {
    a.mul(&Polynomial {
        coeffs: vec![1.0, -1.0],
    })
}

/// Incremental solution of `1 = E_j Ã + z⁻ʲ F_j` for `j = 1, 2, …`.
///
/// Each step performs one more step of the long division of `1` by `Ã`:
/// the leading remainder coefficient `r = F_j[0]` becomes the next quotient
/// coefficient and the remainder shifts, `F_{j+1}[i] = F_j[i+1] − r Ã[i+1]`.
#[derive(Debug, Clone)]
pub struct Diophantine {
    a_tilde: Vec<f64>,
    e: Vec<f64>,
    f: Vec<f64>,
}

impl Diophantine {
    /// Starts at `j = 1` with `E₁ = 1` and `F₁ = z(1 − Ã)`.
    pub fn new(a_tilde: &Polynomial) -> Result<Self> {
        if !a_tilde.is_monic() || a_tilde.degree() == 0 {
            return Err(Error::InvalidArgument(
                "Diophantine recursion needs a monic polynomial of degree >= 1".into(),
            ));
        }
        let coeffs = a_tilde.coeffs().to_vec();
        let f = coeffs[1..].iter().map(|a| -a).collect();
        Ok(Diophantine {
            a_tilde: coeffs,
            e: vec![1.0],
            f,
        })
    }

    pub fn j(&self) -> usize {
        self.e.len()
    }

    pub fn e(&self) -> Polynomial {
        Polynomial { coeffs: self.e.clone() }
    }

    pub fn f(&self) -> Polynomial {
        Polynomial { coeffs: self.f.clone() }
    }

    /// Moves from `(E_j, F_j)` to `(E_{j+1}, F_{j+1})`.
    pub fn advance(&mut self) {
        let r = self.f[0];
        self.e.push(r);
        let deg = self.f.len();
        for i in 0..deg {
            let next = if i + 1 < deg { self.f[i + 1] } else { 0.0 };
            self.f[i] = next - r * self.a_tilde[i + 1];
        }
    }
}

/// `(E_j, F_j)` for one `j ≥ 1`.
pub fn diophantine(a_tilde: &Polynomial, j: usize) -> Result<(Polynomial, Polynomial)> {
    if j == 0 {
        return Err(Error::InvalidArgument("Diophantine index j must be >= 1".into()));
    }
    let mut d = Diophantine::new(a_tilde)?;
    while d.j() < j {
        d.advance();
    }
    Ok((d.e(), d.f()))
}

/// Plant `A(z⁻¹) y(t) = B(z⁻¹) z⁻ᵈ u(t−1)` with `C = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CarimaModel {
    a: Polynomial,
    b: Polynomial,
    delay: usize,
}

impl CarimaModel {
    pub fn new(a: Polynomial, b: Polynomial, delay: usize) -> Result<Self> {
        if !a.is_monic() {
            return Err(Error::InvalidArgument(format!(
                "A must be monic, leading coefficient is {}",
                a.coeffs()[0]
            )));
        }
        if b.coeffs().iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidArgument("B must be nonzero".into()));
        }
        Ok(CarimaModel { a, b, delay })
    }

    pub fn from_coeffs(a: &[f64], b: &[f64], delay: usize) -> Result<Self> {
        CarimaModel::new(Polynomial::new(a.to_vec())?, Polynomial::new(b.to_vec())?, delay)
    }

    pub fn a(&self) -> &Polynomial {
        &self.a
    }

    pub fn b(&self) -> &Polynomial {
        &self.b
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    /// `B(1) / A(1)`, `None` when `A` has a root at `z = 1`.
    pub fn dc_gain(&self) -> Option<f64> {
        let den = self.a.sum();
        (den.abs() > 1e-12).then(|| self.b.sum() / den)
    }

    /// True when every root of `zⁿᵃ A(z⁻¹)` lies strictly inside the unit
    /// circle.
    pub fn is_open_loop_stable(&self) -> bool {
        let na = self.a.degree();
        if na == 0 {
            return true;
        }
        let companion = DMatrix::from_fn(na, na, |r, c| {
            if r == 0 {
                -self.a.coeff(c + 1)
            } else if r == c + 1 {
                1.0
            } else {
                0.0
            }
        });
        companion.complex_eigenvalues().iter().all(|z| z.norm() < 1.0)
    }
}

/// Horizon, weighting and bound settings of the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct GpcConfig {
    /// Prediction horizon `N`: outputs `t+d+1 … t+d+N` are costed.
    pub horizon: usize,
    /// Control horizon `N_u`.
    pub control_horizon: usize,
    /// Move-suppression weight `η ≥ 0`.
    pub eta: f64,
    /// Output-error weight `δ > 0`.
    pub delta: f64,
    pub bounds: InputBounds,
}

impl GpcConfig {
    pub fn new(horizon: usize, control_horizon: usize, eta: f64, u_min: f64, u_max: f64) -> Self {
        GpcConfig {
            horizon,
            control_horizon,
            eta,
            delta: 1.0,
            bounds: InputBounds { u_min, u_max, du: None },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.control_horizon == 0 || self.control_horizon > self.horizon {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= Nu <= N, got Nu = {}, N = {}",
                self.control_horizon, self.horizon
            )));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta = {} must be >= 0", self.eta)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta = {} must be > 0", self.delta)));
        }
        self.bounds.validate()
    }
}

/// Amplitude bounds on `u` and optional rate bounds on `Δu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBounds {
    pub u_min: f64,
    pub u_max: f64,
    pub du: Option<(f64, f64)>,
}

impl InputBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_min < self.u_max) {
            return Err(Error::InvalidArgument(format!(
                "need umin < umax, got [{}, {}]",
                self.u_min, self.u_max
            )));
        }
        if let Some((lo, hi)) = self.du {
            if !(lo <= 0.0 && 0.0 <= hi && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "rate bounds [{lo}, {hi}] must bracket zero"
                )));
            }
        }
        Ok(())
    }
}

/// Precomputed prediction machinery for one model and horizon pair.
#[derive(Debug, Clone)]
pub struct GpcPredictor {
    model: CarimaModel,
    a_tilde: Polynomial,
    step_response: Vec<f64>,
    gamma: DMatrix<f64>,
    /// `F_{d+k}`, k = 1…N
    free_output: Vec<Polynomial>,
    /// `Γ′_k`: coefficients of `G_{d+k}` from index `k` on, k = 1…N
    free_input: Vec<Polynomial>,
}

impl GpcPredictor {
    pub fn new(model: &CarimaModel, horizon: usize, control_horizon: usize) -> Result<Self> {
        if control_horizon == 0 || control_horizon > horizon {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= Nu <= N, got Nu = {control_horizon}, N = {horizon}"
            )));
        }
        let d = model.delay();
        let a_tilde = a_tilde(model.a());
        let mut dioph = Diophantine::new(&a_tilde)?;

        let mut step_response = Vec::with_capacity(horizon);
        let mut free_output = Vec::with_capacity(horizon);
        let mut free_input = Vec::with_capacity(horizon);
        let last = d + horizon;
        loop {
            let j = dioph.j();
            let e = dioph.e();
            if j <= horizon {
                // g_{j−1} is coefficient j−1 of G_j = E_j B
                step_response.push(e.mul(model.b()).coeff(j - 1));
            }
            if j > d {
                let k = j - d;
                let g_j = e.mul(model.b());
                free_output.push(dioph.f());
                let past: Vec<f64> = g_j.coeffs()[k.min(g_j.coeffs().len())..].to_vec();
                free_input.push(Polynomial {
                    coeffs: if past.is_empty() { vec![0.0] } else { past },
                });
            }
            if j >= last {
                break;
            }
            dioph.advance();
        }

        let gamma = DMatrix::from_fn(horizon, control_horizon, |i, j| {
            if i >= j {
                step_response[i - j]
            } else {
                0.0
            }
        });

        Ok(GpcPredictor {
            model: model.clone(),
            a_tilde,
            step_response,
            gamma,
            free_output,
            free_input,
        })
    }

    pub fn model(&self) -> &CarimaModel {
        &self.model
    }

    pub fn a_tilde(&self) -> &Polynomial {
        &self.a_tilde
    }

    /// Step-response coefficients `g₀ … g_{N−1}`.
    pub fn step_response(&self) -> &[f64] {
        &self.step_response
    }

    /// The N×N_u dynamic matrix `Γ`.
    pub fn dynamic_matrix(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn control_horizon(&self) -> usize {
        self.gamma.ncols()
    }

    /// History lengths needed by [`free_response`](Self::free_response):
    /// `(outputs y(t), y(t−1), …, past moves Δu(t−1), Δu(t−2), …)`.
    pub fn required_history(&self) -> (usize, usize) {
        let ny = self.a_tilde.degree();
        let ndu = self.model.delay() + self.model.b().degree();
        (ny, ndu)
    }

    /// Free response `f_k = F_{d+k} y(t) + Γ′_k Δu(t−1)`, k = 1…N.
    ///
    /// `y_hist[i] = y(t−i)` and `du_hist[i] = Δu(t−1−i)`; extra entries are
    /// ignored.
    pub fn free_response(&self, y_hist: &[f64], du_hist: &[f64]) -> Result<DVector<f64>> {
        let (ny, ndu) = self.required_history();
        if y_hist.len() < ny || du_hist.len() < ndu {
            return Err(Error::InvalidArgument(format!(
                "free response needs {ny} outputs and {ndu} past moves, got {} and {}",
                y_hist.len(),
                du_hist.len()
            )));
        }
        let apply = |p: &Polynomial, hist: &[f64]| -> f64 { p.coeffs().iter().zip(hist).map(|(c, v)| c * v).sum() };
        Ok(DVector::from_iterator(
            self.horizon(),
            self.free_output
                .iter()
                .zip(&self.free_input)
                .map(|(f, gp)| apply(f, y_hist) + if ndu == 0 { 0.0 } else { apply(gp, du_hist) }),
        ))
    }
}

/// `Γ` and `g` for the given model and horizons.
pub fn dynamic_matrix(model: &CarimaModel, horizon: usize, control_horizon: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let p = GpcPredictor::new(model, horizon, control_horizon)?;
    Ok((p.gamma, p.step_response))
}

/// The per-step QP in the moves `u = (Δu(t), …, Δu(t+N_u−1))` plus the
/// constant `f₀`.
#[derive(Debug, Clone)]
pub struct GpcQp {
    pub qp: QpProblem,
    pub f0: f64,
}

/// Assembles `G`, `c`, `f₀` and the input constraints.
///
/// Amplitude bounds `u_min ≤ u_prev + Σ_{i≤k} Δu_i ≤ u_max` become
/// `[L; −L] u ≥ [(u_min − u_prev) e; (u_prev − u_max) e]` with `L` the
/// lower-triangular ones matrix; optional rate bounds append `[I; −I]` rows.
pub fn build_qp(
    gamma: &DMatrix<f64>,
    f: &DVector<f64>,
    w: &DVector<f64>,
    eta: f64,
    delta: f64,
    bounds: &InputBounds,
    u_prev: f64,
) -> Result<GpcQp> {
    let (n_out, nu) = gamma.shape();
    if f.len() != n_out || w.len() != n_out {
        return Err(Error::InvalidArgument(format!(
            "f and w must have {n_out} entries, got {} and {}",
            f.len(),
            w.len()
        )));
    }
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("eta = {eta} must be >= 0")));
    }
    bounds.validate()?;
    if u_prev < bounds.u_min - BOUND_TOLERANCE || u_prev > bounds.u_max + BOUND_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "previous input {u_prev} lies outside [{}, {}]",
            bounds.u_min, bounds.u_max
        )));
    }

    let err = f - w;
    let g = (gamma.tr_mul(gamma) * delta + DMatrix::identity(nu, nu) * eta) * 2.0;
    let c = gamma.tr_mul(&err) * (2.0 * delta);
    let f0 = delta * err.dot(&err);

    let rate_rows = if bounds.du.is_some() { 2 * nu } else { 0 };
    let m = 2 * nu + rate_rows;
    let mut a = DMatrix::zeros(m, nu);
    let mut b = DVector::zeros(m);
    for k in 0..nu {
        for i in 0..=k {
            a[(k, i)] = 1.0;
            a[(nu + k, i)] = -1.0;
        }
        b[k] = bounds.u_min - u_prev;
        b[nu + k] = u_prev - bounds.u_max;
    }
    if let Some((lo, hi)) = bounds.du {
        for k in 0..nu {
            a[(2 * nu + k, k)] = 1.0;
            a[(3 * nu + k, k)] = -1.0;
            b[2 * nu + k] = lo;
            b[3 * nu + k] = -hi;
        }
    }

    Ok(GpcQp {
        qp: QpProblem::new(g, c, a, b)?,
        f0,
    })
}

/// `½ xᵀGx + cᵀx + f₀`.
pub fn gpc_cost(x: &DVector<f64>, g: &DMatrix<f64>, c: &DVector<f64>, f0: f64) -> f64 {
    0.5 * x.dot(&(g * x)) + c.dot(x) + f0
}

/// Model description file: `a`, `b`, `d`, `N`, `Nu`, `eta`, `umin`, `umax`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub d: usize,
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(rename = "Nu")]
    pub control_horizon: usize,
    pub eta: f64,
    pub umin: f64,
    pub umax: f64,
}

impl ModelFile {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("model data always serializes")
    }

    pub fn model(&self) -> Result<CarimaModel> {
        let a = Polynomial::new(self.a.clone()).map_err(|e| Error::Parse(format!("field `a`: {e}")))?;
        let b = Polynomial::new(self.b.clone()).map_err(|e| Error::Parse(format!("field `b`: {e}")))?;
        CarimaModel::new(a, b, self.d)
    }

    pub fn config(&self) -> Result<GpcConfig> {
        let cfg = GpcConfig::new(self.horizon, self.control_horizon, self.eta, self.umin, self.umax);
        cfg.validate()?;
        Ok(cfg)
    }
}
