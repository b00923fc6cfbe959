//! Random instance generators shared by the integration tests.

#![allow(dead_code)]

use gpc_ipm::gpc::{build_qp, gpc_cost, CarimaModel, GpcPredictor, InputBounds, Polynomial};
use gpc_ipm::{IterPoint, QpProblem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly convex, strictly feasible QP with `n ≤ max_n`, `m ≤ max_m`.
///
/// `G = MᵀM + 0.1 I`, and `b = A x₀ − s` with `s > 0`, so `x₀` is strictly
/// feasible. The linear term is scaled so that a good share of constraints
/// end up active.
pub fn random_qp(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> QpProblem {
    let n = rng.gen_range(1..=max_n);
    let m = rng.gen_range(1..=max_m);
    random_qp_sized(rng, n, m)
}

pub fn random_qp_sized(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QpProblem {
    let mf = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let g = mf.tr_mul(&mf) + DMatrix::identity(n, n) * 0.1;
    let c = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let s = DVector::from_fn(m, |_, _| rng.gen_range(0.1..1.0));
    let b = &a * &x0 - s;
    QpProblem::new(g, c, a, b).expect("generated problem is valid")
}

/// Strictly convex QP together with a strictly feasible, perfectly centered
/// primal-dual point `(x₀, y₀, λ₀)` with `y₀ ∘ λ₀ = μ₀ e`.
///
/// `b = A x₀ − y₀` and `c = A ᵀλ₀ − G x₀`, so all KKT residuals vanish at the
/// returned point.
pub fn random_centered_qp(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> (QpProblem, IterPoint) {
    let n = rng.gen_range(1..=max_n);
    let m = rng.gen_range(1..=max_m);
    let mf = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let g = mf.tr_mul(&mf) + DMatrix::identity(n, n) * 0.1;
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let mu0: f64 = rng.gen_range(0.5..5.0);
    let y0 = DVector::from_fn(m, |_, _| rng.gen_range(0.2..3.0));
    let l0 = y0.map(|y| mu0 / y);
    let b = &a * &x0 - &y0;
    let c = a.tr_mul(&l0) - &g * &x0;
    let p = QpProblem::new(g, c, a, b).expect("generated problem is valid");
    (
        p,
        IterPoint {
            x: x0,
            y: y0,
            lambda: l0,
        },
    )
}

/// The four plants of the default benchmark suite as `(A, B)`.
pub fn suite_plants() -> Vec<(Vec<f64>, Vec<f64>)> {
    vec![
        (vec![1.0, -0.8], vec![0.4, 0.6]),
        (vec![1.0, -1.0, -0.8], vec![0.4, 0.6]),
        (vec![1.0, -1.0, -0.8], vec![0.04, -6.0]),
        (vec![1.0, -1.0, 0.675], vec![0.04, -6.0]),
    ]
}

/// Coefficients of `A(z⁻¹)(1 − z⁻¹)` by direct convolution.
pub fn differenced(a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + 1];
    for (i, &ai) in a.iter().enumerate() {
        out[i] += ai;
        out[i + 1] -= ai;
    }
    out
}

/// Outputs `y(t+1) … y(t+horizon)` of `Ã y(t) = B Δu(t−d−1)`.
///
/// `y_hist[i] = y(t−i)`, `du_past[i] = Δu(t−1−i)` and `du_future[i] = Δu(t+i)`
/// (zero past its end).
pub fn simulate_forward(
    a: &[f64],
    b: &[f64],
    d: usize,
    y_hist: &[f64],
    du_past: &[f64],
    du_future: &[f64],
    horizon: usize,
) -> Vec<f64> {
    let at = differenced(a);
    // time-indexed storage with an offset so negative times fit
    let off = 64;
    let len = off + horizon + 1;
    let mut y = vec![0.0; len];
    let mut du = vec![0.0; len];
    for (i, &v) in y_hist.iter().enumerate() {
        y[off - i] = v;
    }
    for (i, &v) in du_past.iter().enumerate() {
        du[off - 1 - i] = v;
    }
    for (i, &v) in du_future.iter().enumerate() {
        if off + i < len {
            du[off + i] = v;
        }
    }
    for k in off + 1..len {
        let mut v = 0.0;
        for (i, &ai) in at.iter().enumerate().skip(1) {
            v -= ai * y[k - i];
        }
        for (i, &bi) in b.iter().enumerate() {
            v += bi * du[k - 1 - d - i];
        }
        y[k] = v;
    }
    y[off + 1..].to_vec()
}

/// Largest coefficient of `E_j Ã + z⁻ʲ F_j − 1`, evaluated by plain
/// convolution.
pub fn identity_error(at: &Polynomial, e: &Polynomial, f: &Polynomial, j: usize) -> f64 {
    let prod = e.mul(at);
    let len = prod.coeffs().len().max(j + f.coeffs().len());
    let mut total = vec![0.0; len];
    for (i, v) in prod.coeffs().iter().enumerate() {
        total[i] += v;
    }
    for (i, v) in f.coeffs().iter().enumerate() {
        total[j + i] += v;
    }
    total[0] -= 1.0;
    total.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn random_history(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

/// Random plant, horizons, histories, reference and move vector.
pub struct CostInstance {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub d: usize,
    pub horizon: usize,
    pub nu: usize,
    pub eta: f64,
    pub y_hist: Vec<f64>,
    pub du_hist: Vec<f64>,
    pub w: DVector<f64>,
    pub x: DVector<f64>,
}

pub fn random_cost_instance(rng: &mut ChaCha8Rng) -> CostInstance {
    let na = rng.gen_range(1..=3);
    let mut a = vec![1.0];
    a.extend((0..na).map(|_| rng.gen_range(-0.9..0.9)));
    let b: Vec<f64> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let d = rng.gen_range(0..=2);
    let horizon = rng.gen_range(1..=15);
    let nu = rng.gen_range(1..=horizon);
    let eta = rng.gen_range(0.0..2.0);
    let y_hist = random_history(rng, a.len());
    let du_hist = random_history(rng, d + b.len() - 1);
    let w = DVector::from_fn(horizon, |_, _| rng.gen_range(-1.0..1.0));
    let x = DVector::from_fn(nu, |_, _| rng.gen_range(-1.0..1.0));
    CostInstance {
        a,
        b,
        d,
        horizon,
        nu,
        eta,
        y_hist,
        du_hist,
        w,
        x,
    }
}

impl CostInstance {
    /// `(½xᵀGx + cᵀx + f₀, direct sum over simulated outputs)` with `δ = 1`.
    pub fn evaluate(&self) -> (f64, f64) {
        let bounds = InputBounds {
            u_min: -10.0,
            u_max: 10.0,
            du: None,
        };
        let model = CarimaModel::from_coeffs(&self.a, &self.b, self.d).unwrap();
        let pred = GpcPredictor::new(&model, self.horizon, self.nu).unwrap();
        let f = pred.free_response(&self.y_hist, &self.du_hist).unwrap();
        let qp = build_qp(pred.dynamic_matrix(), &f, &self.w, self.eta, 1.0, &bounds, 0.0).unwrap();
        let via_qp = gpc_cost(&self.x, qp.qp.g(), qp.qp.c(), qp.f0);

        let sim = simulate_forward(
            &self.a,
            &self.b,
            self.d,
            &self.y_hist,
            &self.du_hist,
            self.x.as_slice(),
            self.d + self.horizon,
        );
        let tracking: f64 = (0..self.horizon).map(|j| (sim[self.d + j] - self.w[j]).powi(2)).sum();
        (via_qp, tracking + self.eta * self.x.norm_squared())
    }
}
