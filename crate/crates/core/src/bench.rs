//! Plant × control-horizon × algorithm timing matrix over closed-loop runs.
//!
//! Every cell runs the same closed-loop simulation twice. The first run is a
//! warm-up that is not timed; it also hosts the solution audit, which checks
//! sampled per-step QP solutions against an exact reference. The second run
//! is timed with a monotonic clock.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::closed_loop::{self, ReferenceSignal, SETTLE_HOLD};
use crate::error::{Error, Result};
use crate::gpc::{CarimaModel, GpcConfig};
use crate::oracle::{self, MAX_CONSTRAINTS};
use crate::qp::{SolverParams, Status};
use crate::Algorithm;

/// CSV header of the report.
pub const REPORT_CSV_HEADER: &str = "plant,Nu,algo,total_s,mean_step_ms,iters,failures";

/// Output band used to judge tracking.
pub const TRACKING_TOLERANCE: f64 = 1e-2;

/// Largest `‖x − x_ref‖∞ / (1 + ‖x_ref‖∞)` accepted by the audit.
pub const AUDIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchPlant {
    pub name: String,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub d: usize,
}

/// A benchmark suite; every field except `plants` and `Nu` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSuite {
    pub plants: Vec<BenchPlant>,
    #[serde(rename = "Nu")]
    pub control_horizons: Vec<usize>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_umin")]
    pub umin: f64,
    #[serde(default = "default_umax")]
    pub umax: f64,
    /// `(start_step, value)` pairs of the reference.
    #[serde(default = "default_reference")]
    pub reference: Vec<(usize, f64)>,
    /// Steps per cell whose QP solution is audited.
    #[serde(default = "default_audit_steps")]
    pub audit_steps: usize,
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}
fn default_steps() -> usize {
    90
}
fn default_eta() -> f64 {
    1.0
}
fn default_umin() -> f64 {
    -0.5
}
fn default_umax() -> f64 {
    1.0
}
fn default_reference() -> Vec<(usize, f64)> {
    vec![(0, 1.0), (30, -1.0), (60, 1.0)]
}
fn default_audit_steps() -> usize {
    5
}

impl Default for BenchSuite {
    /// Four plants, `N_u ∈ {3, 10, 20}`, both algorithms.
    fn default() -> Self {
        let plant = |name: &str, a: &[f64], b: &[f64]| BenchPlant {
            name: name.into(),
            a: a.to_vec(),
            b: b.to_vec(),
            d: 0,
        };
        BenchSuite {
            plants: vec![
                plant("P1", &[1.0, -0.8], &[0.4, 0.6]),
                plant("P2", &[1.0, -1.0, -0.8], &[0.4, 0.6]),
                plant("P3", &[1.0, -1.0, -0.8], &[0.04, -6.0]),
                plant("P4", &[1.0, -1.0, 0.675], &[0.04, -6.0]),
            ],
            control_horizons: vec![3, 10, 20],
            algorithms: default_algorithms(),
            steps: default_steps(),
            eta: default_eta(),
            umin: default_umin(),
            umax: default_umax(),
            reference: default_reference(),
            audit_steps: default_audit_steps(),
        }
    }
}

impl BenchSuite {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let suite: BenchSuite = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite data always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.plants.is_empty() || self.control_horizons.is_empty() || self.algorithms.is_empty() {
            return Err(Error::InvalidArgument(
                "suite needs at least one plant, horizon and algorithm".into(),
            ));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("suite needs steps >= 1".into()));
        }
        for p in &self.plants {
            CarimaModel::from_coeffs(&p.a, &p.b, p.d)
                .map_err(|e| Error::InvalidArgument(format!("plant `{}`: {e}", p.name)))?;
        }
        for &nu in &self.control_horizons {
            self.config(nu).validate()?;
        }
        ReferenceSignal::new(self.reference.clone())?;
        Ok(())
    }

    /// Controller settings of one cell; the prediction horizon equals `N_u`.
    pub fn config(&self, control_horizon: usize) -> GpcConfig {
        GpcConfig::new(control_horizon, control_horizon, self.eta, self.umin, self.umax)
    }

    pub fn cell_count(&self) -> usize {
        self.plants.len() * self.control_horizons.len() * self.algorithms.len()
    }
}

/// What the audit of one cell compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AuditReference {
    /// Active-set enumeration.
    Oracle,
    /// The other interior-point algorithm; used when `m` exceeds the
    /// enumeration limit.
    OtherIpm,
    /// Nothing was audited.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Audit {
    pub reference: AuditReference,
    pub checked: usize,
    /// Largest `‖x − x_ref‖∞ / (1 + ‖x_ref‖∞)` over the checked steps.
    pub max_error: f64,
}

impl Audit {
    pub fn passed(&self) -> bool {
        self.max_error <= AUDIT_TOLERANCE
    }
}

/// One report row plus diagnostics that do not go into the CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub plant: String,
    pub control_horizon: usize,
    pub algorithm: Algorithm,
    /// Wall time of the timed closed-loop run.
    pub total_s: f64,
    /// Mean wall time of one QP solve in the timed run.
    pub mean_step_ms: f64,
    /// Interior-point iterations summed over all steps.
    pub iters: usize,
    /// Steps whose QP did not converge, including an aborting step.
    pub failures: usize,
    pub max_step_iters: usize,
    pub steps_completed: usize,
    pub bound_violations: usize,
    /// True when the output settles into the tracking band in every
    /// reference segment.
    pub tracks: bool,
    pub max_abs_output: f64,
    pub audit: Audit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchRow>,
    pub steps: usize,
}

/// Runs every cell of the suite; cell failures are recorded, never raised.
pub fn run_suite(suite: &BenchSuite, params: &SolverParams) -> Result<BenchmarkReport> {
    suite.validate()?;
    params.validate()?;
    let reference = ReferenceSignal::new(suite.reference.clone())?;

    let mut rows = Vec::with_capacity(suite.cell_count());
    for plant in &suite.plants {
        let model = CarimaModel::from_coeffs(&plant.a, &plant.b, plant.d)?;
        let mut horizons = suite.control_horizons.clone();
        horizons.sort_unstable();
        horizons.dedup();
        for &nu in &horizons {
            let mut algorithms = suite.algorithms.clone();
            algorithms.sort_by_key(|a| a.name());
            algorithms.dedup();
            for algorithm in algorithms {
                rows.push(run_cell(suite, plant, &model, nu, algorithm, &reference, params)?);
            }
        }
    }
    Ok(BenchmarkReport {
        rows,
        steps: suite.steps,
    })
}

fn run_cell(
    suite: &BenchSuite,
    plant: &BenchPlant,
    model: &CarimaModel,
    nu: usize,
    algorithm: Algorithm,
    reference: &ReferenceSignal,
    params: &SolverParams,
) -> Result<BenchRow> {
    let cfg = suite.config(nu);
    let audit_at: Vec<usize> = (0..suite.audit_steps.min(suite.steps))
        .map(|k| k * suite.steps / suite.audit_steps.max(1))
        .collect();

    let mut audit = Audit {
        reference: AuditReference::None,
        checked: 0,
        max_error: 0.0,
    };
    closed_loop::simulate_observed(model, &cfg, reference, suite.steps, algorithm, params, |view| {
        if !audit_at.contains(&view.t) || view.result.status != Status::Converged {
            return;
        }
        let x = &view.result.point.x;
        let (kind, x_ref) = if view.qp.qp.m() <= MAX_CONSTRAINTS {
            match oracle::solve_oracle(&view.qp.qp) {
                Ok(sol) => (AuditReference::Oracle, sol.x),
                Err(e) => {
                    log::warn!("bench: oracle failed at step {}: {e}", view.t);
                    return;
                }
            }
        } else {
            let other = match algorithm {
                Algorithm::Revised => Algorithm::Mehrotra,
                Algorithm::Mehrotra => Algorithm::Revised,
            };
            match other.solve(&view.qp.qp, params) {
                Ok(r) if r.status == Status::Converged => (AuditReference::OtherIpm, r.point.x),
                _ => return,
            }
        };
        let err = (x - &x_ref).amax() / (1.0 + x_ref.amax());
        audit.reference = if audit.reference == AuditReference::None {
            kind
        } else {
            audit.reference
        };
        audit.checked += 1;
        audit.max_error = audit.max_error.max(err);
    })?;

    let mut max_step_iters = 0;
    let started = Instant::now();
    let trace = closed_loop::simulate_observed(model, &cfg, reference, suite.steps, algorithm, params, |view| {
        max_step_iters = max_step_iters.max(view.result.iterations);
    })?;
    let total_s = started.elapsed().as_secs_f64();

    let not_converged = trace.rows.iter().filter(|r| r.status != Status::Converged).count();
    let failures = not_converged + usize::from(!trace.is_complete());
    let tracks = trace.is_complete()
        && trace
            .settling_steps(reference, TRACKING_TOLERANCE, SETTLE_HOLD)
            .iter()
            .all(Option::is_some);

    Ok(BenchRow {
        plant: plant.name.clone(),
        control_horizon: nu,
        algorithm,
        total_s,
        mean_step_ms: trace.mean_solve_ms(),
        iters: trace.total_iterations(),
        failures,
        max_step_iters,
        steps_completed: trace.rows.len(),
        bound_violations: trace.bound_violations(&cfg.bounds),
        tracks,
        max_abs_output: trace.rows.iter().map(|r| r.y.abs()).fold(0.0, f64::max),
        audit,
    })
}

impl BenchmarkReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{},{}",
                r.plant, r.control_horizon, r.algorithm, r.total_s, r.mean_step_ms, r.iters, r.failures
            )
            .expect("writing to a String");
        }
        out
    }

    /// Plants as rows, control horizons as columns, one line per algorithm.
    pub fn to_table(&self, suite: &BenchSuite) -> String {
        let mut horizons: Vec<usize> = self.rows.iter().map(|r| r.control_horizon).collect();
        horizons.sort_unstable();
        horizons.dedup();

        let mut out = String::new();
        write!(out, "{:<6} {:<9}", "plant", "algorithm").unwrap();
        for nu in &horizons {
            write!(out, " | {:>26}", format!("Nu = {nu}")).unwrap();
        }
        out.push('\n');
        write!(out, "{:<6} {:<9}", "", "").unwrap();
        for _ in &horizons {
            write!(out, " | {:>9} {:>9} {:>6}", "total s", "ms/step", "iters").unwrap();
        }
        out.push('\n');

        let mut seen = Vec::new();
        for r in &self.rows {
            if seen.contains(&(&r.plant, r.algorithm)) {
                continue;
            }
            seen.push((&r.plant, r.algorithm));
            write!(out, "{:<6} {:<9}", r.plant, r.algorithm.name()).unwrap();
            for nu in &horizons {
                match self
                    .rows
                    .iter()
                    .find(|c| c.plant == r.plant && c.algorithm == r.algorithm && c.control_horizon == *nu)
                {
                    Some(c) => write!(out, " | {:>9.4} {:>9.4} {:>6}", c.total_s, c.mean_step_ms, c.iters).unwrap(),
                    None => write!(out, " | {:>26}", "-").unwrap(),
                }
            }
            out.push('\n');
        }

        out.push('\n');
        for p in &suite.plants {
            let cells: Vec<&BenchRow> = self.rows.iter().filter(|r| r.plant == p.name).collect();
            let failures: usize = cells.iter().map(|r| r.failures).sum();
            let tracking = if cells.iter().all(|r| r.tracks) {
                "tracks the reference".to_string()
            } else {
                let max_y = cells.iter().map(|r| r.max_abs_output).fold(0.0, f64::max);
                format!("FLAGGED: does not track under this tuning (max |y| = {max_y:.3e})")
            };
            writeln!(
                out,
                "{}: A = {:?}, B = {:?}, d = {}; {tracking}; failures = {failures}",
                p.name, p.a, p.b, p.d
            )
            .unwrap();
        }
        let audited: Vec<&BenchRow> = self.rows.iter().filter(|r| r.audit.checked > 0).collect();
        let max_audit = audited.iter().map(|r| r.audit.max_error).fold(0.0, f64::max);
        writeln!(
            out,
            "\nColumns are control horizons Nu = {} with prediction horizon N = Nu, eta = {}, \
             input bounds [{}, {}], {} steps per run.",
            horizons.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", "),
            suite.eta,
            suite.umin,
            suite.umax,
            self.steps
        )
        .unwrap();
        writeln!(
            out,
            "revised: safeguarded predictor-corrector; mehrotra: baseline predictor-corrector (in-repo). \
             Timings are wall-clock on this machine, warm-up run excluded; total s is per closed-loop run, \
             ms/step per QP solve."
        )
        .unwrap();
        writeln!(
            out,
            "Audit: {} cells checked on sampled steps, max relative deviation {:.2e} \
             (oracle where m <= {}, otherwise the other algorithm).",
            audited.len(),
            max_audit,
            MAX_CONSTRAINTS
        )
        .unwrap();
        out
    }

    /// Every row with its two timing fields zeroed, for determinism checks.
    pub fn deterministic_fields(&self) -> Vec<BenchRow> {
        self.rows
            .iter()
            .map(|r| BenchRow {
                total_s: 0.0,
                mean_step_ms: 0.0,
                ..r.clone()
            })
            .collect()
    }
}
