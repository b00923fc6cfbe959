//! Receding-horizon simulation of a GPC loop around a CARIMA plant.
//!
//! At every step the controller measures `y(t)`, builds the GPC QP from the
//! current histories and the previewed reference, solves it cold, applies the
//! first move `Δu(t)` and advances the plant one sample. The plant is the
//! controller's own model without noise.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gpc::{self, CarimaModel, GpcConfig, GpcPredictor, GpcQp, InputBounds, Polynomial};
use crate::qp::{SolveResult, SolverParams, Status};
use crate::Algorithm;

/// Bound slack counted as a violation.
pub const VIOLATION_TOLERANCE: f64 = 1e-8;

/// Consecutive in-band samples that count as settled.
pub const SETTLE_HOLD: usize = 5;

/// Piecewise-constant reference `w(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSignal {
    schedule: Vec<(usize, f64)>,
}

impl ReferenceSignal {
    /// `schedule` lists `(start_step, value)` pairs; the first start must be 0
    /// and starts must increase strictly.
    pub fn new(schedule: Vec<(usize, f64)>) -> Result<Self> {
        match schedule.first() {
            None => return Err(Error::InvalidArgument("reference schedule is empty".into())),
            Some(&(s, _)) if s != 0 => {
                return Err(Error::InvalidArgument(format!(
                    "reference schedule must start at step 0, not {s}"
                )))
            }
            _ => {}
        }
        if let Some(w) = schedule.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument(format!(
                "reference start steps must increase: {} then {}",
                w[0].0, w[1].0
            )));
        }
        if schedule.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument("reference values must be finite".into()));
        }
        Ok(ReferenceSignal { schedule })
    }

    pub fn constant(value: f64) -> Self {
        ReferenceSignal {
            schedule: vec![(0, value)],
        }
    }

    /// Alternates between `high` and `low` every `half_period` steps, starting
    /// with `high`, over `steps` samples.
    pub fn square_wave(high: f64, low: f64, half_period: usize, steps: usize) -> Result<Self> {
        if half_period == 0 {
            return Err(Error::InvalidArgument("square wave half period must be >= 1".into()));
        }
        let schedule = (0..steps.max(1))
            .step_by(half_period)
            .enumerate()
            .map(|(i, s)| (s, if i % 2 == 0 { high } else { low }))
            .collect();
        ReferenceSignal::new(schedule)
    }

    /// Parses `"0:1,30:-1"`.
    pub fn parse(text: &str) -> Result<Self> {
        let schedule = text
            .split(',')
            .map(|item| {
                let (step, value) = item
                    .split_once(':')
                    .ok_or_else(|| Error::Parse(format!("reference entry `{item}` is not `step:value`")))?;
                let step = step
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("reference step `{step}`: {e}")))?;
                let value = value
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("reference value `{value}`: {e}")))?;
                Ok((step, value))
            })
            .collect::<Result<Vec<_>>>()?;
        ReferenceSignal::new(schedule)
    }

    pub fn schedule(&self) -> &[(usize, f64)] {
        &self.schedule
    }

    /// Value at step `t`; the last level holds forever.
    pub fn value_at(&self, t: usize) -> f64 {
        let idx = self.schedule.partition_point(|&(s, _)| s <= t);
        self.schedule[idx - 1].1
    }

    /// Steps at which the level changes, excluding step 0.
    pub fn switch_steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.schedule.iter().skip(1).map(|&(s, _)| s)
    }
}

/// Noise-free plant `Ã(z⁻¹) y(t) = B(z⁻¹) Δu(t−d−1)` started at rest.
#[derive(Debug, Clone)]
pub struct CarimaPlant {
    a_tilde: Polynomial,
    b: Polynomial,
    delay: usize,
    /// `y(t), y(t−1), …`
    y_hist: VecDeque<f64>,
    /// `Δu(t−1), Δu(t−2), …`
    du_hist: VecDeque<f64>,
}

impl CarimaPlant {
    pub fn new(model: &CarimaModel) -> Self {
        let a_tilde = gpc::a_tilde(model.a());
        let y_len = a_tilde.degree();
        let du_len = model.delay() + model.b().degree() + 1;
        CarimaPlant {
            a_tilde,
            b: model.b().clone(),
            delay: model.delay(),
            y_hist: VecDeque::from(vec![0.0; y_len]),
            du_hist: VecDeque::from(vec![0.0; du_len]),
        }
    }

    pub fn output(&self) -> f64 {
        self.y_hist[0]
    }

    pub fn output_history(&self) -> &VecDeque<f64> {
        &self.y_hist
    }

    pub fn move_history(&self) -> &VecDeque<f64> {
        &self.du_hist
    }

    /// Applies `Δu(t)` and moves to `t + 1`:
    /// `y(t+1) = −Σ_{i≥1} ã_i y(t+1−i) + Σ_{i≥0} b_i Δu(t−d−i)`.
    pub fn step(&mut self, du: f64) -> f64 {
        self.du_hist.push_front(du);
        self.du_hist.pop_back();
        let ar: f64 = (1..=self.a_tilde.degree())
            .map(|i| self.a_tilde.coeff(i) * self.y_hist[i - 1])
            .sum();
        let br: f64 = (0..=self.b.degree())
            .map(|i| self.b.coeff(i) * self.du_hist[self.delay + i])
            .sum();
        let y = br - ar;
        self.y_hist.push_front(y);
        self.y_hist.pop_back();
        y
    }
}

/// One sample of the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub w: f64,
    pub y: f64,
    pub u: f64,
    pub du: f64,
    pub iters: usize,
    pub status: Status,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    /// The solver failed at step `step`; rows stop before it.
    Aborted {
        step: usize,
        status: Status,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopTrace {
    pub rows: Vec<TraceRow>,
    pub outcome: Outcome,
}

impl ClosedLoopTrace {
    pub fn is_complete(&self) -> bool {
        self.outcome == Outcome::Completed
    }

    /// Steps where `u` leaves `[u_min, u_max]` by more than
    /// [`VIOLATION_TOLERANCE`].
    pub fn bound_violations(&self, bounds: &InputBounds) -> usize {
        self.rows
            .iter()
            .filter(|r| r.u < bounds.u_min - VIOLATION_TOLERANCE || r.u > bounds.u_max + VIOLATION_TOLERANCE)
            .count()
    }

    pub fn total_iterations(&self) -> usize {
        self.rows.iter().map(|r| r.iters).sum()
    }

    pub fn mean_solve_ms(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.rows.iter().map(|r| r.solve_ms).sum::<f64>() / self.rows.len() as f64
        }
    }

    /// Root-mean-square of `y − w`.
    pub fn rms_tracking_error(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        (self.rows.iter().map(|r| (r.y - r.w).powi(2)).sum::<f64>() / self.rows.len() as f64).sqrt()
    }

    /// For every reference segment, the offset from its start of the first
    /// sample that begins a run of `hold` consecutive samples with
    /// `|y − w| ≤ tol`. `None` marks a segment that never settles.
    ///
    /// The controller previews the reference, so the output leaves a level a
    /// few samples before the next switch; the run only has to fit inside the
    /// segment.
    pub fn settling_steps(&self, reference: &ReferenceSignal, tol: f64, hold: usize) -> Vec<Option<usize>> {
        let end = self.rows.len();
        let mut starts: Vec<usize> = reference
            .schedule()
            .iter()
            .map(|&(s, _)| s)
            .filter(|&s| s < end)
            .collect();
        starts.push(end);
        let hold = hold.max(1);
        starts
            .windows(2)
            .map(|seg| {
                let rows = &self.rows[seg[0]..seg[1]];
                let mut run = 0;
                for (i, r) in rows.iter().enumerate() {
                    run = if (r.y - r.w).abs() <= tol { run + 1 } else { 0 };
                    if run == hold {
                        return Some(i + 1 - hold);
                    }
                }
                None
            })
            .collect()
    }
}

/// What the observer of [`simulate_observed`] sees at every solved step.
pub struct StepView<'a> {
    pub t: usize,
    pub qp: &'a GpcQp,
    pub result: &'a SolveResult,
}

/// Runs `steps` samples of the closed loop from rest with `u(−1) = 0`.
pub fn simulate(
    model: &CarimaModel,
    cfg: &GpcConfig,
    reference: &ReferenceSignal,
    steps: usize,
    algorithm: Algorithm,
    params: &SolverParams,
) -> Result<ClosedLoopTrace> {
    simulate_observed(model, cfg, reference, steps, algorithm, params, |_| {})
}

/// [`simulate`] with a callback invoked after every QP solve.
///
/// On `MaxIterations` the first move of the last iterate is projected onto
/// the input bounds and applied; on `NumericalFailure` the run stops and the
/// trace holds the rows completed so far.
pub fn simulate_observed(
    model: &CarimaModel,
    cfg: &GpcConfig,
    reference: &ReferenceSignal,
    steps: usize,
    algorithm: Algorithm,
    params: &SolverParams,
    mut observer: impl FnMut(StepView<'_>),
) -> Result<ClosedLoopTrace> {
    if steps == 0 {
        return Err(Error::InvalidArgument("simulation needs at least one step".into()));
    }
    cfg.validate()?;
    params.validate()?;

    let predictor = GpcPredictor::new(model, cfg.horizon, cfg.control_horizon)?;
    let mut plant = CarimaPlant::new(model);
    let d = model.delay();
    let mut u_prev = 0.0;
    let mut rows = Vec::with_capacity(steps);

    for t in 0..steps {
        let y_hist: Vec<f64> = plant.output_history().iter().copied().collect();
        let du_hist: Vec<f64> = plant.move_history().iter().copied().collect();
        let f = predictor.free_response(&y_hist, &du_hist)?;
        let w = DVector::from_fn(cfg.horizon, |k, _| reference.value_at(t + d + k + 1));
        let qp = gpc::build_qp(
            predictor.dynamic_matrix(),
            &f,
            &w,
            cfg.eta,
            cfg.delta,
            &cfg.bounds,
            u_prev,
        )?;

        let started = Instant::now();
        let result = algorithm.solve(&qp.qp, params)?;
        let solve_ms = started.elapsed().as_secs_f64() * 1e3;
        observer(StepView {
            t,
            qp: &qp,
            result: &result,
        });

        let du = match result.status {
            Status::Converged => result.point.x[0],
            Status::MaxIterations => project_move(result.point.x[0], u_prev, &cfg.bounds),
            Status::NumericalFailure => {
                log::warn!("closed loop: solver failed at step {t}");
                return Ok(ClosedLoopTrace {
                    rows,
                    outcome: Outcome::Aborted {
                        step: t,
                        status: result.status,
                    },
                });
            }
        };
        let u = u_prev + du;
        rows.push(TraceRow {
            t,
            w: reference.value_at(t),
            y: plant.output(),
            u,
            du,
            iters: result.iterations,
            status: result.status,
            solve_ms,
        });
        plant.step(du);
        u_prev = u;
    }

    Ok(ClosedLoopTrace {
        rows,
        outcome: Outcome::Completed,
    })
}

fn project_move(du: f64, u_prev: f64, bounds: &InputBounds) -> f64 {
    let mut du = du.clamp(bounds.u_min - u_prev, bounds.u_max - u_prev);
    if let Some((lo, hi)) = bounds.du {
        du = du.clamp(lo, hi);
    }
    du
}

/// Header of `trace.csv`.
pub const TRACE_CSV_HEADER: &str = "t,w,y,u,du,iters,status,solve_ms";

/// Rounds to 12 significant digits and prints in plain decimal notation.
pub fn format_value(v: f64) -> String {
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    let mut s = rounded.to_string();
    if !s.contains('.') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Writes `r.dat`, `y.dat`, `ureal.dat`, `deltaU.dat` and `trace.csv` into
/// `dir`, creating it if needed.
pub fn export_trace(trace: &ClosedLoopTrace, dir: &Path) -> Result<()> {
    if trace.rows.is_empty() {
        return Err(Error::InvalidArgument("cannot export an empty trace".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let series: [(&str, fn(&TraceRow) -> f64); 4] = [
        ("r.dat", |r| r.w),
        ("y.dat", |r| r.y),
        ("ureal.dat", |r| r.u),
        ("deltaU.dat", |r| r.du),
    ];
    for (name, field) in series {
        let mut text = String::new();
        for row in &trace.rows {
            writeln!(text, "{} {}", row.t, format_value(field(row))).expect("writing to a String");
        }
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }

    let path = dir.join("trace.csv");
    fs::write(&path, trace_csv(trace)).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// CSV text of the trace. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn trace_csv(trace: &ClosedLoopTrace) -> String {
    let mut text = String::from(TRACE_CSV_HEADER);
    text.push('\n');
    for r in &trace.rows {
        writeln!(
            text,
            "{},{:?},{:?},{:?},{:?},{},{},{:?}",
            r.t, r.w, r.y, r.u, r.du, r.iters, r.status, r.solve_ms
        )
        .expect("writing to a String");
    }
    text
}

/// Parses the rows of a `trace.csv` file.
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == TRACE_CSV_HEADER => {}
        Some((_, header)) => return Err(Error::Parse(format!("line 1: unexpected header `{header}`"))),
        None => return Err(Error::Parse("trace file is empty".into())),
    }
    lines
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            let lineno = i + 1;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 8 {
                return Err(Error::Parse(format!(
                    "line {lineno}: expected 8 fields, found {}",
                    fields.len()
                )));
            }
            let num = |k: usize| -> Result<f64> {
                fields[k]
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {lineno}, field {k}: {e}")))
            };
            let int = |k: usize| -> Result<usize> {
                fields[k]
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {lineno}, field {k}: {e}")))
            };
            Ok(TraceRow {
                t: int(0)?,
                w: num(1)?,
                y: num(2)?,
                u: num(3)?,
                du: num(4)?,
                iters: int(5)?,
                status: fields[6]
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))?,
                solve_ms: num(7)?,
            })
        })
        .collect()
}

/// Reads `trace.csv` from `path`.
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace_csv(&text)
}
