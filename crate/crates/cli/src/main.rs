use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gpc_ipm::bench::{self, BenchSuite};
use gpc_ipm::closed_loop::{self, Outcome, ReferenceSignal};
use gpc_ipm::gpc::ModelFile;
use gpc_ipm::oracle;
use gpc_ipm::{Algorithm, Error, QpProblem, SolverParams, Status};

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_MAX_ITER: u8 = 2;
const EXIT_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gpc-ipm",
    version,
    about = "Interior-point QP solvers and GPC closed-loop simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a QP stored as JSON with fields n, m, G, c, A, b.
    Solve {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = SolveAlgo::Revised)]
        algo: SolveAlgo,
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        #[arg(long = "max-iter", default_value_t = 100)]
        max_iter: usize,
        /// Print a JSON object instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run a closed-loop GPC simulation for a model file.
    Gpc {
        model: PathBuf,
        /// Piecewise-constant reference as `step:value` pairs.
        #[arg(long = "ref", default_value = "0:1,30:-1,60:1")]
        reference: String,
        #[arg(long, default_value_t = 90)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = IpmAlgo::Revised)]
        algo: IpmAlgo,
        #[arg(long, default_value = "gpc_out")]
        out: PathBuf,
    },
    /// Run the plant × horizon × algorithm timing matrix.
    Bench {
        /// Suite file (JSON); the built-in four-plant suite when omitted.
        suite: Option<PathBuf>,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveAlgo {
    Mehrotra,
    Revised,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum IpmAlgo {
    Mehrotra,
    Revised,
}

impl From<IpmAlgo> for Algorithm {
    fn from(a: IpmAlgo) -> Self {
        match a {
            IpmAlgo::Mehrotra => Algorithm::Mehrotra,
            IpmAlgo::Revised => Algorithm::Revised,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Solve {
            file,
            algo,
            eps,
            gamma,
            beta,
            max_iter,
            json,
        } => {
            let params = SolverParams {
                eps,
                gamma,
                beta,
                max_iter,
                ..SolverParams::default()
            };
            cmd_solve(&file, algo, &params, json)
        }
        Command::Gpc {
            model,
            reference,
            steps,
            algo,
            out,
        } => cmd_gpc(&model, &reference, steps, algo.into(), &out),
        Command::Bench { suite, out } => cmd_bench(suite.as_deref(), &out),
    };
    ExitCode::from(code)
}

fn input_error(context: &str, e: impl std::fmt::Display) -> u8 {
    eprintln!("error: {context}: {e}");
    EXIT_INPUT
}

fn read_text(path: &Path) -> Result<String, u8> {
    fs::read_to_string(path).map_err(|e| input_error(&path.display().to_string(), e))
}

fn status_code(status: Status) -> u8 {
    match status {
        Status::Converged => EXIT_OK,
        Status::MaxIterations => EXIT_MAX_ITER,
        Status::NumericalFailure => EXIT_FAILURE,
    }
}

fn cmd_solve(file: &Path, algo: SolveAlgo, params: &SolverParams, json: bool) -> u8 {
    let text = match read_text(file) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let problem = match QpProblem::from_json_str(&text) {
        Ok(p) => p,
        Err(e) => return input_error(&file.display().to_string(), e),
    };

    let (name, x, iterations, status) = match algo {
        SolveAlgo::Oracle => match oracle::solve_oracle(&problem) {
            Ok(sol) => ("oracle", sol.x, 0, Status::Converged),
            Err(e @ Error::Infeasible) => {
                eprintln!("error: {e}");
                return EXIT_FAILURE;
            }
            Err(e) => return input_error("oracle", e),
        },
        SolveAlgo::Mehrotra | SolveAlgo::Revised => {
            let algorithm = if matches!(algo, SolveAlgo::Mehrotra) {
                Algorithm::Mehrotra
            } else {
                Algorithm::Revised
            };
            match algorithm.solve(&problem, params) {
                Ok(r) => (algorithm.name(), r.point.x, r.iterations, r.status),
                Err(e) => return input_error(algorithm.name(), e),
            }
        }
    };
    let objective = problem.objective(&x);

    if json {
        let value = serde_json::json!({
            "algorithm": name,
            "status": status.as_str(),
            "iterations": iterations,
            "objective": objective,
            "x": x.as_slice(),
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&value).expect("JSON value serializes")
        );
    } else {
        let xs: Vec<String> = x.iter().map(|v| format!("{v:.12}")).collect();
        println!("algorithm:  {name}");
        println!("status:     {status}");
        println!("iterations: {iterations}");
        println!("objective:  {objective:.12e}");
        println!("x* = [{}]", xs.join(", "));
    }
    status_code(status)
}

fn cmd_gpc(model_path: &Path, reference: &str, steps: usize, algorithm: Algorithm, out: &Path) -> u8 {
    let text = match read_text(model_path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let file = match ModelFile::from_json_str(&text) {
        Ok(f) => f,
        Err(e) => return input_error(&model_path.display().to_string(), e),
    };
    let (model, cfg) = match file.model().and_then(|m| Ok((m, file.config()?))) {
        Ok(v) => v,
        Err(e) => return input_error(&model_path.display().to_string(), e),
    };
    let reference = match ReferenceSignal::parse(reference) {
        Ok(r) => r,
        Err(e) => return input_error("--ref", e),
    };

    let trace = match closed_loop::simulate(&model, &cfg, &reference, steps, algorithm, &SolverParams::default()) {
        Ok(t) => t,
        Err(e) => return input_error("simulation", e),
    };
    if !trace.rows.is_empty() {
        if let Err(e) = closed_loop::export_trace(&trace, out) {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    }

    let violations = trace.bound_violations(&cfg.bounds);
    println!("algorithm:             {algorithm}");
    println!("steps completed:       {} / {steps}", trace.rows.len());
    println!("rms tracking error:    {:.6e}", trace.rms_tracking_error());
    println!("constraint violations: {violations}");
    println!("total iterations:      {}", trace.total_iterations());
    println!("mean solve time:       {:.4} ms", trace.mean_solve_ms());
    println!("outputs written to:    {}", out.display());

    match trace.outcome {
        Outcome::Completed => EXIT_OK,
        Outcome::Aborted { step, status } => {
            eprintln!("error: solver returned {status} at step {step}; partial outputs written");
            EXIT_FAILURE
        }
    }
}

fn cmd_bench(suite_path: Option<&Path>, out: &Path) -> u8 {
    let suite = match suite_path {
        None => BenchSuite::default(),
        Some(path) => {
            let text = match read_text(path) {
                Ok(t) => t,
                Err(code) => return code,
            };
            match BenchSuite::from_json_str(&text) {
                Ok(s) => s,
                Err(e) => return input_error(&path.display().to_string(), e),
            }
        }
    };
    let report = match bench::run_suite(&suite, &SolverParams::default()) {
        Ok(r) => r,
        Err(e) => return input_error("bench", e),
    };
    if let Err(e) = fs::write(out, report.to_csv()) {
        return input_error(&out.display().to_string(), e);
    }
    print!("{}", report.to_table(&suite));
    println!("report written to {}", out.display());
    EXIT_OK
}
