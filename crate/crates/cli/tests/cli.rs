use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gpc_ipm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpc-ipm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// min (x₁−1)² + (x₂−2)² s.t. x₁ + x₂ ≥ 4, x ≥ 0; optimum (1.5, 2.5).
const QP: &str = r#"{"n": 2, "m": 3,
  "G": [2, 0, 0, 2], "c": [-2, -4],
  "A": [1, 1, 1, 0, 0, 1], "b": [4, 0, 0]}"#;

const MODEL: &str =
    r#"{"a": [1, -0.8], "b": [0.4, 0.6], "d": 0, "N": 20, "Nu": 20, "eta": 1, "umin": -0.5, "umax": 1}"#;

fn solve_json(dir: &Path, algo: &str, extra: &[&str]) -> (i32, Value) {
    let mut args = vec!["solve", "qp.json", "--algo", algo, "--json"];
    args.extend_from_slice(extra);
    let out = gpc_ipm(&args, dir);
    (code(&out), serde_json::from_slice(&out.stdout).expect("JSON output"))
}

fn x_of(v: &Value) -> Vec<f64> {
    v["x"].as_array().unwrap().iter().map(|e| e.as_f64().unwrap()).collect()
}

#[test]
fn solve_reports_the_optimum_for_every_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("qp.json"), QP).unwrap();

    let (c, oracle) = solve_json(dir.path(), "oracle", &[]);
    assert_eq!(c, 0);
    let xo = x_of(&oracle);
    assert!((xo[0] - 1.5).abs() < 1e-12 && (xo[1] - 2.5).abs() < 1e-12);

    for algo in ["revised", "mehrotra"] {
        let (c, v) = solve_json(dir.path(), algo, &[]);
        assert_eq!(c, 0, "{algo}");
        assert_eq!(v["algorithm"], algo);
        assert_eq!(v["status"], "Converged");
        assert!(v["iterations"].as_u64().unwrap() > 0);
        for (a, b) in x_of(&v).iter().zip(&xo) {
            assert!((a - b).abs() <= 1e-6, "{algo}: {a} vs {b}");
        }
        assert!((v["objective"].as_f64().unwrap() - oracle["objective"].as_f64().unwrap()).abs() <= 1e-8);
    }

    let text = gpc_ipm(&["solve", "qp.json"], dir.path());
    assert_eq!(code(&text), 0);
    let s = stdout(&text);
    assert!(s.contains("status:") && s.contains("x* = ["), "{s}");
}

#[test]
fn tighter_eps_never_needs_fewer_iterations() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("qp.json"), QP).unwrap();
    for algo in ["revised", "mehrotra"] {
        let mut last = 0;
        for eps in ["1e-2", "1e-5", "1e-8", "1e-10"] {
            let (c, v) = solve_json(dir.path(), algo, &["--eps", eps]);
            assert_eq!(c, 0);
            let it = v["iterations"].as_u64().unwrap();
            assert!(it >= last, "{algo}: eps {eps} took {it} < {last}");
            last = it;
        }
    }
}

#[test]
fn exit_codes_follow_the_outcome() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("qp.json"), QP).unwrap();
    let (c, v) = solve_json(dir.path(), "revised", &["--max-iter", "1"]);
    assert_eq!(c, 2);
    assert_eq!(v["status"], "MaxIterations");

    fs::write(dir.path().join("bad.json"), r#"{"n": 2, "m": 1, "G": [1]}"#).unwrap();
    let out = gpc_ipm(&["solve", "bad.json"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(!out.stderr.is_empty());

    assert_eq!(code(&gpc_ipm(&["solve", "missing.json"], dir.path())), 1);
    assert_eq!(
        code(&gpc_ipm(&["solve", "qp.json", "--algo", "simplex"], dir.path())),
        1
    );
    assert_eq!(code(&gpc_ipm(&["solve", "qp.json", "--eps", "-1"], dir.path())), 1);
    assert_eq!(code(&gpc_ipm(&["--help"], dir.path())), 0);

    // x >= 1 and -x >= 0 cannot both hold
    fs::write(
        dir.path().join("infeasible.json"),
        r#"{"n":1,"m":2,"G":[1],"c":[0],"A":[1,-1],"b":[1,0]}"#,
    )
    .unwrap();
    assert_eq!(
        code(&gpc_ipm(&["solve", "infeasible.json", "--algo", "oracle"], dir.path())),
        3
    );
}

#[test]
fn gpc_writes_reproducible_output_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("model.json"), MODEL).unwrap();
    for out in ["run1", "run2"] {
        let o = gpc_ipm(&["gpc", "model.json", "--out", out], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("constraint violations: 0"));
    }
    for name in ["r.dat", "y.dat", "ureal.dat", "deltaU.dat"] {
        let a = fs::read_to_string(dir.path().join("run1").join(name)).unwrap();
        let b = fs::read_to_string(dir.path().join("run2").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
        assert_eq!(a.lines().count(), 90, "{name}");
    }
    let u = fs::read_to_string(dir.path().join("run1/ureal.dat")).unwrap();
    for line in u.lines() {
        let v: f64 = line.split_once(' ').unwrap().1.parse().unwrap();
        assert!((-0.5 - 1e-8..=1.0 + 1e-8).contains(&v), "{line}");
    }
    let csv = fs::read_to_string(dir.path().join("run1/trace.csv")).unwrap();
    assert!(csv.starts_with("t,w,y,u,du,iters,status,solve_ms\n"));
}

#[test]
fn gpc_single_step_and_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("model.json"), MODEL).unwrap();
    let o = gpc_ipm(
        &[
            "gpc",
            "model.json",
            "--steps",
            "1",
            "--algo",
            "mehrotra",
            "--out",
            "one",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(dir.path().join("one/r.dat")).unwrap(), "0 1.0\n");

    assert_eq!(
        code(&gpc_ipm(&["gpc", "model.json", "--ref", "0:1,oops"], dir.path())),
        1
    );
    assert_eq!(code(&gpc_ipm(&["gpc", "model.json", "--steps", "0"], dir.path())), 1);
    fs::write(
        dir.path().join("nonmonic.json"),
        MODEL.replace("[1, -0.8]", "[2, -0.8]"),
    )
    .unwrap();
    assert_eq!(code(&gpc_ipm(&["gpc", "nonmonic.json"], dir.path())), 1);
}

#[test]
fn bench_runs_a_custom_suite() {
    let dir = tempfile::tempdir().unwrap();
    let suite = r#"{"plants": [{"name": "P1", "a": [1, -0.8], "b": [0.4, 0.6]}], "Nu": [3],
                    "algorithms": ["revised"], "steps": 20}"#;
    fs::write(dir.path().join("suite.json"), suite).unwrap();
    let o = gpc_ipm(&["bench", "suite.json", "--out", "r.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "plant,Nu,algo,total_s,mean_step_ms,iters,failures");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("P1,3,revised,"));
    assert!(lines[1].ends_with(",0"));

    fs::write(dir.path().join("bad.json"), r#"{"plants": []}"#).unwrap();
    assert_eq!(code(&gpc_ipm(&["bench", "bad.json"], dir.path())), 1);
}

#[test]
fn bench_default_suite_has_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpc_ipm(&["bench", "--out", "report.csv"], dir.path());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 25);
    let table = stdout(&o);
    for plant in ["P1", "P2", "P3", "P4"] {
        assert!(table.contains(plant));
    }
}

/// min (x − 1)² s.t. x ≥ 0; the bound is inactive.
const INACTIVE_1D: &str = r#"{"n":1,"m":1,"G":[2],"c":[-2],"A":[1],"b":[0]}"#;

#[test]
fn trivial_instance_matches_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("qp.json"), INACTIVE_1D).unwrap();
    let o = gpc_ipm(&["solve", "qp.json"], dir.path());
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    let printed = s.lines().find_map(|l| l.strip_prefix("x* = [")).expect("x* line");
    let x: f64 = printed.trim_end_matches(']').parse().unwrap();
    assert!((x - 1.0).abs() <= 1e-9, "{s}");

    let (_, oracle) = solve_json(dir.path(), "oracle", &[]);
    for algo in ["revised", "mehrotra"] {
        let (_, v) = solve_json(dir.path(), algo, &[]);
        let (x, xo) = (x_of(&v)[0], x_of(&oracle)[0]);
        assert!((x - xo).abs() <= 1e-9, "{algo}: {x} vs {xo}");
    }
}

#[test]
fn json_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("qp.json"), QP).unwrap();
    let (_, v) = solve_json(dir.path(), "revised", &[]);
    let again: Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(v, again);
    let sig12 = |x: f64| format!("{x:.11e}");
    for (a, b) in x_of(&v).iter().zip(x_of(&again)) {
        assert_eq!(sig12(*a), sig12(b));
    }
    for key in ["algorithm", "status", "iterations", "objective", "x"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}
