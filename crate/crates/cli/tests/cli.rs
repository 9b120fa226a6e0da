use std::path::Path;
use std::process::{Command, Output};

const BOX_1D: &str = r#"{"n": 1, "m": 1, "H": [[2]], "g": [-1], "G": [[1]], "c": [0], "d": [1]}"#;

fn clampqp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clampqp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` line in:\n{text}"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn solve_box_example() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "box.json", BOX_1D);
    let out = clampqp(&["solve", &file]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(value(&text, "status"), "solved");
    let y: f64 = value(&text, "y").parse().unwrap();
    assert!((y - 0.5).abs() < 1e-6);
    let lambda: f64 = value(&text, "lambda").parse().unwrap();
    assert!(lambda.abs() < 1e-6);
    assert!(value(&text, "r_prim").parse::<f64>().unwrap() <= 1e-6);
    assert!(value(&text, "r_dual").parse::<f64>().unwrap() <= 1e-6);
    assert!(value(&text, "iterations").parse::<usize>().unwrap() >= 1);
}

#[test]
fn missing_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "bad.json",
        r#"{"n": 1, "m": 1, "H": [[2]], "G": [[1]], "c": [0], "d": [1]}"#,
    );
    let out = clampqp(&["solve", &file]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`g`"), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
}

#[test]
fn missing_file_is_an_input_error() {
    let out = clampqp(&["solve", "/nonexistent/problem.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot read"));
}

#[test]
fn max_iters_exit_code_with_best_effort_iterate() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"n": 2, "m": 2, "H": [[4, 1], [1, 2]], "g": [1, 1],
        "G": [[1, 1], [1, 0]], "c": [1, 0], "d": [1, 0.7]}"#;
    let file = write(dir.path(), "hard.json", text);
    let out = clampqp(&["solve", &file, "--max-iters", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(value(&text, "status"), "max-iters");
    assert_eq!(value(&text, "iterations"), "1");
    assert_eq!(value(&text, "y").split(' ').count(), 2);
}

#[test]
fn tolerance_flags_are_applied() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "box.json", BOX_1D);
    let out = clampqp(&["solve", &file, "--eps-prim", "1e-10", "--eps-dual", "1e-10"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(value(&text, "r_dual").parse::<f64>().unwrap() <= 1e-10);
}

#[test]
fn unknown_flags_are_rejected() {
    let out = clampqp(&["solve", "x.json", "--rho", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--rho"));
    assert_eq!(clampqp(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn help_defaults_match_solver_settings() {
    let out = clampqp(&["solve", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let defaults = clampqp::solver::SolverSettings::default();
    assert!(text.contains(&format!("[default: {}]", defaults.eps_prim)));
    assert!(text.contains(&format!("[default: {}]", defaults.max_iters)));
}

#[test]
fn bench_qp_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("qp.csv");
    let out = clampqp(&[
        "bench-qp",
        "--sizes",
        "10,50",
        "--seeds",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(&path).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("suite,n_or_nu,seed,iterations,"));
    let summary = stderr(&out);
    assert!(summary.contains("n=10: 3/3 converged"), "{summary}");
    assert!(summary.contains("n=50: 3/3 converged"), "{summary}");
}

#[test]
fn bench_qp_repeats_except_wall_time() {
    let run = || {
        let out = clampqp(&["bench-qp", "--sizes", "12", "--seeds", "2", "--tol", "1e-7"]);
        assert_eq!(out.status.code(), Some(0));
        stdout(&out)
            .lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f[7] = "";
                f.join(",")
            })
            .collect::<Vec<_>>()
    };
    let first = run();
    assert_eq!(first.len(), 3);
    assert_eq!(first, run());
}

#[test]
fn bench_output_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("qp.csv");
    let out = clampqp(&[
        "bench-qp",
        "--sizes",
        "10",
        "--seeds",
        "1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error"));
}

#[test]
fn bench_mpc_rows() {
    let out = clampqp(&[
        "bench-mpc",
        "--nu",
        "2",
        "--horizon",
        "10",
        "--steps",
        "200",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = stdout(&out);
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("random-mpc,2,")));
    assert!(stderr(&out).contains("nu=2: "));
}

#[test]
fn mpc_demo_double_integrator() {
    let out = clampqp(&["mpc-demo", "--horizon", "40"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let steps: usize = value(&text, "steps_to_stabilize").parse().unwrap();
    assert!(steps <= 300);
    assert!(value(&text, "activity_fraction").parse::<f64>().unwrap() > 0.0);
    assert_eq!(value(&text, "diverged"), "false");
}
