use std::fs;
use timelag::cli::run;
use timelag::report::validate_report;

fn run_args(args: &[&str]) -> i32 {
    run(std::iter::once("timelag").chain(args.iter().copied()))
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run_args(&["--out", out, "msm", "--input", "/nonexistent/traj.txt"]), 2);
    assert_eq!(run_args(&["--out", out, "sqrt-experiment", "--methods", "pca"]), 2);
    assert_eq!(run_args(&["--out", out, "no-such-command"]), 2);
    assert_eq!(run_args(&["--help"]), 0);
}

#[test]
fn short_trajectory_is_insufficient_data() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("short.txt");
    fs::write(&input, "0 1 0\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(run_args(&["--out", out.to_str().unwrap(), "msm", "--input", input.to_str().unwrap(), "--lag", "5"]), 3);
}

#[test]
fn msm_run_writes_a_valid_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("traj.txt");
    let states: Vec<String> = (0..500).map(|i| ((i / 7) % 3).to_string()).collect();
    fs::write(&input, states.join(",")).unwrap();
    let out = dir.path().join("out");
    let code = run_args(&["--out", out.to_str().unwrap(), "msm", "--input", input.to_str().unwrap(), "--k", "2", "--reversible"]);
    assert_eq!(code, 0);
    let json = fs::read_to_string(out.join("report.json")).unwrap();
    validate_report(&json).unwrap();
    assert!(out.join("metrics.csv").exists());
}

#[test]
fn simulate_then_fit_sindy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = out.to_str().unwrap();
    assert_eq!(run_args(&["--out", o, "simulate", "--system", "rossler", "--n-frames", "20000", "--dt", "0.001"]), 0);
    let csv = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "csv") && !p.ends_with("metrics.csv"))
        .expect("trajectory csv");
    let fit_out = dir.path().join("fit");
    let code = run_args(&["--out", fit_out.to_str().unwrap(), "sindy", "--input", csv.to_str().unwrap(), "--dt", "0.001"]);
    assert_eq!(code, 0);
    validate_report(&fs::read_to_string(fit_out.join("report.json")).unwrap()).unwrap();
}
