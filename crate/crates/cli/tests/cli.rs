use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lleap(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lleap")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = lleap(args, out);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    let dir = TempDir::new().unwrap();
    lleap(args, dir.path()).status.code().unwrap()
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

/// Drops wall-clock fields: `key = value` lines and CSV columns named below.
fn untimed(text: &str) -> String {
    const TIMED: [&str; 4] = ["seconds", "cpu_seconds", "total_cost_seconds", "g_wall"];
    let mut lines = text.lines();
    let Some(first) = lines.next() else { return String::new() };
    if first.contains(',') && !first.contains('=') {
        let keep: Vec<bool> = first.split(',').map(|h| !TIMED.contains(&h)).collect();
        let filter =
            |l: &str| l.split(',').zip(&keep).filter(|(_, k)| **k).map(|(v, _)| v).collect::<Vec<_>>().join(",");
        std::iter::once(first).chain(lines).map(filter).collect::<Vec<_>>().join("\n")
    } else {
        text.lines().filter(|l| !TIMED.iter().any(|k| l.split(" = ").next() == Some(*k))).collect::<Vec<_>>().join("\n")
    }
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn assert_same_outputs(args: &[&str], files: &[&str]) {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    ok(args, a.path());
    ok(args, b.path());
    for f in files {
        assert_eq!(untimed(&read(a.path(), f)), untimed(&read(b.path(), f)), "{f} differs between runs");
    }
}

#[test]
fn list_scenarios_names_every_builtin() {
    let out = Command::new(env!("CARGO_BIN_EXE_lleap")).arg("list-scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["push_6_1", "pull_6_2", "uq_push_6_3", "uq_pull_6_4"] {
        assert!(text.contains(name), "{name} missing from {text}");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&["estimate-mlmc", "--scenario", "uq_push_6_3", "--tol", "0"]), 2);
    assert_eq!(code(&["estimate-mc", "--scenario", "uq_push_6_3", "--tol", "-1"]), 2);
    assert_eq!(code(&["simulate", "--scenario", "no_such_scenario"]), 2);
    assert_eq!(code(&["simulate", "--scenario", "push_6_1", "--dt", "0"]), 2);
    assert_eq!(code(&["estimate-mlmc", "--scenario", "push_6_1"]), 2);
    assert_eq!(code(&["estimate-mlmc", "--scenario", "uq_push_6_3", "--confidence", "1.5"]), 2);
    assert_eq!(code(&["simulate", "--scenario", "push_6_1", "--samples", "3"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
}

#[test]
fn malformed_scenario_file_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "schema_version = 1\nname = \"bad\"\n[config]\nhorizon = -3.0\n").unwrap();
    let c = code(&["simulate", "--scenario", path.to_str().unwrap()]);
    assert!(c == 1 || c == 2, "exit code {c}");
}

#[test]
fn simulate_writes_trajectory_and_manifest() {
    let dir = TempDir::new().unwrap();
    ok(&["simulate", "--scenario", "push_6_1", "--dt", "2"], dir.path());
    let traj = read(dir.path(), "trajectory.csv");
    let header: Vec<&str> = traj.lines().next().unwrap().split(',').collect();
    assert_eq!(header[0], "t");
    assert_eq!(header.last(), Some(&"x_8"));
    assert_eq!(traj.lines().count(), 1 + 101);
    let manifest = read(dir.path(), "run_manifest.txt");
    for key in ["command", "scenario", "seed", "schema_version", "git_revision", "version"] {
        assert!(manifest.lines().any(|l| l.starts_with(&format!("{key} = "))), "{key} missing");
    }
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn summary_format_writes_no_files() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("nothing");
    let stdout = ok(&["simulate", "--scenario", "push_6_1", "--format", "summary"], &out);
    assert!(!stdout.is_empty());
    assert!(!out.join("trajectory.csv").exists());
}

#[test]
fn stochastic_ensemble_is_reproducible() {
    let args = ["simulate", "--scenario", "push_6_1", "--stochastic", "--samples", "5", "--seed", "9"];
    assert_same_outputs(&args, &["trajectory.csv", "ensemble.csv", "summary.txt", "run_manifest.txt"]);
    let dir = TempDir::new().unwrap();
    ok(&args, dir.path());
    let rows = csv_rows(&read(dir.path(), "ensemble.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap().fract() == 0.0));
}

#[test]
fn convergence_errors_fall_with_the_bucket() {
    let dir = TempDir::new().unwrap();
    ok(&["convergence", "--scenario", "push_6_1", "--ladder", "32,16,8,4,2"], dir.path());
    let rows = csv_rows(&read(dir.path(), "convergence.csv"));
    assert_eq!(rows.len(), 5);
    let errors: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(errors.windows(2).all(|w| w[1] <= w[0]), "{errors:?}");
    assert!(dir.path().join("oracle_ladder.csv").exists());
}

#[test]
fn single_rung_ladder_gives_one_row() {
    let dir = TempDir::new().unwrap();
    ok(&["convergence", "--scenario", "push_6_1", "--ladder", "4"], dir.path());
    assert_eq!(csv_rows(&read(dir.path(), "convergence.csv")).len(), 1);
}

#[test]
fn convergence_is_reproducible() {
    assert_same_outputs(
        &["convergence", "--scenario", "push_6_1", "--ladder", "16,8"],
        &["convergence.csv", "oracle_ladder.csv", "summary.txt", "run_manifest.txt"],
    );
}

#[test]
fn mlmc_outputs_are_reproducible() {
    let args = ["estimate-mlmc", "--scenario", "uq_push_6_3", "--tol", "30", "--seed", "4"];
    assert_same_outputs(&args, &["report.txt", "levels.csv", "screening.csv", "run_manifest.txt"]);
    let dir = TempDir::new().unwrap();
    ok(&args, dir.path());
    let report = read(dir.path(), "report.txt");
    let value =
        |k: &str| -> f64 { report.lines().find_map(|l| l.strip_prefix(&format!("{k} = "))).unwrap().parse().unwrap() };
    assert!((value("estimate") - 425.0).abs() < 60.0);
    assert_eq!(value("tol"), 30.0);
}

#[test]
fn mc_outputs_are_reproducible() {
    let args = ["estimate-mc", "--scenario", "uq_push_6_3", "--tol", "40", "--level", "1", "--seed", "4"];
    assert_same_outputs(&args, &["report.txt", "run_manifest.txt"]);
}
