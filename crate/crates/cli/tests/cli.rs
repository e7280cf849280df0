use std::path::Path;
use std::process::{Command, Output};

use consensus_mpc::model::problem_dimensions;
use consensus_mpc::oracle::min_separation;
use consensus_mpc::record::{parse_trajectory_csv, RunRecord};
use consensus_mpc::Scenario;
use nalgebra::DVector;

fn cmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmpc"))
        .args(args)
        .env_remove("TURBOADMM_THREADS")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, agents: usize) -> std::path::PathBuf {
    let out = dir.join(format!("circle{agents}.json"));
    let n = agents.to_string();
    let o = cmpc(&["generate", "--agents", &n, "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn generate_writes_the_circle_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario::load(generate(dir.path(), 2)).unwrap();
    let d = problem_dimensions(&s);
    assert_eq!((d.num_variables, d.num_dynamics_constraints, d.num_collision_pair_times), (248, 160, 20));
    let single = Scenario::load(generate(dir.path(), 1)).unwrap();
    assert_eq!(problem_dimensions(&single).num_collision_pair_times, 0);
}

#[test]
fn run_then_export_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = generate(dir.path(), 2);
    let report = dir.path().join("run.json");
    let o = cmpc(&["run", path(&scenario), "--threads", "1", "--out", path(&report), "--strict"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("converged: true"));

    let record = RunRecord::load(&report).unwrap();
    assert!(record.report.converged);
    let csv_path = dir.path().join("traj.csv");
    let o = cmpc(&["export-traj", path(&report), "--out", path(&csv_path)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 21);
    let trajectories = parse_trajectory_csv(&csv).unwrap();
    assert_eq!(trajectories, record.report.trajectories);
    let states: Vec<Vec<DVector<f64>>> = trajectories.iter().map(|t| t.state_vectors()).collect();
    assert_eq!(Some(min_separation(&states, 2)), record.report.min_separation);
}

#[test]
fn missing_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.json");
    let o = cmpc(&["run", path(&dir.path().join("absent.json")), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bad_schema_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"format_version": 1, "T": 20}"#).unwrap();
    let o = cmpc(&["run", path(&bad)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn strict_run_reports_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = generate(dir.path(), 2);
    let report = dir.path().join("run.json");
    let args = ["run", path(&scenario), "--max-iters", "3", "--out", path(&report)];
    let o = cmpc(&[&args[..], &["--strict"]].concat());
    assert_eq!(o.status.code(), Some(1));
    // The record is still written; only the exit code changes.
    assert!(!RunRecord::load(&report).unwrap().report.converged);
    assert!(cmpc(&args).status.success());
}

#[test]
fn ablate_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.csv");
    let o = cmpc(&[
        "ablate", "--agents", "2,4", "--repeats", "1", "--max-iters", "20", "--threads", "1", "--out", path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    let std_col = header.iter().position(|&c| c == "wall_ms_std").unwrap();
    assert!(rows.iter().all(|r| r[std_col].parse::<f64>().unwrap() == 0.0));
}
