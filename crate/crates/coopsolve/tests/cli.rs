//! End-to-end checks of the `coopsolve` binary: every subcommand, the JSON
//! and trace artifacts, and the error paths.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coopsolve::harness::GrayImage;
use coopsolve::model::{load_problem, save_problem};
use tempfile::tempdir;

fn coopsolve(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coopsolve"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary should spawn")
}

fn stdout_of(out: &Output) -> String {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    assert!(!out.status.success(), "expected failure, command succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes the two-variable demo problem and returns its path as a string.
fn write_p2(dir: &Path) -> String {
    let path = dir.join("p2.json");
    fs::write(&path, save_problem(&common::p2())).unwrap();
    path.to_str().unwrap().to_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_finds_the_optimum_and_writes_artifacts() {
    let dir = tempdir().unwrap();
    let p2 = write_p2(dir.path());
    let out = coopsolve(
        &[
            "solve", &p2, "--lambda", "0.9", "--out", "report.json", "--trace", "trace.jsonl",
        ],
        dir.path(),
    );
    let stdout = stdout_of(&out);
    assert!(stdout.contains("energy: 1"), "stdout: {stdout}");
    assert!(stdout.contains("lower bound:"), "stdout: {stdout}");

    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["method"], "coop");
    assert_eq!(report["energy"], 1.0);
    assert_eq!(report["assignment"], serde_json::json!([0, 0]));
    assert_eq!(report["bound_certified"], true);
    assert!(report["iterations"].as_u64().unwrap() >= 1);

    let trace = fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let mut last_k = 0;
    for line in trace.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        let k = rec["k"].as_u64().unwrap();
        assert_eq!(k, last_k + 1, "iterations must be consecutive");
        last_k = k;
        assert!(rec["lower_bound"].as_f64().unwrap().is_finite());
        assert!(rec["residual"].as_f64().unwrap().is_finite());
        assert!(rec["candidate_energy"].as_f64().unwrap() >= 1.0);
        assert_eq!(rec["active_counts"].as_array().unwrap().len(), 2);
    }
    assert!(last_k >= 1, "trace must not be empty");
}

#[test]
fn solve_annealing_and_descent_report_consistent_energies() {
    let dir = tempdir().unwrap();
    let p2 = write_p2(dir.path());
    let problem = common::p2();
    for (method, budget) in [("sa", "40"), ("icm", "20")] {
        let file = format!("{method}.json");
        let out = coopsolve(
            &["solve", &p2, "--method", method, "--budget", budget, "--seed", "1", "--out", &file],
            dir.path(),
        );
        stdout_of(&out);
        let report = read_json(&dir.path().join(&file));
        assert_eq!(report["method"], method);
        let x = coopsolve::model::Assignment(
            report["assignment"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_u64().unwrap() as usize)
                .collect(),
        );
        assert_eq!(problem.energy(&x).unwrap(), report["energy"].as_f64().unwrap());
    }
}

#[test]
fn oracle_enumerates_the_ground_truth() {
    let dir = tempdir().unwrap();
    let p2 = write_p2(dir.path());
    let out = coopsolve(&["oracle", &p2, "--out", "oracle.json"], dir.path());
    let stdout = stdout_of(&out);
    assert!(stdout.contains("optimal energy: 1"), "stdout: {stdout}");

    let doc = read_json(&dir.path().join("oracle.json"));
    assert_eq!(doc["energy"], 1.0);
    assert_eq!(doc["assignment"], serde_json::json!([0, 0]));
    assert_eq!(doc["optima"], 1);
    assert_eq!(doc["truncated"], false);
}

#[test]
fn compare_tabulates_every_method() {
    let dir = tempdir().unwrap();
    let p2 = write_p2(dir.path());
    let out = coopsolve(
        &["compare", &p2, "--lambda", "0.9", "--budget", "50", "--out", "table.json"],
        dir.path(),
    );
    let stdout = stdout_of(&out);
    for label in ["cooperative", "annealing", "icm"] {
        assert!(stdout.contains(label), "missing {label} in: {stdout}");
    }

    let rows = read_json(&dir.path().join("table.json"));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert_eq!(row["ok"], true, "row failed: {row}");
        assert!(row["energy"].as_f64().unwrap() >= 1.0);
        assert!(row["wall_ms"].as_f64().unwrap() >= 0.0);
    }
    let coop = rows.iter().find(|r| r["method"] == "cooperative").unwrap();
    assert_eq!(coop["energy"], 1.0);
    assert!(coop["lower_bound"].as_f64().unwrap() <= 1.0 + 1e-9);
}

#[test]
fn stereo_demo_produces_field_table_and_problem_dump() {
    let dir = tempdir().unwrap();
    let out = coopsolve(
        &[
            "stereo-demo",
            "--width", "8",
            "--height", "8",
            "--max-disparity", "2",
            "--budget", "8",
            "--seed", "3",
            "--disparity-out", "disp.pgm",
            "--dump-problem", "prob.json",
            "--out", "stereo.json",
        ],
        dir.path(),
    );
    let stdout = stdout_of(&out);
    assert!(stdout.contains("instance: 8x8 pixels"), "stdout: {stdout}");
    assert!(stdout.contains("ground-truth energy:"), "stdout: {stdout}");

    let field = GrayImage::read_from(dir.path().join("disp.pgm")).unwrap();
    assert_eq!((field.width(), field.height()), (8, 8));

    let problem = load_problem(&fs::read_to_string(dir.path().join("prob.json")).unwrap()).unwrap();
    assert_eq!(problem.num_variables(), 64);

    let doc = read_json(&dir.path().join("stereo.json"));
    assert_eq!(doc["width"], 8);
    assert_eq!(doc["height"], 8);
    assert!(doc["truth_energy"].as_f64().is_some());
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for (row, acc) in rows.iter().zip(doc["accuracy"].as_array().unwrap()) {
        assert_eq!(row["ok"], true, "row failed: {row}");
        let acc = acc.as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

#[test]
fn solving_a_dumped_stereo_problem_round_trips() {
    let dir = tempdir().unwrap();
    stdout_of(&coopsolve(
        &[
            "stereo-demo", "--width", "8", "--height", "8", "--max-disparity", "2",
            "--budget", "4", "--dump-problem", "prob.json",
        ],
        dir.path(),
    ));
    let out = coopsolve(
        &["solve", "prob.json", "--lambda-ramp", "0.3:0.999:0.1", "--propagation", "neighbor"],
        dir.path(),
    );
    assert!(stdout_of(&out).contains("energy:"));
}

#[test]
fn bad_inputs_fail_with_diagnostics() {
    let dir = tempdir().unwrap();
    let p2 = write_p2(dir.path());

    let out = coopsolve(&["solve", "no-such-file.json"], dir.path());
    assert!(stderr_of(&out).contains("no-such-file.json"));

    fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    let out = coopsolve(&["solve", "broken.json"], dir.path());
    assert!(stderr_of(&out).contains("broken.json"));

    let out = coopsolve(&["solve", &p2, "--lambda-ramp", "0.5:0.9"], dir.path());
    assert!(stderr_of(&out).contains("START:END:STEP"));

    let out = coopsolve(&["solve", &p2, "--lambda", "1.5"], dir.path());
    stderr_of(&out);

    let out = coopsolve(
        &["solve", &p2, "--lambda", "0.5", "--lambda-ramp", "0.1:0.2:0.1"],
        dir.path(),
    );
    assert!(!out.status.success(), "conflicting schedule flags must be rejected");
}
