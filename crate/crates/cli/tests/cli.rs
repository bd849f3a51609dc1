use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rep2h"))
}

fn case_study() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/case_study.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, seed: u64, steps: usize) -> PathBuf {
    let path = dir.join(format!("s{seed}.json"));
    let seed = seed.to_string();
    let steps = steps.to_string();
    let o = run(&["synth", "--seed", &seed, "--steps", &steps, "--out", p(&path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

#[test]
fn validate_bundled_scenario() {
    let o = run(&["validate", p(&case_study())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("24 steps, 4 units, 9 buses"));
}

#[test]
fn invalid_scenarios_exit_with_a_locator() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(case_study()).unwrap()).unwrap();
    v["series"]["wind_mw"][0].as_array_mut().unwrap().pop();
    v["economics"]["c_h2"] = serde_json::json!(-3.0);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let o = run(&["validate", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("series.wind_mw[0]: length 23"), "{err}");
    assert!(err.contains("economics.c_h2"), "{err}");

    std::fs::write(&bad, "{\"name\": 3}").unwrap();
    let o = run(&["optimize", p(&bad), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("name"), "{}", stderr(&o));
}

#[test]
fn one_step_optimize_is_fast_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = run(&["optimize", p(&case_study()), "--horizon", "1", "--out", p(dir.path())]);
    let elapsed = start.elapsed();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(elapsed < Duration::from_secs(1), "{elapsed:?}");
    let schedule: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("schedule.json")).unwrap()).unwrap();
    assert_eq!(schedule["coordinated"], serde_json::json!(true));
    assert_eq!(schedule["dispatch"].as_array().unwrap().len(), 1);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["summary"]["hydrogen_kg"].as_f64().unwrap() > 0.0);
    let mut rd = csv::Reader::from_path(dir.path().join("steps.csv")).unwrap();
    assert_eq!(rd.records().count(), 1);
}

#[test]
fn saved_schedule_resimulates() {
    let dir = tempfile::tempdir().unwrap();
    let sc = synth(dir.path(), 7, 2);
    let first = dir.path().join("first");
    let o = run(&["optimize", p(&sc), "--out", p(&first)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let again = dir.path().join("again");
    let o = run(&["simulate", p(&sc), p(&first.join("schedule.json")), "--out", p(&again)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(first.join("steps.csv")).unwrap(),
        std::fs::read_to_string(again.join("steps.csv")).unwrap()
    );
}

#[test]
fn baseline_comparison_written() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["optimize", p(&case_study()), "--horizon", "3", "--baseline", "--export-lp", p(&dir.path().join("model.lp")), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["baseline_schedule.json", "baseline_steps.csv", "baseline_summary.json", "comparison.json", "model.lp"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let table = std::fs::read_to_string(dir.path().join("comparison.txt")).unwrap();
    assert!(table.starts_with("Method"));
    assert!(table.contains("Traditional") && table.contains("Proposed") && table.contains("Comparison"));
    let cmp: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("comparison.json")).unwrap()).unwrap();
    assert_eq!(cmp["reference"]["method"], serde_json::json!("Traditional"));
}

#[test]
fn empty_batch_gives_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    let o = run(&["batch", p(&input), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(dir.path().join("batch.csv")).unwrap(), "");
}

#[test]
fn batch_rows_and_mean() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    for seed in [3, 1, 2] {
        synth(&input, seed, 3);
    }
    let o = run(&["batch", p(&input), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rd = csv::Reader::from_path(dir.path().join("batch.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    let names: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(names, ["s1", "s2", "s3", "mean"]);
    let gain = |r: &csv::StringRecord| r[1].parse::<f64>().unwrap();
    let mean = rows[..3].iter().map(gain).sum::<f64>() / 3.0;
    assert!((gain(&rows[3]) - mean).abs() < 1e-9);
}

#[test]
fn batch_isolates_broken_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    synth(&input, 1, 2);
    std::fs::write(input.join("broken.json"), "{").unwrap();
    let o = run(&["batch", p(&input), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("broken: failed"), "{}", stderr(&o));
    let mut rd = csv::Reader::from_path(dir.path().join("batch.csv")).unwrap();
    assert_eq!(rd.records().count(), 2);
}

#[test]
fn bad_pwl_grid_is_rejected() {
    let o = run(&["optimize", p(&case_study()), "--pwl-grid", "7-5"]);
    assert!(!o.status.success());
}
