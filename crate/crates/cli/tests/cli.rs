use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qportfolio(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qportfolio"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SIMULATE: &str = r#"{
  "model": {"kind": "sho", "gamma": 1.0, "n_thermal": 1.0},
  "risk_neutral": {"r": 0.0, "T": 0.2},
  "initial_state": [1.0, 0.0],
  "schedule": {"dt": 0.01},
  "experiment": "simulate",
  "options": {"n_paths": 200, "paths_written": 3},
  "master_seed": 4,
  "output_dir": "run"
}"#;

const HEDGE: &str = r#"{
  "model": {"kind": "sho", "gamma": 1.0, "n_thermal": 1.0},
  "risk_neutral": {"r": 0.05, "T": 0.5},
  "initial_state": [1.0],
  "schedule": {"dt": 0.05},
  "experiment": "hedge",
  "options": {
    "payoff": {"kind": "call", "strikes": [0.5]},
    "n_paths": 50,
    "ledger_paths": 2
  },
  "master_seed": 8,
  "output_dir": "hedge"
}"#;

#[test]
fn malformed_scenario_exits_one_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SIMULATE.replace("\"gamma\": 1.0", "\"gamma\": -1.0");
    let path = write(dir.path(), "bad.json", &bad);
    let out = qportfolio(&["simulate", "--scenario", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("model.gamma"), "{}", stderr(&out));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn misspelled_key_gets_a_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SIMULATE.replace("\"n_thermal\"", "\"n_thermel\"");
    let path = write(dir.path(), "bad.json", &bad);
    let out = qportfolio(&["simulate", "--scenario", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("n_thermel") && err.contains("did you mean \"n_thermal\""), "{err}");
}

#[test]
fn qubit_theta_shift_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
      "model": {"kind": "qubit", "phi_flux": 1.0, "theta_shift": -1.0},
      "risk_neutral": {"r": 0.0, "T": 1.0},
      "initial_state": [0.0],
      "experiment": "simulate"
    }"#;
    let path = write(dir.path(), "q.json", text);
    let out = qportfolio(&["simulate", "--scenario", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("model.theta_shift") && err.contains("> 0"), "{err}");
}

#[test]
fn every_error_is_listed() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SIMULATE
        .replace("\"gamma\": 1.0", "\"gamma\": 0.0")
        .replace("\"n_paths\": 200", "\"n_paths\": 1");
    let path = write(dir.path(), "bad.json", &bad);
    let out = qportfolio(&["simulate", "--scenario", path.to_str().unwrap()], dir.path());
    let err = stderr(&out);
    assert!(err.contains("model.gamma") && err.contains("options.n_paths"), "{err}");
    assert!(err.contains("2 validation error(s)"), "{err}");
}

#[test]
fn subcommand_must_match_the_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "s.json", SIMULATE);
    let out = qportfolio(&["hedge", "--scenario", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("\"simulate\""));
}

#[test]
fn describe_prints_the_resolved_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
      "model": {"kind": "sho", "gamma": 1.0, "n_thermal": 1.0},
      "risk_neutral": {"r": 0.0, "T": 1.0},
      "initial_state": [1.0],
      "experiment": "simulate"
    }"#;
    let path = write(dir.path(), "s.json", text);
    let out = qportfolio(&["simulate", "--scenario", path.to_str().unwrap(), "--describe"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let resolved: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(resolved["schedule"]["dt"], 1e-3);
    assert_eq!(resolved["options"]["n_paths"], 10_000);
    assert_eq!(resolved["master_seed"], 0);
    assert!(std::fs::read_dir(dir.path()).unwrap().count() == 1, "describe wrote files");
}

#[test]
fn outputs_carry_the_scenario_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "s.json", SIMULATE);
    let out = qportfolio(&["simulate", "--scenario", path.to_str().unwrap(), "--seed", "11"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let moments = std::fs::read_to_string(dir.path().join("run/moments.csv")).unwrap();
    let lines: Vec<&str> = moments.lines().collect();
    assert!(lines[1].starts_with("# scenario_sha256=") && lines[1].len() == 18 + 64);
    assert_eq!(lines[2], "# master_seed=11");
    assert!(lines[3].starts_with("# columns: step = "));
    assert!(lines[4].starts_with("step,time,component,mean,variance"));
    let paths = std::fs::read_to_string(dir.path().join("run/paths.csv")).unwrap();
    assert_eq!(paths.lines().nth(1), Some(lines[1]));
}

#[test]
fn reruns_are_byte_identical_and_the_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "h.json", HEDGE);
    let p = path.to_str().unwrap();
    let read = |sub: &str| -> Vec<Vec<u8>> {
        ["ledgers.csv", "errors.csv", "report.json"]
            .iter()
            .map(|f| std::fs::read(dir.path().join(sub).join(f)).unwrap())
            .collect()
    };
    for (sub, seed) in [("a", "8"), ("b", "8"), ("c", "9")] {
        let out = qportfolio(&["hedge", "--scenario", p, "--out", sub, "--seed", seed], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a")[1], read("c")[1]);
}

#[test]
fn unreadable_scenario_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = qportfolio(&["value", "--scenario", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot read"));
}

#[test]
fn numerical_failure_exits_two() {
    // 500k rebalancing times of a 400-cell surface exceed the storage limit
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
      "model": {"kind": "qubit", "phi_flux": 1.0, "theta_shift": 1.0},
      "risk_neutral": {"r": 0.0, "T": 1.0},
      "initial_state": [0.2],
      "schedule": {"dt": 2e-6},
      "experiment": "hedge",
      "options": {"payoff": {"kind": "step", "thresholds": [0.0]}, "n_paths": 10}
    }"#;
    let path = write(dir.path(), "q.json", text);
    let out = qportfolio(&["hedge", "--scenario", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("numerical failure"));
    assert!(!dir.path().join("out").exists());
}
