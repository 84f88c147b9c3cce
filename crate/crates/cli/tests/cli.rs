//! Binary-level behavior: exit codes, warnings, and environment overrides.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_wmavmd")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn write_scenario(dir: &Path, injection: Option<serde_json::Value>) -> PathBuf {
    let mut scenario = serde_json::json!({
        "profile": {
            "segments": [
                {"mode": "traction", "duration_s": 150.0, "target_speed_kmh": 60.0},
                {"mode": "braking", "duration_s": 150.0, "target_speed_kmh": 0.0}
            ],
            "sample_interval_s": 0.1,
            "channels": 4
        },
        "noise": {"sigma_kmh": 0.2, "rho": 0.5, "cross_correlation": 0.3, "seed": 5}
    });
    if let Some(injection) = injection {
        scenario["injection"] = injection;
    }
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(&scenario).unwrap()).unwrap();
    path
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), None);
    let trace = dir.path().join("trace.csv");
    let status = run(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--output",
        trace.to_str().unwrap(),
    ]);
    assert!(status.status.success());

    // train without a window selection
    let out = run(&[
        "train",
        "--input",
        trace.to_str().unwrap(),
        "--model",
        dir.path().join("m.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn slip_inside_braking_is_a_spec_error() {
    let dir = tempfile::tempdir().unwrap();
    // The braking segment spans samples 1500..3000.
    let injection = serde_json::json!({
        "events": [{
            "channels": [0],
            "kind": "slip",
            "start_sample": 2000,
            "duration_samples": 5,
            "magnitude": 1.0
        }]
    });
    let scenario = write_scenario(dir.path(), Some(injection));
    let out = run(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--output",
        dir.path().join("trace.csv").to_str().unwrap(),
        "--labels",
        dir.path().join("labels.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("invalid spec"), "{stderr}");
}

#[test]
fn ingestion_errors_exit_3_with_row_number() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("bad.csv");
    std::fs::write(
        &trace,
        "t,v1,v2,v3,v4,mode\n0,50,50,50,50,traction\n1,50,50,oops,50,traction\n",
    )
    .unwrap();
    let out = run(&[
        "train",
        "--window",
        "2",
        "--input",
        trace.to_str().unwrap(),
        "--model",
        dir.path().join("m.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 3"), "{stderr}");
}

#[test]
fn channel_mismatch_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), None);
    let trace = dir.path().join("trace.csv");
    let model = dir.path().join("model.json");
    assert!(run(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--output",
        trace.to_str().unwrap(),
    ])
    .status
    .success());
    assert!(run(&[
        "train",
        "--window",
        "2",
        "--input",
        trace.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
    ])
    .status
    .success());

    // A five-channel trace against the four-channel model.
    let five = dir.path().join("five.csv");
    std::fs::write(
        &five,
        "t,v1,v2,v3,v4,v5,mode\n0,50,50,50,50,50,traction\n1,50,50,50,50,50,traction\n",
    )
    .unwrap();
    let out = run(&[
        "detect",
        "--input",
        five.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--output",
        dir.path().join("alarms.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{out:?}");
}

#[test]
fn empty_trace_detects_cleanly_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), None);
    let trace = dir.path().join("trace.csv");
    let model = dir.path().join("model.json");
    assert!(run(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--output",
        trace.to_str().unwrap(),
    ])
    .status
    .success());
    assert!(run(&[
        "train",
        "--window",
        "2",
        "--input",
        trace.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
    ])
    .status
    .success());

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "t,v1,v2,v3,v4,mode\n").unwrap();
    let alarms = dir.path().join("alarms.csv");
    let out = run(&[
        "detect",
        "--input",
        empty.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--output",
        alarms.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty trace"));
    let written = std::fs::read_to_string(&alarms).unwrap();
    assert_eq!(written.lines().count(), 1, "header only: {written}");
}

#[test]
fn seed_env_var_overrides_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), None);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    assert!(run(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--output",
        a.to_str().unwrap(),
    ])
    .status
    .success());
    let out = Command::new(bin())
        .env("WMAVMD_SEED", "999")
        .args([
            "simulate",
            "--scenario",
            scenario.to_str().unwrap(),
            "--output",
            b.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    // The flag wins over the environment.
    let out = Command::new(bin())
        .env("WMAVMD_SEED", "999")
        .args([
            "simulate",
            "--scenario",
            scenario.to_str().unwrap(),
            "--seed",
            "5",
            "--output",
            c.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());

    let a = std::fs::read(&a).unwrap();
    let b = std::fs::read(&b).unwrap();
    let c = std::fs::read(&c).unwrap();
    assert_ne!(a, b, "env seed must change the trace");
    assert_eq!(a, c, "explicit seed 5 matches the scenario's seed");
}

#[test]
fn analyze_requires_a_window_range() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), None);
    let trace = dir.path().join("trace.csv");
    let model = dir.path().join("model.json");
    assert!(run(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--output",
        trace.to_str().unwrap(),
    ])
    .status
    .success());
    assert!(run(&[
        "train",
        "--window",
        "2",
        "--input",
        trace.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
    ])
    .status
    .success());
    let out = run(&["analyze", "--model", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn reference_virtual_channel_cli_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), None);
    let trace = dir.path().join("trace.csv");
    let model = dir.path().join("model.json");
    assert!(run(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--output",
        trace.to_str().unwrap(),
    ])
    .status
    .success());

    // Reference series: constant consensus speed, one row per frame.
    let rows = std::fs::read_to_string(&trace).unwrap().lines().count() - 1;
    let reference = dir.path().join("ref.csv");
    let mut body = String::from("v\n");
    for _ in 0..rows {
        body.push_str("50.0\n");
    }
    std::fs::write(&reference, body).unwrap();

    // Training prints a 5-channel model even into a closed pipe; the model
    // file must exist regardless of what happens to stdout.
    assert!(run(&[
        "train",
        "--window",
        "2",
        "--input",
        trace.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--virtual",
        &format!("reference:{}", reference.display()),
    ])
    .status
    .success());
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(parsed["p"], 5);
    assert_eq!(parsed["virtual_policy"]["policy"], "reference");

    // Detect requires the series again and succeeds with it.
    let out = run(&[
        "detect",
        "--input",
        trace.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--output",
        dir.path().join("alarms.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let out = run(&[
        "detect",
        "--input",
        trace.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--virtual-ref",
        reference.to_str().unwrap(),
        "--output",
        dir.path().join("alarms.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
}

#[test]
fn fuzz_exits_zero_on_clean_suites() {
    let out = run(&["fuzz", "--iterations", "500", "--instances", "10", "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("all suites clean"), "{stdout}");
}
