//! CLI surface tests: exit codes, schema errors and command plumbing.
//! Heavier end-to-end checks live in the acceptance suite.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graspstack"))
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .env_remove("GRASPSTACK_SEED")
        .output()
        .expect("binary runs")
}

#[test]
fn missing_scenario_file_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["run", "--scenario", "nope.json"]);
    assert_eq!(out.status.code(), Some(64), "{out:?}");
}

#[test]
fn unknown_object_class_is_usage_error_naming_the_class() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{
            "version": 1, "name": "bad", "seed": 1,
            "scene": [{"class": "banana", "distance_mm": 80.0}]
        }"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["run", "--scenario", "bad.json"]);
    assert_eq!(out.status.code(), Some(64));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("banana"), "{stderr}");
    assert!(stderr.contains("scene[0].class"), "{stderr}");
}

#[test]
fn unknown_scenario_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("extra.json");
    std::fs::write(
        &path,
        r#"{"version": 1, "name": "x", "seed": 1, "scene": [], "bogus_field": 3}"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["run", "--scenario", "extra.json"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_field"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn eval_map_on_shipped_fixture_prints_frozen_value() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = repo_file("fixtures/detection");
    let out = run_in(
        dir.path(),
        &["eval", "map", "--fixtures", fixtures.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let v: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    let map = v["map"].as_f64().unwrap();
    assert!((map - 5.0 / 6.0).abs() <= 1e-9, "map {map}");
}

#[test]
fn eval_map_with_empty_fixtures_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("predictions.jsonl"), "").unwrap();
    std::fs::write(dir.path().join("groundtruth.jsonl"), "").unwrap();
    let out = run_in(
        dir.path(),
        &["eval", "map", "--fixtures", dir.path().to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn perfect_match_fixture_scores_map_one() {
    let dir = tempfile::tempdir().unwrap();
    let line = r#"{"image_id":0,"class_id":2,"cx":0.5,"cy":0.5,"w":0.2,"h":0.2}"#;
    std::fs::write(
        dir.path().join("predictions.jsonl"),
        r#"{"image_id":0,"class_id":2,"confidence":0.9,"cx":0.5,"cy":0.5,"w":0.2,"h":0.2}"#,
    )
    .unwrap();
    std::fs::write(dir.path().join("groundtruth.jsonl"), line).unwrap();
    let out = run_in(
        dir.path(),
        &["eval", "map", "--fixtures", dir.path().to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stdout).trim()).unwrap();
    assert_eq!(v["map"].as_f64().unwrap(), 1.0);
}

#[test]
fn gen_writes_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "gen",
            "grasp-data",
            "--out",
            "grasp.jsonl",
            "--count",
            "60",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = std::fs::read_to_string(dir.path().join("grasp.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 60);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first["object_id"].is_u64());
    assert!(first["force"].is_f64());

    let out = run_in(
        dir.path(),
        &[
            "gen",
            "gesture-data",
            "--out",
            "gest.jsonl",
            "--count",
            "9",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("gest.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 9);
}

#[test]
fn gen_imu_trace_follows_scenario_script() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = repo_file("scenarios/bottle.json");
    let out = run_in(
        dir.path(),
        &[
            "gen",
            "imu-trace",
            "--scenario",
            scenario.to_str().unwrap(),
            "--out",
            "trace.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    // 30 Hz over 12 s.
    assert_eq!(text.lines().count(), 361);
    // The activation pulse peak (script 500 ms + 1000 ms) is present.
    let peak: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .filter(|v: &serde_json::Value| v["t_ms"].as_u64() == Some(1500))
        .collect();
    assert_eq!(peak.len(), 1);
    let gx = peak[0]["gyro"][0].as_f64().unwrap();
    assert!(gx < -80.0, "tilt-left pulse expected at 1500 ms, got {gx}");
}

#[test]
fn train_graspforce_default_prints_perfect_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["train", "graspforce", "--out", "g.bin"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let v: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(v["metrics"]["grasp_accuracy"].as_f64().unwrap(), 1.0);
    assert!(v["metrics"]["force_mae"].as_f64().unwrap() <= 0.02);
    assert!(dir.path().join("g.bin").exists());
}

#[test]
fn train_gesture_default_prints_high_test_accuracy_and_quantizes() {
    // Full default training run (a few minutes), then INT8 agreement on
    // the produced model via `eval quant`.
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["train", "gesture", "--out", "m.bin"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let v: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert!(v["metrics"]["gesture_test_acc"].as_f64().unwrap() >= 0.95);

    let out = run_in(dir.path(), &["eval", "quant", "--model", "m.bin"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let v: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stdout).trim()).unwrap();
    assert!(
        v["agreement"].as_f64().unwrap() >= 0.99,
        "quant agreement {v}"
    );
}

#[test]
fn train_gesture_zero_epochs_saves_init_weights_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["train", "gesture", "--out", "m.bin", "--epochs", "0"],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let v: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    let acc = v["metrics"]["gesture_test_acc"].as_f64().unwrap();
    assert!(
        (acc - 1.0 / 3.0).abs() <= 0.2,
        "init-weights accuracy {acc} not near chance"
    );
    assert!(v["metrics"]["final_loss"].is_null());
    assert_eq!(v["metrics"]["epochs_run"].as_u64(), Some(0));
    assert!(dir.path().join("m.bin").exists());
}

#[test]
fn bad_seed_env_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["gen", "grasp-data", "--out", "g.jsonl"])
        .current_dir(dir.path())
        .env("GRASPSTACK_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn seed_env_var_is_used_as_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |env: Option<&str>, out_name: &str| {
        let mut cmd = bin();
        cmd.args(["gen", "grasp-data", "--out", out_name, "--count", "30"])
            .current_dir(dir.path())
            .env_remove("GRASPSTACK_SEED");
        if let Some(seed) = env {
            cmd.env("GRASPSTACK_SEED", seed);
        }
        assert_eq!(cmd.output().unwrap().status.code(), Some(0));
        std::fs::read(dir.path().join(out_name)).unwrap()
    };
    let default = gen(None, "a.jsonl");
    let env9 = gen(Some("9"), "b.jsonl");
    let flag9 = {
        let out = run_in(
            dir.path(),
            &[
                "gen",
                "grasp-data",
                "--out",
                "c.jsonl",
                "--count",
                "30",
                "--seed",
                "9",
            ],
        );
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(dir.path().join("c.jsonl")).unwrap()
    };
    assert_ne!(default, env9, "env seed must change the dataset");
    assert_eq!(env9, flag9, "env fallback equals explicit flag");
}
