use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn densemap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_densemap"))
        .args(args)
        .current_dir(dir)
        .env_remove("DENSEMAP_SEED")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = densemap(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Every file under `dir` with its bytes, by relative path.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn small_scene(dir: &Path, out: &str) {
    ok(
        dir,
        &[
            "simulate", "--out", out, "--width", "64", "--height", "48", "--people", "4",
            "--frames", "3", "--seed", "9",
        ],
    );
}

#[test]
fn help_and_version_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "simulate",
        "synth",
        "train-rr",
        "predict",
        "detect",
        "track",
        "eval-count",
        "eval-game",
        "eval-quality",
        "eval-det",
        "eval-track",
        "pipeline",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
        let sub = ok(tmp.path(), &[cmd, "--help"]);
        let sub = String::from_utf8_lossy(&sub.stdout);
        assert!(sub.contains("--out"), "{cmd} help lacks --out");
        assert!(sub.contains("[default:"), "{cmd} help lacks defaults");
    }
    ok(tmp.path(), &["--version"]);
}

#[test]
fn help_states_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let help = |cmd: &str| String::from_utf8(ok(tmp.path(), &[cmd, "--help"]).stdout).unwrap();
    let synth = help("synth");
    assert!(synth.contains("[default: 4]"));
    assert!(synth.contains("per-dot-renormalize"));
    let detect = help("detect");
    assert!(detect.contains("[default: gmm-weighted]"));
    assert!(detect.contains("[default: 10000]"));
    let track = help("track");
    assert!(track.contains("[default: 0:50:1]"));
    assert!(help("eval-game").contains("[default: 0..3]"));
    assert!(help("eval-det").contains("[default: 4]"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // usage errors
    assert_eq!(
        densemap(dir, &["simulate", "--bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(densemap(dir, &["nope"]).status.code(), Some(1));
    assert_eq!(
        densemap(dir, &["simulate", "--people", "x", "--out", "a"])
            .status
            .code(),
        Some(1)
    );
    // invalid options
    assert_eq!(densemap(dir, &["simulate"]).status.code(), Some(1));
    assert_eq!(
        densemap(dir, &["simulate", "--out", "a", "--frames", "0"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        densemap(dir, &["simulate", "--out", "a", "--jobs", "0"])
            .status
            .code(),
        Some(1)
    );
    // missing inputs are I/O failures
    let missing = densemap(dir, &["synth", "--ann", "missing.json", "--out", "d"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.json"));
    assert_eq!(
        densemap(dir, &["detect", "--density", "nowhere", "--out", "d"])
            .status
            .code(),
        Some(2)
    );
    // malformed input content is invalid input
    fs::write(dir.join("bad.json"), "{not json").unwrap();
    assert_eq!(
        densemap(dir, &["synth", "--ann", "bad.json", "--out", "d"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        densemap(dir, &["simulate", "--config", "bad.json", "--out", "a"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn manifest_records_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_scene(dir, "s");
    ok(
        dir,
        &[
            "synth",
            "--ann",
            "s/annotations.json",
            "--out",
            "d",
            "--sigma",
            "3",
        ],
    );
    let m = manifest(&dir.join("d"));
    assert_eq!(m["command"], "synth");
    assert_eq!(m["config"]["sigma"], 3.0);
    assert_eq!(m["config"]["truncation"], 4.0);
    let inputs = m["inputs"].as_object().unwrap();
    assert_eq!(inputs.len(), 1);
    let hash = inputs.values().next().unwrap().as_str().unwrap();
    assert_eq!(hash.len(), 64);

    let sim = manifest(&dir.join("s"));
    assert_eq!(sim["seed"], 9);
    assert_eq!(sim["config"]["people"], 4);
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_scene(dir, "s");
    fs::write(dir.join("c.json"), r#"{"sigma": 2.5, "truncation": 3.0}"#).unwrap();
    ok(
        dir,
        &[
            "synth",
            "--ann",
            "s/annotations.json",
            "--out",
            "a",
            "--config",
            "c.json",
        ],
    );
    ok(
        dir,
        &[
            "synth",
            "--ann",
            "s/annotations.json",
            "--out",
            "b",
            "--config",
            "c.json",
            "--sigma",
            "5",
        ],
    );
    let a = manifest(&dir.join("a"));
    let b = manifest(&dir.join("b"));
    assert_eq!(a["config"]["sigma"], 2.5);
    assert_eq!(b["config"]["sigma"], 5.0);
    assert_eq!(b["config"]["truncation"], 3.0);
    assert_eq!(b["config"]["reference_scale"], 1.0);

    fs::write(dir.join("typo.json"), r#"{"sigmaa": 2.5}"#).unwrap();
    let out = densemap(
        dir,
        &[
            "synth",
            "--ann",
            "s/annotations.json",
            "--out",
            "c",
            "--config",
            "typo.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let run = |out: &str, env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_densemap"));
        cmd.args([
            "simulate", "--out", out, "--width", "40", "--height", "30", "--people", "3",
            "--frames", "2",
        ])
        .args(extra)
        .current_dir(dir)
        .env_remove("DENSEMAP_SEED");
        if let Some(s) = env {
            cmd.env("DENSEMAP_SEED", s);
        }
        assert!(cmd.output().unwrap().status.success());
        manifest(&dir.join(out))["seed"].as_u64().unwrap()
    };
    assert_eq!(run("a", None, &[]), 0);
    assert_eq!(run("b", Some("77"), &[]), 77);
    assert_eq!(run("c", Some("77"), &["--seed", "5"]), 5);
    assert_eq!(
        snapshot(&dir.join("a")).len(),
        snapshot(&dir.join("b")).len()
    );
    assert_ne!(
        fs::read(dir.join("a/annotations.json")).unwrap(),
        fs::read(dir.join("b/annotations.json")).unwrap()
    );
}

#[test]
fn manifest_replays_bit_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_scene(dir, "s");
    ok(dir, &["synth", "--ann", "s/annotations.json", "--out", "d"]);
    ok(
        dir,
        &[
            "detect",
            "--density",
            "d",
            "--out",
            "det",
            "--method",
            "gmm-weighted",
            "--seed",
            "4",
        ],
    );
    let first = snapshot(&dir.join("det"));
    fs::rename(dir.join("det"), dir.join("det1")).unwrap();
    ok(dir, &["detect", "--config", "det1/manifest.json"]);
    assert_eq!(snapshot(&dir.join("det")), first);
}

#[test]
fn detections_do_not_depend_on_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_scene(dir, "s");
    ok(dir, &["synth", "--ann", "s/annotations.json", "--out", "d"]);
    for method in ["gmm-weighted", "kmeans", "intprog", "local-max"] {
        ok(
            dir,
            &[
                "detect",
                "--density",
                "d",
                "--out",
                "j1",
                "--method",
                method,
                "--jobs",
                "1",
            ],
        );
        ok(
            dir,
            &[
                "detect",
                "--density",
                "d",
                "--out",
                "j4",
                "--method",
                method,
                "--jobs",
                "4",
            ],
        );
        assert_eq!(
            fs::read(dir.join("j1/detections.json")).unwrap(),
            fs::read(dir.join("j4/detections.json")).unwrap(),
            "{method}"
        );
    }
}

#[test]
fn evaluation_of_ground_truth_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_scene(dir, "s");
    ok(dir, &["synth", "--ann", "s/annotations.json", "--out", "d"]);
    ok(
        dir,
        &["eval-count", "--pred", "d", "--gt", "d", "--out", "ec"],
    );
    let counts = fs::read_to_string(dir.join("ec/counts.csv")).unwrap();
    let last = counts.lines().last().unwrap();
    assert!(last.starts_with("mean,"), "{last}");
    assert!(last.ends_with(",0,0"), "{last}");

    ok(
        dir,
        &["eval-game", "--pred", "d", "--gt", "d", "--out", "eg"],
    );
    let game = fs::read_to_string(dir.join("eg/game.csv")).unwrap();
    assert!(game.lines().next().unwrap().contains("game_3"));
    assert!(game.lines().last().unwrap().ends_with(",0,0,0,0"));

    ok(
        dir,
        &[
            "eval-quality",
            "--pred",
            "d",
            "--gt",
            "d",
            "--ann",
            "s/annotations.json",
            "--out",
            "eq",
        ],
    );
    let q = fs::read_to_string(dir.join("eq/quality.csv")).unwrap();
    let header: Vec<&str> = q.lines().next().unwrap().split(',').collect();
    let mean: Vec<&str> = q.lines().last().unwrap().split(',').collect();
    let col = |name: &str| {
        mean[header.iter().position(|h| *h == name).unwrap()]
            .parse::<f64>()
            .unwrap()
    };
    assert_eq!(col("bbmae"), 0.0);
    assert!((col("pearson") - 1.0).abs() < 1e-12);
    assert_eq!(col("pixel_loss"), 0.0);
}

#[test]
fn estimator_train_and_predict() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_scene(dir, "s");
    ok(dir, &["synth", "--ann", "s/annotations.json", "--out", "d"]);
    ok(
        dir,
        &[
            "train-rr",
            "--frames",
            "s",
            "--density",
            "d",
            "--out",
            "m",
            "--patch-size",
            "5",
        ],
    );
    assert!(dir.join("m/model.rrm").is_file());
    ok(
        dir,
        &[
            "predict",
            "--model",
            "m/model.rrm",
            "--frames",
            "s",
            "--out",
            "p",
        ],
    );
    assert_eq!(fs::read_dir(dir.join("p")).unwrap().count(), 4);
    ok(
        dir,
        &["eval-count", "--pred", "p", "--gt", "d", "--out", "e"],
    );
}

#[test]
fn track_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &[
            "simulate",
            "--out",
            "s",
            "--scenario",
            "distractor",
            "--frames",
            "12",
            "--seed",
            "2",
        ],
    );
    ok(dir, &["synth", "--ann", "s/annotations.json", "--out", "d"]);
    ok(
        dir,
        &[
            "track",
            "--frames",
            "s",
            "--ann",
            "s/annotations.json",
            "--density",
            "d",
            "--out",
            "t",
        ],
    );
    let pos = fs::read_to_string(dir.join("t/positions.csv")).unwrap();
    assert_eq!(pos.lines().count(), 13);
    assert!(dir.join("t/precision.csv").is_file());
    ok(
        dir,
        &[
            "eval-track",
            "--positions",
            "t/positions.csv",
            "--ann",
            "s/annotations.json",
            "--out",
            "e",
        ],
    );
    let prec = fs::read_to_string(dir.join("e/precision.csv")).unwrap();
    assert_eq!(prec.lines().count(), 52);
}

#[test]
fn pipeline_runs_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("p.json"),
        r#"{"simulate": {"width": 80, "height": 60, "people": 5, "frames": 3}, "detect": {"method": "intprog"}}"#,
    )
    .unwrap();
    ok(
        dir,
        &[
            "pipeline", "--config", "p.json", "--out", "p", "--seed", "1",
        ],
    );
    for stage in ["scene", "density", "detect", "eval"] {
        assert!(
            dir.join("p").join(stage).join("manifest.json").is_file(),
            "{stage}"
        );
    }
    assert_eq!(manifest(&dir.join("p/scene"))["seed"], 1);
    let det = fs::read_to_string(dir.join("p/eval/det.csv")).unwrap();
    let all = det.lines().last().unwrap();
    assert!(all.starts_with("all,15,15,"), "{all}");
}
