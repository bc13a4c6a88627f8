use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_regime-hmm"));
    c.env_remove("REGIME_HMM_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A synthetic series plus a small manifest next to it.
fn setup(dir: &Path, preset: &str, extra: &str) -> PathBuf {
    let data = dir.join("data");
    ok(&["synth", "--preset", preset, "--length", "1500", "--seed", "4", "--out", data.to_str().unwrap()]);
    let manifest = dir.join("run.json");
    fs::write(
        &manifest,
        format!(
            r#"{{
  "instruments": ["data/{preset}-4.csv"],
  "spans": [15],
  "num_states": 1,
  "val_start": "2003-06-02",
  "test_start": "2004-06-01",
  "restarts": 2,
  "out": "out"{extra}
}}"#
        ),
    )
    .unwrap();
    manifest
}

fn pipeline(manifest: &Path, out: &Path) {
    let m = manifest.to_str().unwrap();
    let o = out.to_str().unwrap();
    for cmd in ["ingest", "train", "predict", "backtest", "report"] {
        ok(&[cmd, "--manifest", m, "--out", o]);
    }
    ok(&["select", "--manifest", m, "--out", o, "--candidates", "1,2,3"]);
}

#[test]
fn single_state_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = setup(dir.path(), "single", "");
    let out = dir.path().join("out");
    pipeline(&manifest, &out);
    for f in [
        "ingest_summary.csv",
        "data/single-4.csv",
        "rolling/single-4.csv",
        "models/single-4_s15.json",
        "train_summary.csv",
        "criteria/single-4_s15.csv",
        "selection.csv",
        "predictions/single-4_s15.csv",
        "backtest/summary.csv",
        "backtest/single-4_long-only_s15.csv",
        "report.md",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }

    // two-dimensional features with three states carry 24 free parameters
    let criteria = fs::read_to_string(out.join("criteria/single-4_s15.csv")).unwrap();
    assert!(criteria.lines().any(|l| l.starts_with("3,24,")), "{criteria}");

    let report = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.to_lowercase().contains("accuracy"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = setup(dir.path(), "planted", "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    pipeline(&manifest, &a);
    pipeline(&manifest, &b);
    let mut compared = 0;
    for sub in ["models", "predictions", "backtest", "criteria"] {
        for entry in fs::read_dir(a.join(sub)).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                fs::read(a.join(sub).join(&name)).unwrap(),
                fs::read(b.join(sub).join(&name)).unwrap(),
                "{sub}/{name:?}"
            );
            compared += 1;
        }
    }
    assert!(compared >= 4);
    assert_eq!(fs::read(a.join("report.md")).unwrap(), fs::read(b.join("report.md")).unwrap());
}

#[test]
fn wide_neutral_band_never_trades() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = setup(dir.path(), "planted", r#", "neutral_band": 1e9"#);
    let m = manifest.to_str().unwrap();
    ok(&["train", "--manifest", m, "--states", "2"]);
    ok(&["backtest", "--manifest", m, "--states", "2"]);
    let summary = fs::read_to_string(dir.path().join("out/backtest/summary.csv")).unwrap();
    let mut strategy_rows = 0;
    for line in summary.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells[1] == "buy-and-hold" {
            continue;
        }
        strategy_rows += 1;
        for k in [3, 4, 6, 7] {
            assert_eq!(cells[k].parse::<f64>().unwrap(), 0.0, "{line}");
        }
    }
    assert_eq!(strategy_rows, 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let missing = dir.path().join("nope.csv");
    let missing = missing.to_str().unwrap();

    assert_eq!(run(&["train", "--instrument", missing, "--horizon", "-1", "--out", d]).status.code(), Some(2));
    assert_eq!(run(&["train", "--instrument", missing, "--span", "0", "--out", d]).status.code(), Some(2));
    assert_eq!(run(&["train", "--out", d]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"instruments": ["x.csv"], "unknown_field": true}"#).unwrap();
    assert_eq!(run(&["train", "--manifest", bad.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(run(&["ingest", "--instrument", missing, "--out", d]).status.code(), Some(1));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["synth", "--preset", "single", "--length", "50"])
        .env("REGIME_HMM_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("single-0.csv").is_file());
}
