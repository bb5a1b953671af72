use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn smoke(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_rescap")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_variant(dir: &Path, name: &str, from: &str, edit: impl Fn(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(smoke(from)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let (code, err) = run(&["simulate", "--config", smoke("smoke_simulate.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    for f in ["config.json", "seeds.json", "series.csv", "summary.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let (code, _) = run(&["simulate", "--config", dir.path().join("missing.json").to_str().unwrap(), "--out", out]);
    assert_eq!(code, 2);

    let unknown = write_variant(dir.path(), "unknown.json", "smoke_simulate.json", |v| {
        v["bogus"] = 1.into();
    });
    let (code, err) = run(&["simulate", "--config", unknown.to_str().unwrap(), "--out", out]);
    assert_eq!(code, 2);
    assert!(err.contains("bogus"), "{err}");

    let bad_samples = write_variant(dir.path(), "samples.json", "smoke_simulate.json", |v| {
        v["samples"]["train"] = 0.into();
    });
    let (code, err) = run(&["simulate", "--config", bad_samples.to_str().unwrap(), "--out", out]);
    assert_eq!(code, 2, "{err}");

    let (code, _) = run(&["simulate", "--config", smoke("smoke_simulate.json").to_str().unwrap(), "--out", out, "--workers", "0"]);
    assert_eq!(code, 2);
}

#[test]
fn constant_teaching_signal_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_variant(dir.path(), "zero.json", "smoke_simulate.json", |v| {
        v["task"]["l"] = serde_json::json!([0.0, 0.0]);
    });
    let (code, err) = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(err.contains("zero variance"), "{err}");
}

#[test]
fn seed_flag_overrides_and_is_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let (code, err) = run(&[
        "capacity",
        "--config",
        smoke("smoke_capacity.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert_eq!(code, 0, "{err}");
    let seeds: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("seeds.json")).unwrap()).unwrap();
    assert_eq!(seeds["master"], 99);
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["seed"], 99);
}
