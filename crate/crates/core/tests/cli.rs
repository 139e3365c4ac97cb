//! The command-line tool, driven as a subprocess.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurododge")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &str = r#"
width = 32
height = 32
[scenes]
radius = [3.0, 4.0]
speed = [0.4, 0.6]
vertical_drift = 2.0
"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_train_evaluate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let data = dir.path().join("data");
    let common = ["--config", s(&config), "--train-size", "8", "--test-size", "4"];

    ok(&[&["gen", "--seed", "3", "--out", s(&data), "--window", "20"][..], &common].concat());
    let manifest = std::fs::read_to_string(data.join("test/manifest.csv")).unwrap();
    // header plus 4 scenes for each of 2 objects and 2 lighting conditions
    assert_eq!(manifest.lines().count(), 1 + 16);
    assert!(data.join("config.toml").exists());

    let kep = ok(&["kep", s(&data.join("test")), "--trials", "2"]);
    assert!(kep.starts_with("file,raw,main,key"));
    assert_eq!(kep.lines().filter(|l| l.ends_with(".evs") || l.contains(".evs,")).count(), 16);

    let ckpt = dir.path().join("w20.snn");
    ok(&[
        &[
            "train",
            "--seed",
            "3",
            "--window",
            "20",
            "--out",
            s(&ckpt),
            "--data",
            s(&data),
            "--epochs",
            "1",
            "--batch-size",
            "4",
        ][..],
        &common,
    ]
    .concat());
    assert!(ckpt.exists());
    assert!(dir.path().join("w20.history.json").exists());

    let report = dir.path().join("report.json");
    let table = ok(&[
        &[
            "eval",
            "--checkpoint",
            s(&ckpt),
            "--data",
            s(&data),
            "--mode",
            "async",
            "--mode",
            "ef-snn",
            "--out",
            s(&report),
        ][..],
        &common,
    ]
    .concat());
    assert!(table.contains('|'));
    let markdown = ok(&["report", s(&report)]);
    assert!(markdown.contains("disk") && markdown.contains("tall-blob"));
    let csv = ok(&["report", s(&report), "--format", "csv"]);
    // one row per (object, lighting, mode) cell
    assert_eq!(csv.lines().count(), 1 + 8);

    // rerunning the evaluation gives the same bytes
    let again = dir.path().join("again.json");
    ok(&[
        &[
            "eval",
            "--checkpoint",
            s(&ckpt),
            "--data",
            s(&data),
            "--mode",
            "async",
            "--mode",
            "ef-snn",
            "--out",
            s(&again),
        ][..],
        &common,
    ]
    .concat());
    assert_eq!(std::fs::read(&report).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn exit_codes_separate_usage_from_runtime_failures() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["train", "--window", "50"]).status.code(), Some(1));
    assert_eq!(run(&["gen", "--seed", "1", "--out", "x", "--lighting", "dusk"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.snn");
    let out = run(&["eval", "--checkpoint", s(&missing), "--seed", "1", "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let garbage = dir.path().join("garbage.evs");
    std::fs::write(&garbage, b"not an event file").unwrap();
    assert_eq!(run(&["kep", s(&garbage)]).status.code(), Some(2));
}
