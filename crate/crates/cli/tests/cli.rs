use std::path::Path;
use std::process::{Command, Output};

fn fluc_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluc-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fluc_sim(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_then_audit() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let stdout = ok(&[
        "run",
        "--desk",
        "--ttis",
        "300",
        "--algorithm",
        "fli",
        "--seed",
        "3",
        "--out",
        s(&run),
    ]);
    assert!(stdout.contains("fli seed 3"));
    for f in [
        "config.json",
        "metrics.csv",
        "federation.csv",
        "summary.json",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    assert!(ok(&["audit", "--run", s(&run)]).starts_with("audit ok"));
}

#[test]
fn saved_models_feed_a_later_run() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("m");
    ok(&[
        "run",
        "--desk",
        "--ttis",
        "200",
        "--out",
        s(&dir.path().join("a")),
        "--save-model",
        s(&prefix),
    ]);
    assert!(dir.path().join("m-gbr.mlp").exists());
    let b = dir.path().join("b");
    ok(&[
        "run",
        "--desk",
        "--ttis",
        "100",
        "--out",
        s(&b),
        "--load-model",
        s(&prefix),
        "--save-fed-rounds",
    ]);
    assert!(b.join("fed_rounds").is_dir());
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let stdout = ok(&[
        "sweep",
        "--desk",
        "--ttis",
        "150",
        "--ues",
        "6,8",
        "--seeds",
        "1..2",
        "--algorithms",
        "fl,rssi",
        "--out",
        s(&out),
    ]);
    assert_eq!(stdout.lines().count(), 4);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn compress_reports_its_progress() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let stdout = ok(&["compress", "--desk", "--ttis", "900", "--out", s(&out)]);
    assert!(stdout.contains("finished: false"));
    assert!(out.join("compression.csv").exists());
    assert!(out.join("effectiveness.json").exists());
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!fluc_sim(&["run", "--algorithm", "nope", "--out", "x"])
        .status
        .success());
    let missing = fluc_sim(&["audit", "--run", s(&dir.path().join("absent"))]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
    let seeds = fluc_sim(&["sweep", "--desk", "--seeds", "4..1", "--out", s(dir.path())]);
    assert!(!seeds.status.success());
}
