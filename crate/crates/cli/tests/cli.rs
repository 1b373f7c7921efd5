use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json")
}

fn recapture(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recapture"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn config_problems_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"scene": "x.json", "surprise": true}"#).unwrap();
    let out = recapture(&["--config", s(&bad), "--out", s(dir.path()), "mission", "run"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("surprise"));

    let missing = dir.path().join("nope.json");
    assert_eq!(code(&recapture(&["--config", s(&missing), "mission", "run"])), 2);

    let cfg = smoke_config();
    let out = recapture(&["--config", s(&cfg), "--out", s(dir.path()), "mission", "stage", "fly"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("capture-1"));

    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(&recapture(&["dataset", "ingest", s(empty.path())])), 2);
}

#[test]
fn missing_prerequisite_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    let out = recapture(&["--config", s(&cfg), "--out", s(dir.path()), "mission", "stage", "plan"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing artifact"));
}

#[test]
fn run_then_check_reports_threshold_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    let out = recapture(&["--config", s(&cfg), "--out", s(dir.path()), "--threads", "2", "mission", "run"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("report.json").is_file());

    // The smoke mission is far too small to meet the acceptance thresholds.
    let out = recapture(&["--config", s(&cfg), "--out", s(dir.path()), "mission", "report", "--check"]);
    assert_eq!(code(&out), 4);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL evaluator_accuracy") || stdout.contains("FAIL psnr_q0.10_delta_db"), "{stdout}");

    let out = recapture(&["--config", s(&cfg), "--out", s(dir.path()), "mission", "report"]);
    assert_eq!(code(&out), 0);

    let target = tempfile::tempdir().unwrap();
    let capture = dir.path().join("capture_1");
    let out = recapture(&["--out", s(target.path()), "dataset", "ingest", s(&capture)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.path().join("capture_1/transforms.json").is_file());
}

#[test]
fn seed_override_changes_noisy_captures() {
    let cfg = smoke_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, seed) in [(&a, "1"), (&b, "2")] {
        let out = recapture(&["--config", s(&cfg), "--out", s(dir.path()), "--seed", seed, "mission", "stage", "capture-1"]);
        assert_eq!(code(&out), 0);
    }
    let frames = |d: &Path| -> Vec<Vec<u8>> {
        let mut names: Vec<_> = fs::read_dir(d.join("capture_1/images"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        names.sort();
        names.iter().map(|p| fs::read(p).unwrap()).collect()
    };
    assert_ne!(frames(a.path()), frames(b.path()));
}

#[test]
fn scene_render_writes_a_png() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("view.png");
    let cfg = smoke_config();
    let out = recapture(&[
        "--config",
        s(&cfg),
        "scene",
        "render",
        "--position",
        "2.0",
        "-1.5",
        "1.2",
        "--output",
        s(&png),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(&fs::read(&png).unwrap()[1..4], b"PNG");
}
