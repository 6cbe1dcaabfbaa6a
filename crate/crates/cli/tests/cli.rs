use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3
[synth]
procedures = 10
train_frames = 300
[segment.training]
epochs = 1
"#;

fn microseg(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_microseg"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap()
}

fn config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.toml");
    fs::write(&p, SMALL).unwrap();
    p
}

#[test]
fn run_prints_the_skill_report_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = microseg(&["run"], &cfg, &a);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let stdout = String::from_utf8_lossy(&first.stdout);
    assert!(stdout.contains("evaluation report"), "{stdout}");
    assert!(microseg(&["run"], &cfg, &b).status.success());
    for f in ["reports/evaluation.json", "reports/skill_report.json", "reports/assessment.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn single_stage_reports_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out = microseg(&["track"], &cfg, &dir.path().join("empty"));
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage `track` failed"), "{err}");
    assert!(err.contains("synth"), "{err}");
}

#[test]
fn stages_compose_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out = dir.path().join("o");
    for stage in ["synth", "segment", "track", "features", "assess", "evaluate"] {
        let r = microseg(&[stage], &cfg, &out);
        assert!(r.status.success(), "{stage}: {}", String::from_utf8_lossy(&r.stderr));
    }
    assert!(out.join("reports/evaluation.json").exists());
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "fps = -1.0\n").unwrap();
    let r = microseg(&["synth"], &p, &dir.path().join("o"));
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("fps"));
}
