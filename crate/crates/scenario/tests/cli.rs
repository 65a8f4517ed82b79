use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_agestruct"))
}

fn config_path(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "configs", name]
        .iter()
        .collect()
}

#[test]
fn roots_prints_csv() {
    let out = bin()
        .arg("roots")
        .arg(config_path("fig2a.cfg"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("re,im,residual\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn passing_run_exits_zero_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("run")
        .arg(config_path("fig3.cfg"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["report.txt", "galerkin.csv", "oracle.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn failed_verification_exits_two() {
    // the periodic reference is outside the valid class, so no certificate exists
    let out = bin()
        .arg("verify")
        .arg(config_path("fig2b.cfg"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn input_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = bin()
        .arg("run")
        .arg(dir.path().join("missing.cfg"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(3));

    let bad = dir.path().join("bad.cfg");
    let text = std::fs::read_to_string(config_path("fig3.cfg"))
        .unwrap()
        .replace("gamma", "gama");
    std::fs::write(&bad, text).unwrap();
    let out = bin().arg("run").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("controller"));
}
