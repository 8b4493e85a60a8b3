use std::path::Path;
use std::process::Command;

fn vortex() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vortex"));
    c.env("RUST_LOG", "warn");
    c
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn check_model_rejects_cp1_outside_its_range() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("cp1_single.cfg")).unwrap().replace("s = 0.0", "s = 1.5");
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, text).unwrap();
    let out = vortex().args(["check-model", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("(f1) violated"), "{stderr}");
    // The partial report is still written.
    let report = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(report.contains("(f1) violated"));
}

#[test]
fn check_model_accepts_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let status =
        vortex().args(["check-model", "--config"]).arg(configs().join("u1_single.cfg")).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.cfg");
    std::fs::write(&cfg, "[grid]\nn = 32\nlenght = 1.0\n").unwrap();
    let out = vortex().args(["sigma", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lenght"));
    let missing = vortex().args(["sigma", "--config", "/nonexistent.cfg"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn sigma_writes_fields_and_verify_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("u1_single.cfg");
    let status = vortex().args(["sigma", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(status.code(), Some(0));
    for f in ["sigma.vfd", "w.vfd", "q.vfd", "report.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    // Any field verifies to the same numbers twice.
    let field = dir.path().join("w.vfd");
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        vortex().args(["verify"]).arg(&field).arg("--config").arg(&cfg).arg("--out").arg(&out).status().unwrap();
        let text = std::fs::read_to_string(out.join("verify.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["results"]["summary"].clone()
    };
    let a = run("a");
    assert!(a["grad_norm"].as_f64().is_some());
    assert_eq!(a, run("b"));
}

#[test]
fn verify_rejects_grid_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("small.vfd");
    let grid = vortex_core::Grid::new(16, 1.0).unwrap();
    vortex_core::Field::zeros(&grid).save_vfd(&field).unwrap();
    let status = vortex()
        .args(["verify"])
        .arg(&field)
        .arg("--config")
        .arg(configs().join("u1_single.cfg"))
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
