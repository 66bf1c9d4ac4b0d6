//! Drives the real binary over the bundled fixture and pins the report
//! bytes against `tests/expected/`.

use std::path::{Path, PathBuf};
use std::process::Command;

fn fixture_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/config.json")
}

fn expected_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/expected")
}

fn run(subcommand: &str, out_dir: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_refsent"))
        .args([
            subcommand,
            "--config",
            fixture_config().to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .status()
        .expect("binary runs");
    assert!(status.success(), "refsent {subcommand} failed");
}

fn run_pipeline(out_dir: &Path) {
    for cmd in ["prepare", "predict", "study1", "study2", "study3", "report"] {
        run(cmd, out_dir);
    }
}

const REPORT_FILES: [&str; 8] = [
    "report.md",
    "study1.md",
    "study1.csv",
    "study2.md",
    "study2.csv",
    "study3.md",
    "study3_matrix.csv",
    "study3_routing.csv",
];

fn assert_reports_match_expected(out_dir: &Path) {
    for name in REPORT_FILES {
        let produced = std::fs::read(out_dir.join("reports").join(name))
            .unwrap_or_else(|e| panic!("missing report {name}: {e}"));
        let expected = std::fs::read(expected_dir().join(name))
            .unwrap_or_else(|e| panic!("missing expected file {name}: {e}"));
        assert_eq!(
            produced, expected,
            "report bytes for {name} drifted from tests/expected/{name}"
        );
    }
}

#[test]
fn pipeline_reproduces_expected_reports_and_is_rerun_stable() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(dir.path());
    assert_reports_match_expected(dir.path());

    // Second pass in the same directory: warm caches, identical bytes.
    run_pipeline(dir.path());
    assert_reports_match_expected(dir.path());

    // Manifest survives the rerun with the same identity.
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(value["dataset"], "Restaurant");
    assert_eq!(value["sample_size"], 50);
}

#[test]
fn study_commands_fail_cleanly_without_prepare() {
    let dir = tempfile::tempdir().unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_refsent"))
        .args([
            "study1",
            "--config",
            fixture_config().to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .expect("binary runs");
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("curated corpus not found"), "stderr: {stderr}");
}

#[test]
fn study2_fails_naming_variant_when_predictions_missing() {
    let dir = tempfile::tempdir().unwrap();
    run("prepare", dir.path());
    let output = Command::new(env!("CARGO_BIN_EXE_refsent"))
        .args([
            "study2",
            "--config",
            fixture_config().to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .expect("binary runs");
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("JSON-UBO"),
        "error should name the variant; stderr: {stderr}"
    );
}

#[test]
fn variant_override_restricts_study1_rows() {
    let dir = tempfile::tempdir().unwrap();
    run("prepare", dir.path());
    let status = Command::new(env!("CARGO_BIN_EXE_refsent"))
        .args([
            "study1",
            "--config",
            fixture_config().to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--variant",
            "none",
        ])
        .status()
        .expect("binary runs");
    assert!(status.success());
    let md = std::fs::read_to_string(dir.path().join("reports/study1.md")).unwrap();
    let variant_table: Vec<&str> = md
        .lines()
        .skip_while(|l| !l.starts_with("| Variant"))
        .skip(2)
        .take_while(|l| l.starts_with("| "))
        .collect();
    assert_eq!(variant_table.len(), 1, "table: {variant_table:?}");
    assert!(variant_table[0].starts_with("| None |"));
    // the None row carries no McNemar result
    assert!(variant_table[0].trim_end().ends_with("| - |"));
    assert!(!md.contains("| JSON-UBO | 50 |"));
}
