use std::fs;
use std::path::Path;

use dclab_cli::config::Command;
use dclab_cli::{emit_plots, invoke, Artifact, ArtifactKind, RunManifest};
use tempfile::TempDir;

fn run_in(tmp: &TempDir, command: Command, config: &str, out: &str) -> RunManifest {
    let cfg = tmp.path().join(format!("{out}.json"));
    fs::write(&cfg, config).unwrap();
    let m = invoke(command, &cfg, tmp.path().join(out), None);
    assert_eq!(m.status, "ok", "{:?}", m.error);
    m
}

fn script(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn continuation_script_has_one_curve_per_stage() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{"grid": {"cells": 6}, "p": 3, "alpha": 1, "eps_schedule": [0.04, 0.02, 0.01],
                  "forcing": {"kind": "potential", "scale": 0.5}, "weak_tests": 2}"#;
    let m = run_in(&tmp, Command::Solve, cfg, "cont");
    let dir = tmp.path().join("cont");
    assert!(m.artifacts.iter().any(|a| a.path == "continuation_residuals.gp" && a.kind == ArtifactKind::Plot));
    let s = script(&dir, "continuation_residuals.gp");
    assert_eq!(s.matches("title 'eps = ").count(), 3);
    for eps in ["0.04", "0.02", "0.01"] {
        assert!(s.contains(&format!("title 'eps = {eps}'")), "{s}");
    }
    assert!(s.contains("set datafile separator ','"));
    assert!(s.contains("'continuation_residuals.csv'"));
}

#[test]
fn muckenhoupt_script_has_one_curve_per_alpha() {
    let tmp = TempDir::new().unwrap();
    let m = run_in(&tmp, Command::Muckenhoupt, r#"{"p": 3, "alphas": [0, 1, 2.5], "levels": [1, 2, 3]}"#, "ap");
    let dir = tmp.path().join("ap");
    assert!(m.artifacts.iter().any(|a| a.path == "ap.gp"));
    let s = script(&dir, "ap.gp");
    assert_eq!(s.matches("title 'alpha = ").count(), 3);
    assert!(s.contains("set xlabel 'level'"));
    // Every script refers to a table of the same run by relative path.
    let scripts = emit_plots(&m, &dir).unwrap();
    assert_eq!(scripts.len(), 1);
    assert_eq!(scripts[0].content, s);
}

#[test]
fn plots_can_be_disabled() {
    let tmp = TempDir::new().unwrap();
    let m = run_in(
        &tmp,
        Command::Muckenhoupt,
        r#"{"p": 3, "alphas": [1], "levels": [1, 2], "output": {"plots": false}}"#,
        "quiet",
    );
    assert!(m.artifacts.iter().all(|a| a.kind != ArtifactKind::Plot));
}

#[test]
fn empty_manifest_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let m = RunManifest::new("solve", Path::new("cfg.json"));
    assert!(emit_plots(&m, tmp.path()).is_err());
    let only_json = RunManifest {
        artifacts: vec![Artifact { path: "report.json".into(), kind: ArtifactKind::Json, sha256: String::new(), bytes: 0 }],
        ..m
    };
    assert!(emit_plots(&only_json, tmp.path()).is_err());
}

#[test]
fn missing_csv_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let m = run_in(&tmp, Command::Muckenhoupt, r#"{"p": 3, "alphas": [1], "levels": [1, 2]}"#, "gone");
    let dir = tmp.path().join("gone");
    assert!(emit_plots(&m, &dir).is_ok());
    fs::remove_file(dir.join("ap.csv")).unwrap();
    let err = emit_plots(&m, &dir).unwrap_err();
    assert!(err.to_string().contains("ap.csv"), "{err}");
}
