use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use dclab::fields::io::{load_field, save_field, StoredField};
use dclab::fields::{FieldRef, Grid};
use dclab::geometry::DomainSpec;
use dclab::operators::{zero_mean_sample, BogovskiiKernel};
use dclab_cli::output::sha256_hex;
use dclab_cli::RunManifest;
use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    stderr: String,
    manifest: RunManifest,
    dir: PathBuf,
}

fn write_config(tmp: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = tmp.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn dclab(args: &[&str], env_out: Option<&Path>) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dclab"));
    cmd.args(args).env_remove("DCLAB_OUT");
    if let Some(dir) = env_out {
        cmd.env("DCLAB_OUT", dir);
    }
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn run(tmp: &TempDir, command: &str, config: &str, out: &str, extra: &[&str]) -> Run {
    let cfg = write_config(tmp, &format!("{out}.json"), config);
    let dir = tmp.path().join(out);
    let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let (code, stderr) = dclab(&args, None);
    let manifest = RunManifest::read(&dir).unwrap();
    Run { code, stderr, manifest, dir }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn listed(m: &RunManifest) -> Vec<&str> {
    m.artifacts.iter().map(|a| a.path.as_str()).collect()
}

/// Every file of the directory but the manifest is listed, with the hash of its bytes.
fn assert_complete_listing(r: &Run) {
    let mut on_disk: Vec<String> = fs::read_dir(&r.dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut names: Vec<String> = listed(&r.manifest).into_iter().map(String::from).collect();
    names.sort();
    assert_eq!(on_disk, names);
    for a in &r.manifest.artifacts {
        let bytes = fs::read(r.dir.join(&a.path)).unwrap();
        assert_eq!(a.sha256, sha256_hex(&bytes), "{}", a.path);
        assert_eq!(a.bytes, bytes.len() as u64);
    }
}

const CONTINUATION: &str = r#"{
    "grid": {"cells": 8},
    "p": 3, "alpha": 1,
    "eps_schedule": [0.04, 0.02, 0.01],
    "forcing": {"kind": "potential", "scale": 0.5, "seed": 3},
    "weak_tests": 4
}"#;

#[test]
fn zero_forcing_gives_the_zero_solution() {
    let tmp = TempDir::new().unwrap();
    let r = run(&tmp, "solve", r#"{"grid": {"cells": 6}, "p": 3, "alpha": 1, "eps": 0.01}"#, "zero", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.manifest.status, "ok");
    assert_eq!(r.manifest.command, "solve");
    assert!(r.manifest.config_sha256.as_ref().is_some_and(|h| h.len() == 64));
    for name in ["report.json", "residuals.csv", "ledger.csv", "weak_form.csv", "velocity.dclab", "pressure.dclab"] {
        assert!(listed(&r.manifest).contains(&name), "{name} missing");
    }
    assert_complete_listing(&r);
    let report = json(&r.dir.join("report.json"));
    assert_eq!(report["velocity"]["l2"], 0.0);
    assert_eq!(report["summary"]["converged"], true);
    let (grid, stored) = load_field(&r.dir.join("velocity.dclab")).unwrap();
    assert_eq!(grid.cells, [6; 3]);
    let StoredField::Staggered(v) = stored else { panic!("velocity should be a vector field") };
    assert_eq!(v.max_abs(), 0.0);
}

#[test]
fn alpha_sweep_writes_one_report_per_point_and_one_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{
        "grid": {"cells": 8}, "p": 3, "alpha": 1, "eps": 0.01,
        "convective_form": "divergence",
        "forcing": {"kind": "potential", "scale": 0.5},
        "parameter": "alpha", "values": [0.5, 1.0, 1.5], "weak_tests": 3
    }"#;
    let r = run(&tmp, "sweep", cfg, "sweep", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let names = listed(&r.manifest);
    assert_eq!(names.iter().filter(|n| n.starts_with("point_") && n.ends_with(".json")).count(), 3);
    assert_eq!(names.iter().filter(|n| n.ends_with(".csv")).count(), 1);
    assert_complete_listing(&r);
    let table = fs::read_to_string(r.dir.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    for (i, alpha) in [0.5, 1.0, 1.5].iter().enumerate() {
        let point = json(&r.dir.join(format!("point_{i:03}.json")));
        assert_eq!(point["summary"]["params"]["alpha"], *alpha);
        assert_eq!(point["summary"]["converged"], true);
    }
}

#[test]
fn same_config_and_seed_give_identical_tables() {
    let tmp = TempDir::new().unwrap();
    let a = run(&tmp, "solve", CONTINUATION, "a", &["--seed", "7"]);
    let b = run(&tmp, "solve", CONTINUATION, "b", &["--seed", "7"]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(b.code, 0, "{}", b.stderr);
    assert_eq!(a.manifest.seed, Some(7));
    let csvs: Vec<&str> = listed(&a.manifest).into_iter().filter(|n| n.ends_with(".csv")).collect();
    assert!(csvs.len() >= 4, "{csvs:?}");
    for name in &csvs {
        assert_eq!(fs::read(a.dir.join(name)).unwrap(), fs::read(b.dir.join(name)).unwrap(), "{name}");
    }
    assert_eq!(a.manifest.config_sha256, b.manifest.config_sha256);
    // A different seed draws a different forcing.
    let c = run(&tmp, "solve", CONTINUATION, "c", &["--seed", "8"]);
    assert_eq!(c.code, 0, "{}", c.stderr);
    assert_ne!(fs::read(a.dir.join("ledger.csv")).unwrap(), fs::read(c.dir.join("ledger.csv")).unwrap());
}

#[test]
fn unknown_key_is_a_config_error_with_a_manifest() {
    let tmp = TempDir::new().unwrap();
    let r = run(&tmp, "solve", r#"{"grid": {"cells": 6}, "p": 3, "alpha": 1, "tolerance": 1e-6}"#, "bad", &[]);
    assert_eq!(r.code, 2);
    assert_eq!(r.manifest.status, "config_error");
    assert!(r.manifest.error.as_ref().unwrap().contains("tolerance"));
    assert!(r.manifest.artifacts.is_empty());
    assert!(r.manifest.config_sha256.is_some());

    let r = run(&tmp, "solve", r#"{"grid": {"cells": 6}, "p": 3, "alpha": 1, "eps": 0.1, "eps_schedule": [0.1]}"#, "both", &[]);
    assert_eq!(r.code, 2);
    assert!(r.manifest.error.as_ref().unwrap().contains("eps_schedule"));

    let r = run(&tmp, "muckenhoupt", r#"{"p": 1, "alphas": [1], "levels": [2]}"#, "p1", &[]);
    assert_eq!(r.code, 2);
    assert!(r.manifest.error.as_ref().unwrap().contains("p must exceed 1"));
}

#[test]
fn missing_config_file_still_writes_a_manifest() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("none");
    let (code, _) = dclab(&["truncate", "--config", "/nonexistent/cfg.json", "--out", dir.to_str().unwrap()], None);
    assert_eq!(code, 2);
    let m = RunManifest::read(&dir).unwrap();
    assert_eq!(m.status, "config_error");
    assert!(m.config_sha256.is_none());
}

#[test]
fn environment_variable_overrides_the_output_directory() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "ap.json", r#"{"p": 3, "alphas": [0, 1], "levels": [1, 2]}"#);
    let flag = tmp.path().join("flag");
    let env = tmp.path().join("env");
    let (code, stderr) =
        dclab(&["muckenhoupt", "--config", cfg.to_str().unwrap(), "--out", flag.to_str().unwrap()], Some(&env));
    assert_eq!(code, 0, "{stderr}");
    assert!(!flag.exists());
    let m = RunManifest::read(&env).unwrap();
    assert!(listed(&m).contains(&"ap.csv"));
}

#[test]
fn non_converged_solve_exits_with_a_numerical_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{"grid": {"cells": 6}, "p": 3, "alpha": 1, "eps": 0.01,
                  "forcing": {"kind": "potential", "scale": 0.5}, "max_iter": 1}"#;
    let r = run(&tmp, "solve", cfg, "stuck", &[]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert_eq!(r.manifest.status, "numerical_failure");
    assert!(r.manifest.error.as_ref().unwrap().contains("did not converge"));
    // Diagnostics are kept.
    assert!(listed(&r.manifest).contains(&"residuals.csv"));
    assert_complete_listing(&r);
}

#[test]
fn inequality_writes_one_row_per_sample() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{"grid": {"cells": 8}, "cases": [
        {"name": "korn", "params": {"p": 2}, "ensemble": {"samples": 5, "seed": 1}},
        {"name": "grad_curl_weighted", "params": {"p": 3, "alpha": 1}, "ensemble": {"samples": 4, "seed": 9}}
    ]}"#;
    let r = run(&tmp, "inequality", cfg, "ineq", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_complete_listing(&r);
    let korn = fs::read_to_string(r.dir.join("samples_00_korn.csv")).unwrap();
    assert_eq!(korn.lines().next().unwrap(), "seed,lhs,rhs,ratio");
    assert_eq!(korn.lines().count(), 6);
    assert_eq!(fs::read_to_string(r.dir.join("samples_01_grad_curl_weighted.csv")).unwrap().lines().count(), 5);
    assert_eq!(fs::read_to_string(r.dir.join("summary.csv")).unwrap().lines().count(), 3);
    let report = json(&r.dir.join("inequality.json"));
    assert_eq!(report.as_array().unwrap().len(), 2);
}

#[test]
fn bogovskii_reads_data_from_a_field_file() {
    let tmp = TempDir::new().unwrap();
    let grid = Grid::new(DomainSpec::ball(1.0, 3).unwrap(), [12; 3]).unwrap();
    let f = zero_mean_sample(&BogovskiiKernel::for_ball([0.0; 3], 1.0), &grid, 4).unwrap();
    let input = tmp.path().join("f.dclab");
    save_field(&input, &grid, FieldRef::Scalar(&f)).unwrap();
    let cfg = format!(
        r#"{{"grid": {{"domain": {{"kind": "ball", "extents": [1], "dim": 3}}, "cells": 12}}, "input": {:?}}}"#,
        input.to_str().unwrap()
    );
    let r = run(&tmp, "bogovskii", &cfg, "bog", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_complete_listing(&r);
    let report = json(&r.dir.join("bogovskii.json"));
    assert_eq!(report["samples"], 1);
    assert!(report["divergence_residual_max"].as_f64().unwrap() < 0.05);
    let table = fs::read_to_string(r.dir.join("bogovskii.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "sample,seed,residual,ratio_p1.5,ratio_p2,ratio_p3");
    assert!(matches!(load_field(&r.dir.join("u.dclab")).unwrap().1, StoredField::Staggered(_)));

    // A grid mismatch is a configuration error.
    let cfg = cfg.replace("\"cells\": 12", "\"cells\": 10");
    let r = run(&tmp, "bogovskii", &cfg, "mismatch", &[]);
    assert_eq!(r.code, 2);
}

#[test]
fn truncate_emits_the_bound_and_decay_tables() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{"grid": {"cells": 16}, "ball": {"center": [0.5, 0.5, 0.5], "radius": 0.2},
                  "sequence": {"count": 2}, "j_max": 3}"#;
    let r = run(&tmp, "truncate", cfg, "trunc", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_complete_listing(&r);
    // Two members times levels 0..=3.
    for name in ["bounds.csv", "decay.csv"] {
        assert_eq!(fs::read_to_string(r.dir.join(name)).unwrap().lines().count(), 1 + 2 * 4, "{name}");
    }
    let summary = json(&r.dir.join("summary.json"));
    assert!(summary["divergence_max"].as_f64().unwrap() < 1e-10);
    assert_eq!(summary["members"], 2);
}
