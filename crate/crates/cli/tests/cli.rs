use repmut_cli::config::ScenarioConfig;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repmut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repmut"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn golden(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn header(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    format!("{}\n", text.lines().next().unwrap())
}

/// Linear scenario shrunk for test speed.
const SMALL: &str = r#"{
  "name": "small-linear",
  "model": { "kind": "bm", "drift": 0.0, "sigma": 1.4142135623730951 },
  "fitness": { "kind": "linear", "coef": 1.0, "sup": 2.0 },
  "initial": { "kind": "gaussian", "mean": 0.0, "var": 1.0 },
  "horizon": 1.0,
  "times": [0.5, 1.0],
  "engines": ["linear", "affine", "pde"],
  "grid": { "lower": -8.0, "upper": 12.0, "nodes": 401 },
  "pde": { "extent": 12.0, "cells": 1024, "dt": 0.002 },
  "particles": { "n": [100, 200, 400], "reps": 4, "q": 2.0, "n_mass": 5000, "steps_per_unit": 200 },
  "metric": { "cells": 256, "bootstrap": 200, "confidence": 0.95 },
  "l1_limit": 0.02,
  "output": "unused",
  "seed": 5
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn solve_writes_engine_csvs_and_l1_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("out");
    let o = repmut(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for engine in ["linear", "affine", "pde"] {
        let p = out.join(format!("densities_{engine}.csv"));
        assert_eq!(header(&p), golden("densities.header"));
        let rows = fs::read_to_string(&p).unwrap().lines().count();
        assert_eq!(rows, 1 + 2 * 401);
    }
    let l1 = fs::read_to_string(out.join("l1.csv")).unwrap();
    assert_eq!(header(&out.join("l1.csv")), golden("l1.header"));
    let entries: Vec<f64> = l1.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(entries.len(), 2 * 3);
    assert!(entries.iter().all(|d| *d <= 2e-2), "{entries:?}");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["finalized"], true);
    assert_eq!(manifest["stages"].as_array().unwrap().len(), 3);
}

#[test]
fn reruns_and_thread_counts_give_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace(r#"["linear", "affine", "pde"]"#, r#"["linear", "pde"]"#);
    let cfg = write_config(dir.path(), "c.json", &text);
    let run = |name: &str, threads: &str, cmd: &str| {
        let out = dir.path().join(name);
        let o = repmut(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        out
    };
    for (cmd, files) in [
        ("solve", vec!["densities_linear.csv", "densities_pde.csv", "l1.csv"]),
        ("particles", vec!["masses.csv", "particles.csv"]),
        ("chaos", vec!["rates.csv", "rates.svg", "chaos_summary.json"]),
    ] {
        let a = run(&format!("{cmd}-a"), "1", cmd);
        let b = run(&format!("{cmd}-b"), "1", cmd);
        let c = run(&format!("{cmd}-c"), "4", cmd);
        for f in files {
            let fa = fs::read(a.join(f)).unwrap();
            assert_eq!(fa, fs::read(b.join(f)).unwrap(), "{cmd}: {f} differs between reruns");
            assert_eq!(fa, fs::read(c.join(f)).unwrap(), "{cmd}: {f} depends on the thread count");
        }
    }
}

#[test]
fn particles_and_chaos_follow_csv_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("out");
    let o = repmut(&["particles", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(header(&out.join("masses.csv")), golden("masses.header"));
    let o = repmut(&["chaos", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(header(&out.join("rates.csv")), golden("rates.header"));
    assert_eq!(fs::read_to_string(out.join("rates.csv")).unwrap().lines().count(), 4);
    let svg = fs::read_to_string(out.join("rates.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("reference slope"));
    assert!(stdout(&o).contains("slope"));
}

#[test]
fn chaos_rejects_short_ladders_and_flags_single_replicates() {
    let dir = tempfile::tempdir().unwrap();
    let short = SMALL.replace("[100, 200, 400]", "[100, 200]");
    let cfg = write_config(dir.path(), "short.json", &short);
    let o = repmut(&["chaos", "--config", &cfg, "--out", dir.path().join("a").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at least 3"));

    let single = SMALL.replace(r#""reps": 4"#, r#""reps": 1"#);
    let cfg = write_config(dir.path(), "single.json", &single);
    let out = dir.path().join("b");
    let o = repmut(&["chaos", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(stdout(&o).contains("unreliable"), "{}", stdout(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("chaos_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["ci_status"], "unreliable");
}

#[test]
fn feller_violation_exits_nonzero_and_names_the_inequality() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("cir-linear")).unwrap().replace(r#""a": 1.0"#, r#""a": 0.2"#);
    let cfg = write_config(dir.path(), "cir.json", &text);
    let o = repmut(&["solve", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("2a >= sigma^2"), "{}", stderr(&o));
}

#[test]
fn engine_precondition_failures_do_not_stop_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace(r#"["linear", "affine", "pde"]"#, r#"["tilted", "linear"]"#);
    let cfg = write_config(dir.path(), "c.json", &text);
    let out = dir.path().join("o");
    let o = repmut(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("tilted: precondition failed"));
    assert!(out.join("densities_linear.csv").exists());
    assert!(!out.join("densities_tilted.csv").exists());
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(repmut(&["solve"]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(repmut(&["solve", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "bad.json", &SMALL.replace(r#""horizon": 1.0"#, r#""horizon": -1.0"#));
    assert_eq!(repmut(&["solve", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn manifest_hash_ignores_whitespace() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.json", SMALL);
    let squashed: String = SMALL.split_whitespace().collect();
    let b = write_config(dir.path(), "b.json", &squashed);
    let c = write_config(dir.path(), "c.json", &SMALL.replace(r#""seed": 5"#, r#""seed": 6"#));
    let hash = |cfg: &str, out: &str| {
        let out = dir.path().join(out);
        let o = repmut(&["manifest", "--config", cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["stage_seeds"].as_object().unwrap().len(), 3);
        assert!(m["tolerances"]["riccati_residual"].is_number());
        m["config_hash"].as_str().unwrap().to_string()
    };
    let (ha, hb, hc) = (hash(&a, "ma"), hash(&b, "mb"), hash(&c, "mc"));
    assert_eq!(ha, hb);
    assert_ne!(ha, hc);
    assert_eq!(ha.len(), 64);
}

#[test]
fn validate_matrix_lists_every_invariant() {
    let o = repmut(&["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    for id in golden("validate_ids.txt").lines() {
        let row = text.lines().find(|l| l.starts_with(&format!("{id} "))).unwrap_or_else(|| panic!("{id} missing"));
        assert!(row.contains("PASS"), "{row}");
    }
}

#[test]
fn validate_with_zero_tolerances_fails() {
    let o = repmut(&["validate", "--tolerance-scale", "0"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("FAIL"));
    assert!(stderr(&o).contains("invariants failed"));
}

#[test]
fn shipped_scenarios_load_and_round_trip() {
    for name in ["linear-bm", "ou-linear", "cir-linear", "harmonic"] {
        let cfg = ScenarioConfig::load(&scenario(name)).unwrap();
        assert_eq!(cfg.name, name);
        let again = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }
}
