use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn gaitscope(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaitscope"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn tiny() -> Value {
    json!({
        "dims": {"d_obs": 12, "mlp_widths": [8], "n_cells": 4, "d_act": 4},
        "train": {"epochs": 1, "rollout_len": 32, "batch": 2, "eval_rollouts": 1, "eval_len": 32},
        "rollout": {"speeds": [1.0, 2.0], "steps": 300, "warmup": 100},
        "neural": {"experiment": {"steps": 450}, "response_steps": 4},
        "grid": {"magnitudes_bw": [-1.0, 0.0, 1.5], "durations_ms": [100.0], "n_agents": 3}
    })
}

/// Trains a one-epoch model and returns a config pointing at its weights.
fn trained(dir: &Path) -> Value {
    let cfg = write_config(dir, "train.json", &tiny());
    let out = gaitscope(
        &["train", "--config", cfg.to_str().unwrap(), "--out", "model"],
        dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut cfg = tiny();
    cfg["paths"] = json!({"weights": "model/weights.json"});
    cfg
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_string)
        .collect()
}

#[test]
fn default_grid_has_34_rows() {
    let dir = TempDir::new().unwrap();
    let mut cfg = trained(dir.path());
    cfg.as_object_mut().unwrap().remove("grid");
    let path = write_config(dir.path(), "grid.json", &cfg);
    let out = gaitscope(
        &[
            "robustness-grid",
            "--config",
            path.to_str().unwrap(),
            "--out",
            "g",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = data_rows(&dir.path().join("g/grid.csv"));
    assert_eq!(rows.len(), 34);
    let zero: Vec<&String> = rows.iter().filter(|r| r.starts_with("0,")).collect();
    assert_eq!(zero.len(), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", &trained(dir.path()));
    let cfg = cfg.to_str().unwrap();
    for cmd in [
        "rollout",
        "pca",
        "perturb-neural",
        "perturb-physical",
        "robustness-grid",
    ] {
        for (out, threads) in [("a", "1"), ("b", "3")] {
            let o = gaitscope(
                &[
                    cmd,
                    "--config",
                    cfg,
                    "--out",
                    &format!("{cmd}_{out}"),
                    "--threads",
                    threads,
                ],
                dir.path(),
            );
            assert!(
                o.status.success(),
                "{cmd}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
        let a = dir.path().join(format!("{cmd}_a"));
        let b = dir.path().join(format!("{cmd}_b"));
        let mut names: Vec<_> = std::fs::read_dir(&a)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            assert_eq!(
                std::fs::read(a.join(&name)).unwrap(),
                std::fs::read(b.join(&name)).unwrap(),
                "{cmd}/{name:?}"
            );
        }
    }
}

#[test]
fn outputs_carry_metadata() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", &trained(dir.path()));
    let cfg = cfg.to_str().unwrap();
    let o = gaitscope(
        &[
            "perturb-neural",
            "--config",
            cfg,
            "--out",
            "n",
            "--seed",
            "7",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("n/trace_pair.csv")).unwrap();
    let first = csv.lines().next().unwrap();
    assert!(first.starts_with("# gaitscope version="), "{first}");
    assert!(first.ends_with("seed=7"));
    let header = csv.lines().nth(1).unwrap();
    assert_eq!(
        header,
        "t,pc1_nominal,pc2_nominal,pc3_nominal,pc4_nominal,pc1_perturbed,pc2_perturbed,pc3_perturbed,pc4_perturbed,applied_force"
    );
    let metrics: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("n/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["meta"]["seed"], 7);
    assert_eq!(metrics["meta"]["tool"], "gaitscope");
    let hash = metrics["meta"]["config_hash"].as_str().unwrap();
    assert!(first.contains(hash));
    let sidecar: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("model/weights.json.meta.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(sidecar["file"], "weights.json");
}

#[test]
fn unknown_keys_are_rejected_before_any_output() {
    let dir = TempDir::new().unwrap();
    let mut cfg = tiny();
    cfg["train"]["learning_rate"] = json!(0.1);
    let path = write_config(dir.path(), "bad.json", &cfg);
    let o = gaitscope(
        &[
            "train",
            "--config",
            path.to_str().unwrap(),
            "--out",
            "never",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
    assert!(!dir.path().join("never").exists());
}

#[test]
fn invalid_values_are_rejected_before_any_output() {
    let dir = TempDir::new().unwrap();
    let mut cfg = trained(dir.path());
    cfg["grid"]["n_agents"] = json!(0);
    let path = write_config(dir.path(), "bad.json", &cfg);
    let o = gaitscope(
        &[
            "robustness-grid",
            "--config",
            path.to_str().unwrap(),
            "--out",
            "never",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("never").exists());
}

#[test]
fn missing_inputs_have_their_own_diagnostic() {
    let dir = TempDir::new().unwrap();
    let mut cfg = tiny();
    cfg["paths"] = json!({"weights": "nowhere/weights.json"});
    let path = write_config(dir.path(), "missing.json", &cfg);
    let o = gaitscope(
        &[
            "rollout",
            "--config",
            path.to_str().unwrap(),
            "--out",
            "never",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing weights"));
    assert!(!dir.path().join("never").exists());

    let o = gaitscope(&["train", "--config", "no_such_config.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));

    let mut cfg = tiny();
    cfg.as_object_mut().unwrap().remove("paths");
    let path = write_config(dir.path(), "noweights.json", &cfg);
    let o = gaitscope(
        &[
            "rollout",
            "--config",
            path.to_str().unwrap(),
            "--out",
            "never",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("paths.weights"));
}

#[test]
fn dimension_mismatch_has_its_own_diagnostic() {
    let dir = TempDir::new().unwrap();
    let mut cfg = trained(dir.path());
    let basis = json!({
        "mean": [0.0, 0.0],
        "components": [[1.0, 0.0], [0.0, 1.0]],
        "variances": [1.0, 0.5],
        "sign_convention": "largest-magnitude entry of each component is positive",
        "source_hash": ""
    });
    std::fs::write(dir.path().join("narrow.json"), basis.to_string()).unwrap();
    cfg["paths"]["basis"] = json!("narrow.json");
    let path = write_config(dir.path(), "mismatch.json", &cfg);
    let o = gaitscope(
        &[
            "perturb-neural",
            "--config",
            path.to_str().unwrap(),
            "--out",
            "never",
        ],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("dimension mismatch"));
    assert!(!dir.path().join("never").exists());
}

#[test]
fn pca_of_constant_states_warns_and_succeeds() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("rollout_id,speed,t,s_0,s_1,s_2,s_3\n");
    for t in 0..50 {
        csv += &format!("0,1.0,{t},0.25,-0.5,0.125,1\n");
    }
    std::fs::write(dir.path().join("flat.csv"), csv).unwrap();
    let mut cfg = tiny();
    cfg["paths"] = json!({"dataset": "flat.csv"});
    let path = write_config(dir.path(), "flat.json", &cfg);
    let o = gaitscope(
        &["pca", "--config", path.to_str().unwrap(), "--out", "p"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rank deficient"));
    for row in data_rows(&dir.path().join("p/variance.csv")) {
        let variance: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(variance.abs() < 1e-18, "{row}");
    }
}

#[test]
fn seed_override_changes_the_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", &trained(dir.path()));
    let cfg = cfg.to_str().unwrap();
    for (out, seed) in [("s1", "1"), ("s2", "2")] {
        let o = gaitscope(
            &[
                "perturb-physical",
                "--config",
                cfg,
                "--out",
                out,
                "--seed",
                seed,
            ],
            dir.path(),
        );
        assert!(o.status.success());
    }
    let a = std::fs::read_to_string(dir.path().join("s1/trace.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("s2/trace.csv")).unwrap();
    assert_ne!(a.lines().nth(2), b.lines().nth(2));
}

#[test]
fn fixed_points_emit_report_and_figure_tables() {
    let dir = TempDir::new().unwrap();
    let mut cfg = trained(dir.path());
    cfg["fixed_points"] =
        json!({"n_inits": 16, "field": {"extent": 0.2, "resolution": 5}, "decay_steps": 30});
    let path = write_config(dir.path(), "fp.json", &cfg);
    let o = gaitscope(
        &[
            "fixed-points",
            "--config",
            path.to_str().unwrap(),
            "--out",
            "f",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("f/fixed_points.json")).unwrap(),
    )
    .unwrap();
    let fps = report["fixed_points"].as_array().unwrap();
    assert!(!fps.is_empty());
    for fp in fps {
        assert!(fp["speed"].as_f64().unwrap() < 1e-10);
        assert_eq!(fp["eigenvalues"].as_array().unwrap().len(), 8);
    }
    assert_eq!(data_rows(&dir.path().join("f/field_fp0.csv")).len(), 25);
    assert_eq!(data_rows(&dir.path().join("f/decay.csv")).len(), 31);
    assert_eq!(
        data_rows(&dir.path().join("f/eigenvalues.csv")).len(),
        8 * fps.len()
    );
}

#[test]
fn truncation_comparison_writes_one_row_per_window() {
    let dir = TempDir::new().unwrap();
    let mut cfg = tiny();
    cfg["compare"] = json!({"k_values": [8, 2]});
    let path = write_config(dir.path(), "cmp.json", &cfg);
    let o = gaitscope(
        &[
            "bptt-compare",
            "--config",
            path.to_str().unwrap(),
            "--out",
            "c",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&dir.path().join("c/comparison.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("8,") && rows[1].starts_with("2,"));
    for k in [8, 2] {
        assert!(dir.path().join(format!("c/weights_k{k}.json")).is_file());
        assert_eq!(
            data_rows(&dir.path().join(format!("c/grid_k{k}.csv"))).len(),
            3
        );
    }
}
