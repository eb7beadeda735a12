use std::path::Path;
use std::process::Command;

use aeidc::data::write_idx_tensor_f64;
use aeidc::Tensor;
use aeidc_cli::commands::{cmd_ablate, cmd_estimate_id, cmd_evaluate, cmd_gen_data, cmd_sweep, cmd_train, evaluate_model};
use aeidc_cli::ExperimentConfig;

fn config(dir: &Path, extra: &str) -> ExperimentConfig {
    let text = format!(
        r#"
[dataset]
kind = "image"
intrinsic_dim = 3
shape = [2, 8, 8]
classes = 2
per_class = 12
noise_std = 0.02
test_fraction = 0.25
seed = 4

[model]
kind = "conv"
widths = [4, 6]

[training]
layerwise_epochs = 2
global_epochs = 3
batch_size = 6

[evaluation]
k = [1, 3]
restarts = 2
geodesic = true
geodesic_k = 4

[output]
dir = "{}"
"#,
        dir.display()
    );
    // `extra` replaces keys of the [training] table.
    let mut table: toml::Table = text.parse().unwrap();
    let extra: toml::Table = extra.parse().unwrap();
    let training = table["training"].as_table_mut().unwrap();
    training.extend(extra);
    ExperimentConfig::from_toml(&table.to_string()).unwrap()
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, config(&dir.join("out"), extra).to_toml()).unwrap();
    p
}

fn aeidc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_aeidc")).args(args).output().unwrap()
}

#[test]
fn train_writes_curves_checkpoint_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let out = cmd_train(&cfg).unwrap();
    for name in ["loss_layerwise_unit1.csv", "loss_layerwise_unit4.csv", "loss_global.csv", "checkpoint_layerwise.aeidc", "checkpoint.aeidc", "manifest.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let curve = std::fs::read_to_string(dir.path().join("loss_global.csv")).unwrap();
    assert!(curve.starts_with("epoch,reconstruction,gid,lid,total\n"));
    assert_eq!(curve.lines().count(), 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["config"]["training"]["global_epochs"], 3);
    assert_eq!(out.log.stages.len(), 5);
}

#[test]
fn baseline_curves_have_zero_id_columns() {
    let dir = tempfile::tempdir().unwrap();
    cmd_train(&config(dir.path(), "stage_mode = \"baseline\"")).unwrap();
    let curve = std::fs::read_to_string(dir.path().join("loss_global.csv")).unwrap();
    for line in curve.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!((cols[2], cols[3]), ("0", "0"), "{line}");
    }
}

#[test]
fn evaluate_fresh_and_trained_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "global_epochs = 0\nlayerwise_epochs = 0");
    cmd_train(&cfg).unwrap();
    let ev = cmd_evaluate(&cfg, None).unwrap();
    assert_eq!(ev.report.knn_accuracy.len(), 2);
    assert!(ev.report.ari.is_some());
    for f in ["metrics.json", "embeddings_test.idx", "labels_train.idx", "geodesic.csv", "class_distances.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn estimate_id_trivial_cases() {
    let dir = tempfile::tempdir().unwrap();
    let same = Tensor::from_fn(&[5, 1, 3, 3], |i| (i % 9) as f64);
    let p = dir.path().join("same.idx");
    write_idx_tensor_f64(&p, &same).unwrap();
    let s = cmd_estimate_id(Some(&p), None).unwrap();
    assert_eq!(s.gid, 0.0);
    // One channel: every LID is 1.
    assert!((s.lid_min - 1.0).abs() < 1e-12 && (s.lid_max - 1.0).abs() < 1e-12);

    let text = r#"
[dataset]
kind = "linear"
intrinsic_dim = 3
shape = [1, 6, 6]
classes = 1
per_class = 400
seed = 2
[model]
kind = "conv"
widths = [2]
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let s = cmd_estimate_id(None, Some(&cfg)).unwrap();
    assert!((s.gid - 3.0).abs() < 0.5, "{}", s.gid);
}

#[test]
fn gen_data_round_trips_through_idx() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let files = cmd_gen_data(&cfg).unwrap();
    assert_eq!(files.len(), 4);
    let text = r#"
[dataset]
kind = "idx"
images = "train_images.idx"
labels = "train_labels.idx"
test_images = "test_images.idx"
test_labels = "test_labels.idx"
[model]
kind = "conv"
widths = [4, 6]
"#;
    let p = dir.path().join("idx.toml");
    std::fs::write(&p, text).unwrap();
    let idx_cfg = ExperimentConfig::from_file(&p).unwrap();
    let data = idx_cfg.dataset.load().unwrap();
    assert_eq!(data.len(), 24);
    assert_eq!(data.test.len(), 6);
}

#[test]
fn ablate_rows_and_baseline_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let rows = cmd_ablate(&cfg, true).unwrap();
    assert_eq!(rows.len(), 8);
    let gl = &rows[4];
    assert_eq!((gl.name.as_str(), gl.recon_weight), ("gid+lid", 0.0));
    let table = std::fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    assert_eq!(table.lines().count(), 9);

    // Recon-only row equals a separate baseline train + evaluate.
    let base_dir = tempfile::tempdir().unwrap();
    let base = config(base_dir.path(), "stage_mode = \"baseline\"");
    let out = cmd_train(&base).unwrap();
    let ev = evaluate_model(&out.model, &out.data, &base.evaluation, base.training.seed).unwrap();
    assert_eq!(rows[0].report, ev.report);
}

#[test]
fn sweep_grid_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "global_epochs = 1\nlayerwise_epochs = 1");
    let rows = cmd_sweep(&cfg, &[0.0, 0.1], &[0.0]).unwrap();
    assert_eq!(rows.len(), 2);
    let grid = std::fs::read_to_string(dir.path().join("sweep_grid_k1.csv")).unwrap();
    assert_eq!(grid.lines().count(), 3);
    assert!(cmd_sweep(&cfg, &[], &[0.0]).is_err());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "");
    let ok = aeidc(&["train", "--config", good.to_str().unwrap()]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[dataset]\nkind = \"nope\"\n").unwrap();
    assert_eq!(aeidc(&["train", "--config", bad.to_str().unwrap()]).status.code(), Some(1));

    let invalid = write_config(dir.path(), "batch_size = 1\nlambda_gid = -2.0");
    let out = aeidc(&["train", "--config", invalid.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("batch_size") && err.contains("lambda_gid"), "{err}");

    let missing = dir.path().join("missing.idx");
    assert_eq!(aeidc(&["estimate-id", "--input", missing.to_str().unwrap()]).status.code(), Some(2));

    let blowup = write_config(dir.path(), "learning_rate = 1e200\noptimizer = { kind = \"sgd\" }");
    assert_eq!(aeidc(&["train", "--config", blowup.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("seeded");
    let o = aeidc(&["train", "--config", cfg.to_str().unwrap(), "--seed", "77", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 77);
}
