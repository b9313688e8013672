use std::path::Path;

use smsnet_eval::Metric;
use smsnet_sim::{build_dataset, Dataset, DatasetParams, Split};
use smsnet_train::data::Codec;
use smsnet_train::{evaluate, evaluate_checkpoint, train, TrainConfig, TrainError};
use smsnet_unet::checkpoint;

fn tiny_params() -> DatasetParams {
    DatasetParams {
        hearts: 3,
        height: 16,
        width: 16,
        slices_per_heart: 4,
        directions: 6,
        splits: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        ..DatasetParams::default()
    }
}

fn tiny_config(model: &str) -> TrainConfig {
    TrainConfig {
        model: model.into(),
        base_channels: Some(4),
        depth: Some(3),
        epochs: 3,
        lr: 1e-3,
        lr_drop_epoch: 2,
        batch_size: 4,
        ..TrainConfig::default()
    }
}

fn dataset(dir: &Path, p: &DatasetParams) -> Dataset {
    build_dataset(dir, p).unwrap();
    Dataset::open(dir).unwrap()
}

#[test]
fn run_directory_log_and_best_epoch() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(&tmp.path().join("data"), &tiny_params());
    let run = tmp.path().join("run");
    let rec = train(&ds, &tiny_config("2D-All-Mag"), &run).unwrap();

    for f in ["config.toml", "log.csv", "checkpoints/best/manifest.json", "checkpoints/last/manifest.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let saved = TrainConfig::load(&run.join("config.toml")).unwrap();
    assert_eq!(saved, tiny_config("2D-All-Mag"));

    let log = std::fs::read_to_string(run.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 3);
    assert!(log.starts_with("epoch,lr,train_loss,val_mae,seconds"));

    // lr drops by the factor in the epoch after the drop epoch
    let lrs: Vec<f64> = rec.epochs.iter().map(|e| e.lr).collect();
    assert_eq!(lrs, vec![1e-3, 1e-3, 1e-4]);

    let best = rec
        .epochs
        .iter()
        .min_by(|a, b| a.val_mae.total_cmp(&b.val_mae))
        .unwrap();
    assert_eq!(rec.best_epoch, best.epoch);
    let manifest = checkpoint::read_manifest(&run.join("checkpoints/best")).unwrap();
    assert_eq!(manifest.epoch, rec.best_epoch);
    assert!(rec.epochs.iter().all(|e| e.val_mae >= rec.best_val_mae));
}

#[test]
fn same_seed_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(&tmp.path().join("data"), &tiny_params());
    let cfg = TrainConfig {
        epochs: 2,
        dropout: Some(0.2),
        ..tiny_config("2D-Single-Comp")
    };
    let a = train(&ds, &cfg, &tmp.path().join("a")).unwrap();
    let b = train(&ds, &cfg, &tmp.path().join("b")).unwrap();
    for (x, y) in a.epochs.iter().zip(&b.epochs) {
        assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
        assert_eq!(x.val_mae.to_bits(), y.val_mae.to_bits());
    }
    let c = train(&ds, &TrainConfig { seed: 1, ..cfg }, &tmp.path().join("c")).unwrap();
    assert_ne!(a.epochs[0].train_loss, c.epochs[0].train_loss);
}

#[test]
fn checkpoint_round_trip_reproduces_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(&tmp.path().join("data"), &tiny_params());
    let cfg = TrainConfig {
        epochs: 1,
        ..tiny_config("3D-All-MagPhs")
    };
    let run = tmp.path().join("run");
    train(&ds, &cfg, &run).unwrap();
    let (net, _) = checkpoint::load(&run.join("checkpoints/best")).unwrap();
    let codec = Codec::new(net.config(), false);
    let direct = evaluate(&net, &codec, &ds, Split::Test, 4).unwrap();
    let reloaded = evaluate_checkpoint(&run.join("checkpoints/best"), &ds, Split::Test, false).unwrap();
    assert_eq!(direct.model.slices.len(), 2 * tiny_params().slices_per_heart / 2);
    for (x, y) in direct.model.slices.iter().zip(&reloaded.model.slices) {
        assert_eq!(x.slice, y.slice);
        for m in Metric::ALL {
            assert_eq!(x.get(m).to_bits(), y.get(m).to_bits(), "{m:?}");
        }
    }
}

#[test]
fn identity_baseline_has_positive_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(&tmp.path().join("data"), &tiny_params());
    let run = tmp.path().join("run");
    let rec = train(&ds, &TrainConfig { epochs: 1, ..tiny_config("2D-All-Mag") }, &run).unwrap();
    let eval = evaluate_checkpoint(&rec.checkpoint, &ds, Split::Test, false).unwrap();
    for s in &eval.baseline.slices {
        assert!(s.get(Metric::Mae) > 0.0);
        assert!(s.get(Metric::Ssim) < 1.0);
    }
    let table = smsnet_eval::MetricReport {
        runs: vec![eval.model],
        baseline: Some(eval.baseline),
        extra_columns: vec![],
    }
    .to_markdown();
    let header = table.lines().next().unwrap();
    assert_eq!(header.matches('|').count(), 1 + 1 + 7);
}

#[test]
fn without_leakage_or_noise_training_stays_at_identity() {
    // corrupted == clean, so every loss gradient is exactly zero
    let tmp = tempfile::tempdir().unwrap();
    let p = DatasetParams {
        alpha_min: 0.0,
        alpha_max: 0.0,
        sigma: 0.0,
        ..tiny_params()
    };
    let ds = dataset(&tmp.path().join("data"), &p);
    for model in ["2D-All-Mag", "2D-All-Comp", "3D-Single-MagPhs"] {
        let run = tmp.path().join(model);
        let rec = train(&ds, &TrainConfig { epochs: 2, ..tiny_config(model) }, &run).unwrap();
        let eval = evaluate_checkpoint(&rec.checkpoint, &ds, Split::Test, false).unwrap();
        for (m, b) in eval.model.slices.iter().zip(&eval.baseline.slices) {
            assert!(m.get(Metric::Mae) <= b.get(Metric::Mae) + 1e-6, "{model}");
        }
    }
}

#[test]
fn mismatched_sms_factor_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let p = DatasetParams {
        sms_factor: 4,
        slices_per_heart: 4,
        ..tiny_params()
    };
    let ds = dataset(&tmp.path().join("data"), &p);
    let e = train(&ds, &tiny_config("2D-All-Mag"), &tmp.path().join("run")).unwrap_err();
    assert!(matches!(e, TrainError::Config(_)));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn divergence_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(&tmp.path().join("data"), &tiny_params());
    let cfg = TrainConfig {
        lr: 1e300,
        epochs: 3,
        ..tiny_config("2D-All-Mag")
    };
    let e = train(&ds, &cfg, &tmp.path().join("run")).unwrap_err();
    assert_eq!(e.exit_code(), 3, "{e}");
}
