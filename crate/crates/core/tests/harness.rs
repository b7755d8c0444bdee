mod common;

use std::fs;
use std::path::Path;

use common::desk_config;
use pes_lab::data::{encode_idx_images, encode_idx_labels, IdxImages};
use pes_lab::harness::{
    read_run_logs, report, run_experiment, run_log_name, run_profile, sweep, sweep_point, DatasetSpec, ExperimentConfig,
    Mode,
};
use pes_lab::model::Architecture;
use pes_lab::Error;
use serde_json::json;

fn tiny(mode: Mode, out: &Path) -> ExperimentConfig {
    let mut cfg = desk_config(0.4, mode, out);
    cfg.name = "tiny".into();
    cfg.dataset = DatasetSpec::Blobs { n: 400, n_test: 200, d: 8, k: 3, separation: 4.5 };
    cfg.architecture = Architecture::new(vec![16, 16], vec![1]);
    cfg.pes.stage_epochs = vec![8, 3];
    cfg.confident.epochs = 3;
    cfg.semi.total_epochs = 3;
    cfg.seeds = vec![1, 2];
    cfg
}

#[test]
fn config_json_round_trips() {
    let cfg = tiny(Mode::PesSemi, Path::new("out"));
    let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn noise_section_is_mandatory() {
    let mut doc = serde_json::to_value(tiny(Mode::Pes, Path::new("out"))).unwrap();
    doc.as_object_mut().unwrap().remove("noise");
    assert!(ExperimentConfig::from_json(&doc.to_string()).is_err());
}

#[test]
fn unknown_fields_are_rejected() {
    let mut doc = serde_json::to_value(tiny(Mode::Pes, Path::new("out"))).unwrap();
    doc["pes"]["stage_epoch"] = json!([3]);
    assert!(ExperimentConfig::from_json(&doc.to_string()).is_err());
}

#[test]
fn increasing_stage_budgets_fail_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut cfg = tiny(Mode::Pes, &out);
    cfg.pes.stage_epochs = vec![3, 8];
    let err = run_experiment(&cfg, false).unwrap_err();
    assert!(err.is_validation(), "{err}");
    assert!(!out.exists());
}

#[test]
fn nonempty_output_needs_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("keep.txt"), "x").unwrap();
    let cfg = tiny(Mode::Pes, dir.path());
    assert!(matches!(run_experiment(&cfg, false), Err(Error::Config(_))));
    assert_eq!(run_experiment(&cfg, true).unwrap().len(), 2);
    assert!(dir.path().join("keep.txt").exists());
}

#[test]
fn run_logs_are_reproducible_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Mode::PesConfident, dir.path());
    let first = run_experiment(&cfg, false).unwrap();
    let logs = read_run_logs(dir.path()).unwrap();
    assert_eq!(logs.len(), 2);
    assert_eq!(logs[0].config, cfg);
    assert!(dir.path().join(run_log_name(&cfg, 2)).is_file());
    let second = run_experiment(&cfg, true).unwrap();
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(a.test_accuracy, b.test_accuracy);
        assert_eq!(a.stage_reports, b.stage_reports);
    }
}

#[test]
fn failing_seed_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let img = |n| encode_idx_images(&IdxImages { count: n, rows: 4, cols: 4, pixels: vec![7; n * 16] });
    let files = dir.path().join("idx");
    fs::create_dir(&files).unwrap();
    fs::write(files.join("train-images"), img(20)).unwrap();
    fs::write(files.join("train-labels"), encode_idx_labels(&[0, 1].repeat(10))).unwrap();
    // Label count disagrees with the image count; only loading notices.
    fs::write(files.join("test-images"), img(6)).unwrap();
    fs::write(files.join("test-labels"), encode_idx_labels(&[0, 1, 0])).unwrap();
    let mut cfg = tiny(Mode::Pes, &dir.path().join("runs"));
    cfg.dataset = DatasetSpec::Idx {
        train_images: files.join("train-images"),
        train_labels: files.join("train-labels"),
        test_images: files.join("test-images"),
        test_labels: files.join("test-labels"),
        train_subset: None,
        test_subset: None,
    };
    let results = run_experiment(&cfg, false).unwrap();
    assert_eq!(results.len(), 2);
    assert!(results.iter().all(|r| r.error.as_deref().is_some_and(|e| e.contains("labels")) && r.test_accuracy.is_none()));
    let logs = read_run_logs(&cfg.output_dir).unwrap();
    assert!(logs.iter().all(|l| l.result.error.is_some()));
}

#[test]
fn idx_images_train_with_flip_crop() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, n: usize| {
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        // Class 0 is dark on the top half, class 1 on the bottom; flips keep rows.
        let pixels = labels
            .iter()
            .flat_map(|&l| (0..36).map(move |p| if ((p / 6) < 3) == (l == 0) { 30 } else { 220 }))
            .collect();
        fs::write(dir.path().join(format!("{name}-images")), encode_idx_images(&IdxImages { count: n, rows: 6, cols: 6, pixels })).unwrap();
        fs::write(dir.path().join(format!("{name}-labels")), encode_idx_labels(&labels)).unwrap();
    };
    write("train", 400);
    write("test", 60);
    let mut cfg = tiny(Mode::PesConfident, &dir.path().join("runs"));
    cfg.dataset = DatasetSpec::Idx {
        train_images: dir.path().join("train-images"),
        train_labels: dir.path().join("train-labels"),
        test_images: dir.path().join("test-images"),
        test_labels: dir.path().join("test-labels"),
        train_subset: Some(300),
        test_subset: None,
    };
    cfg.confident.augmentation = pes_lab::harness::AugmentSpec::FlipCrop { pad: 1 };
    cfg.noise = pes_lab::noise::NoiseSpec::new(pes_lab::noise::NoiseKind::SymmetricExcl, 0.2);
    cfg.pes.batch_size = 16;
    cfg.pes.stage_epochs = vec![15, 5];
    cfg.seeds = vec![1];
    let r = &run_experiment(&cfg, false).unwrap()[0];
    assert!(r.succeeded(), "{:?}", r.error);
    assert!(r.test_accuracy.unwrap() > 0.9, "{:?}", r.test_accuracy);
}

#[test]
fn unknown_sweep_parameter_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Mode::Pes, dir.path());
    for path in ["pes.stage_epoch.1", "pes.stage_epochs.5", "seeds.0.x"] {
        assert!(matches!(sweep(&cfg, path, &[json!(1)], false), Err(Error::Config(_))), "{path}");
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn single_value_sweep_matches_a_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Mode::Pes, &dir.path().join("sweep"));
    let rows = sweep(&cfg, "pes.stage_epochs.1", &[json!(2)], false).unwrap();
    let point = sweep_point(&cfg, "pes.stage_epochs.1", &json!(2)).unwrap();
    let mut direct = cfg.clone();
    direct.pes.stage_epochs[1] = 2;
    direct.output_dir = dir.path().join("direct");
    let results = run_experiment(&direct, false).unwrap();
    let accs: Vec<f64> = results.iter().map(|r| r.test_accuracy.unwrap()).collect();
    assert_eq!(rows[0].mean, Some(accs.iter().sum::<f64>() / accs.len() as f64));
    assert_eq!((rows[0].runs, rows[0].failed), (2, 0));
    assert!(rows[0].is_best);
    assert!(point.output_dir.join(run_log_name(&point, 1)).is_file());
    assert!(cfg.output_dir.join("sweep.csv").is_file());
}

#[test]
fn report_is_byte_identical_when_rerendered() {
    let dir = tempfile::tempdir().unwrap();
    for mode in [Mode::BaselineEs, Mode::Pes] {
        run_experiment(&tiny(mode, &dir.path().join(mode.as_str())), false).unwrap();
    }
    let out = report(dir.path()).unwrap();
    assert_eq!(out.conditions.len(), 2);
    let md = fs::read(dir.path().join("summary.md")).unwrap();
    let csv = fs::read(dir.path().join("summary.csv")).unwrap();
    report(dir.path()).unwrap();
    assert_eq!(fs::read(dir.path().join("summary.md")).unwrap(), md);
    assert_eq!(fs::read(dir.path().join("summary.csv")).unwrap(), csv);
    let text = String::from_utf8(md).unwrap();
    assert!(text.contains("baseline_es") && text.contains("±"));
}

#[test]
fn report_needs_results() {
    let dir = tempfile::tempdir().unwrap();
    assert!(report(dir.path()).is_err());
    assert!(report(&dir.path().join("missing")).is_err());
}

#[test]
fn profile_writes_curves_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Mode::Pes, dir.path());
    cfg.profile.epoch_grid = vec![0, 2, 4];
    cfg.profile.clean_retrain_epochs = 3;
    let curves = run_profile(&cfg, false).unwrap();
    assert_eq!(curves.len(), cfg.architecture.num_layers());
    for f in ["profile_raw.csv", "profile_curves.csv", "profile.svg", "profile.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let svg = fs::read_to_string(dir.path().join("profile.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}
