use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DatasetSpec, ExperimentConfig, Mode};
use crate::confident::{class_weights, extract_confident, label_metrics, train_weighted};
use crate::data::{load_idx, make_two_moons, BlobModel, Dataset};
use crate::error::{bail, Error, Result};
use crate::model::PartitionedNetwork;
use crate::numerics::{derive_seed, SeededRng};
use crate::pes::{train_pes, StageReport};
use crate::profiler::{curves_svg, sensitivity_profile, write_curves_csv, write_records_csv, ProbeRecord, SensitivityCurve};
use crate::semi::{train_semi, SemiEpoch};

pub const RUN_LOG_FORMAT: &str = "pes-lab/run";

/// Metrics of one seed. Absent metrics are `None`: a failed run, or an
/// empty denominator for label precision/recall.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub test_accuracy: Option<f64>,
    pub noisy_val_accuracy: Option<f64>,
    pub label_precision: Option<f64>,
    pub label_recall: Option<f64>,
    pub confident_examples: Option<usize>,
    pub observed_noise_rate: Option<f64>,
    pub stage_reports: Vec<StageReport>,
    pub semi_history: Vec<SemiEpoch>,
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
}

impl RunResult {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// The document written for every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub mode: Mode,
    pub config: ExperimentConfig,
    pub result: RunResult,
}

/// Training, noisy validation and clean test data for one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Clean train and test sets for `seed`.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = SeededRng::new(derive_seed(seed, 1));
    match spec {
        DatasetSpec::Blobs { n, n_test, d, k, separation } => {
            let model = BlobModel::new(*d, *k, *separation)?;
            Ok((model.sample(*n, &mut rng)?, model.sample(*n_test, &mut rng)?))
        }
        DatasetSpec::TwoMoons { n, n_test, noise_std } => {
            Ok((make_two_moons(*n, *noise_std, &mut rng)?, make_two_moons(*n_test, *noise_std, &mut rng)?))
        }
        DatasetSpec::Idx { train_images, train_labels, test_images, test_labels, train_subset, test_subset } => {
            let train = load_idx(train_images, train_labels, *train_subset, &mut rng)?;
            let test = load_idx(test_images, test_labels, *test_subset, &mut rng)?;
            if train.num_classes != test.num_classes || train.dim() != test.dim() {
                bail!(Dimension, "IDX train and test sets disagree on shape or class count");
            }
            Ok((train, test))
        }
    }
}

/// Data for one seed: generated, corrupted, and split into train and noisy
/// validation. Identical for every mode, so runs pair up across modes.
pub fn prepare_data(config: &ExperimentConfig, seed: u64) -> Result<SeedData> {
    let (train, test) = generate_dataset(&config.dataset, seed)?;
    let noisy = config.noise.apply(&train, &mut SeededRng::new(derive_seed(seed, 2)))?;
    let train = train.with_noisy_labels(noisy)?;
    let (train, val) = train.split(config.validation_fraction, &mut SeededRng::new(derive_seed(seed, 3)))?;
    Ok(SeedData { train, val, test })
}

/// Initial network for `seed`; shared by every mode.
pub fn initial_network(config: &ExperimentConfig, data: &SeedData, seed: u64) -> Result<PartitionedNetwork> {
    config
        .architecture
        .build(data.train.dim(), data.train.num_classes, &mut SeededRng::new(derive_seed(seed, 4)))
}

/// Runs one seed end to end. Never writes files.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    let data = prepare_data(config, seed)?;
    let net = initial_network(config, &data, seed)?;
    let val = (!data.val.is_empty()).then_some(&data.val);
    let (mut net, reports) = match config.mode {
        Mode::BaselineEs => {
            train_pes(net.with_partition(&[])?, &data.train, val, &config.pes.baseline_schedule(seed)?)?
        }
        _ => train_pes(net, &data.train, val, &config.pes.schedule(seed)?)?,
    };
    let augmenter = config.confident.augmentation.build(&data.train)?;
    let mut rng = SeededRng::new(derive_seed(seed, 5));
    let split = extract_confident(&net, &data.train, &augmenter, &mut rng)?;
    let metrics = label_metrics(&split, &data.train.noisy_labels, &data.train.clean_labels);
    let mut semi_history = Vec::new();
    match config.mode {
        Mode::PesConfident => {
            let weights = class_weights(&split, config.confident.weighting)?;
            train_weighted(
                &mut net,
                &data.train,
                &split,
                &weights,
                config.confident.epochs,
                config.confident.optimizer,
                config.pes.batch_size,
                derive_seed(seed, 6),
            )?;
        }
        Mode::PesSemi => {
            semi_history = train_semi(&mut net, &split, &data.train, &config.semi, &augmenter, None, &mut rng)?;
        }
        Mode::BaselineEs | Mode::Pes => {}
    }
    let noisy_val_accuracy = match val {
        Some(v) => Some(net.accuracy(&v.features, &v.noisy_labels)?),
        None => None,
    };
    Ok(RunResult {
        seed,
        test_accuracy: Some(net.accuracy(&data.test.features, &data.test.clean_labels)?),
        noisy_val_accuracy,
        label_precision: metrics.precision,
        label_recall: metrics.recall,
        confident_examples: Some(split.labeled.len()),
        observed_noise_rate: Some(data.train.noise_rate()),
        stage_reports: reports,
        semi_history,
        error: None,
        wall_clock_seconds: 0.0,
    })
}

pub fn run_log_name(config: &ExperimentConfig, seed: u64) -> String {
    format!("run-{}-{}-seed{seed}.json", config.name, config.mode.as_str())
}

/// Creates `dir`, refusing to reuse a nonempty directory unless `overwrite`.
pub fn prepare_output_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            bail!(Config, "output path {} exists and is not a directory", dir.display());
        }
        if !overwrite && fs::read_dir(dir)?.next().is_some() {
            bail!(Config, "output directory {} is not empty; pass the overwrite flag to reuse it", dir.display());
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_run_log(config: &ExperimentConfig, result: &RunResult) -> Result<PathBuf> {
    let log = RunLog {
        format: RUN_LOG_FORMAT.into(),
        version: super::config::CONFIG_VERSION,
        name: config.name.clone(),
        mode: config.mode,
        config: config.clone(),
        result: result.clone(),
    };
    let path = config.output_dir.join(run_log_name(config, result.seed));
    fs::write(&path, serde_json::to_string_pretty(&log)? + "\n")?;
    Ok(path)
}

/// Validates `config`, then runs and logs every seed. A failing seed is
/// recorded with its error and the remaining seeds still run.
pub fn run_experiment(config: &ExperimentConfig, overwrite: bool) -> Result<Vec<RunResult>> {
    config.validate()?;
    prepare_output_dir(&config.output_dir, overwrite)?;
    run_validated(config)
}

pub(crate) fn run_validated(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    fs::create_dir_all(&config.output_dir)?;
    let mut results = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let start = Instant::now();
        let mut result = run_seed(config, seed).unwrap_or_else(|e| RunResult {
            seed,
            error: Some(e.to_string()),
            ..RunResult::default()
        });
        result.wall_clock_seconds = start.elapsed().as_secs_f64();
        write_run_log(config, &result)?;
        results.push(result);
    }
    Ok(results)
}

/// Reads every `run-*.json` below `dir`, sorted by path.
pub fn read_run_logs(dir: &Path) -> Result<Vec<RunLog>> {
    let mut paths = Vec::new();
    collect_logs(dir, &mut paths)?;
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let log: RunLog = serde_json::from_str(&fs::read_to_string(p)?)?;
            if log.format != RUN_LOG_FORMAT {
                return Err(Error::Config(format!("{} is not a run log", p.display())));
            }
            Ok(log)
        })
        .collect()
}

fn collect_logs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_logs(&path, out)?;
        } else if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("run-") && n.ends_with(".json")) {
            out.push(path);
        }
    }
    Ok(())
}

/// Profile output: raw records, per-layer curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileLog {
    pub format: String,
    pub config: ExperimentConfig,
    pub records: Vec<ProbeRecord>,
    pub curves: Vec<SensitivityCurve>,
}

/// Layer-sensitivity sweep on the data of the first seed, with one network
/// initialisation per seed. Writes `profile_raw.csv`, `profile_curves.csv`,
/// `profile.svg` and `profile.json`.
pub fn run_profile(config: &ExperimentConfig, overwrite: bool) -> Result<Vec<SensitivityCurve>> {
    config.validate()?;
    prepare_output_dir(&config.output_dir, overwrite)?;
    let data = prepare_data(config, config.seeds[0])?;
    let (records, curves) = sensitivity_profile(&config.architecture, &data.train, &data.test, &config.probe_config())?;
    let dir = &config.output_dir;
    write_records_csv(&records, fs::File::create(dir.join("profile_raw.csv"))?)?;
    write_curves_csv(&curves, fs::File::create(dir.join("profile_curves.csv"))?)?;
    fs::write(dir.join("profile.svg"), curves_svg(&curves))?;
    let log = ProfileLog { format: "pes-lab/profile".into(), config: config.clone(), records, curves: curves.clone() };
    fs::write(dir.join("profile.json"), serde_json::to_string_pretty(&log)? + "\n")?;
    Ok(curves)
}
