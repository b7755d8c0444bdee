//! Command-line front end shared by the `pes-lab` binary.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::data::Dataset;
use crate::error::{bail, Error, Result};
use crate::harness::{
    generate_dataset, prepare_output_dir, report, run_experiment, run_profile, sweep, DatasetSpec, ExperimentConfig,
    Mode,
};
use crate::model::Architecture;
use crate::noise::{NoiseKind, NoiseSpec};
use crate::numerics::{derive_seed, SeededRng};

#[derive(Debug, Parser)]
#[command(name = "pes-lab", version, about = "Progressive early stopping for learning with noisy labels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a clean dataset and write train.csv and test.csv.
    GenData(GenDataArgs),
    /// Corrupt the labels of a dataset CSV.
    AddNoise(AddNoiseArgs),
    /// Run an experiment and write one run log per seed.
    Train(ExperimentArgs),
    /// Measure per-layer noise sensitivity.
    ProfileLayers(ExperimentArgs),
    /// Run an experiment once per value of a config parameter.
    Sweep(SweepArgs),
    /// Summarise a results directory.
    Report(ReportArgs),
}

/// Dataset selection shared by `gen-data` and the experiment commands.
#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// blobs or two_moons.
    #[arg(long, default_value = "blobs")]
    pub dataset: String,
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 4.5)]
    pub separation: f64,
    /// Point spread for two_moons.
    #[arg(long, default_value_t = 0.1)]
    pub noise_std: f64,
}

impl DatasetArgs {
    fn spec(&self) -> Result<DatasetSpec> {
        match self.dataset.as_str() {
            "blobs" => Ok(DatasetSpec::Blobs {
                n: self.n,
                n_test: self.n_test,
                d: self.d,
                k: self.k,
                separation: self.separation,
            }),
            "two_moons" | "two-moons" => {
                Ok(DatasetSpec::TwoMoons { n: self.n, n_test: self.n_test, noise_std: self.noise_std })
            }
            other => bail!(Config, "unknown dataset {other:?}; use blobs or two_moons, or --config for IDX files"),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Take the dataset section of an experiment config instead of flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct AddNoiseArgs {
    /// Dataset CSV with clean labels.
    #[arg(long)]
    pub input: PathBuf,
    /// Take the noise section of an experiment config instead of flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// symmetric_incl, symmetric_excl, pairflip or instance.
    #[arg(long)]
    pub noise_kind: Option<String>,
    /// Flip rate, or the mean flip rate τ for instance noise.
    #[arg(long)]
    pub noise_rate: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// JSON experiment config; it takes precedence over every flag except
    /// --seed and --out.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long)]
    pub noise_kind: Option<String>,
    #[arg(long)]
    pub noise_rate: Option<f64>,
    /// baseline_es, pes, pes_confident or pes_semi.
    #[arg(long, default_value = "pes")]
    pub mode: String,
    /// Comma-separated hidden widths.
    #[arg(long, value_delimiter = ',', default_values_t = [64, 64, 64, 64])]
    pub hidden: Vec<usize>,
    /// Comma-separated 0-based first layers of parts 2..L.
    #[arg(long, value_delimiter = ',', default_values_t = [2, 4])]
    pub boundaries: Vec<usize>,
    /// Comma-separated per-stage epoch budgets.
    #[arg(long, value_delimiter = ',', default_values_t = [30, 7, 5])]
    pub stage_epochs: Vec<usize>,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// Semi-supervised epochs in pes_semi mode.
    #[arg(long, default_value_t = 20)]
    pub semi_epochs: usize,
    /// Comma-separated noisy-training epoch grid for profile-layers.
    #[arg(long, value_delimiter = ',', default_values_t = [0, 5, 10, 20, 40, 80])]
    pub epoch_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5])]
    pub seeds: Vec<u64>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "experiment")]
    pub name: String,
    /// Output directory; required unless the config names one.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub overwrite: bool,
}

impl ExperimentArgs {
    /// The experiment described by `--config` or by the flags, with
    /// `--seed` and `--out` applied last.
    pub fn to_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let mut cfg = ExperimentConfig::new(
                    noise_from_flags(self.noise_kind.as_deref(), self.noise_rate)?,
                    self.out.clone().unwrap_or_default(),
                );
                cfg.name = self.name.clone();
                cfg.dataset = self.data.spec()?;
                cfg.mode = parse_enum::<Mode>(&self.mode, "mode")?;
                cfg.architecture = Architecture::new(self.hidden.clone(), self.boundaries.clone());
                cfg.pes.stage_epochs = self.stage_epochs.clone();
                cfg.pes.batch_size = self.batch_size;
                cfg.semi.total_epochs = self.semi_epochs;
                cfg.profile.epoch_grid = self.epoch_grid.clone();
                cfg.seeds = self.seeds.clone();
                cfg
            }
        };
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if cfg.output_dir.as_os_str().is_empty() {
            bail!(Config, "no output directory: pass --out or set output_dir in the config");
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Dotted config path, e.g. pes.stage_epochs.1.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values, each parsed as JSON (bare words as strings).
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results directory.
    pub dir: PathBuf,
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| Error::Config(format!("unknown {what} {s:?}")))
}

fn noise_from_flags(kind: Option<&str>, rate: Option<f64>) -> Result<NoiseSpec> {
    match (kind, rate) {
        (Some(k), Some(r)) => Ok(NoiseSpec::new(parse_enum::<NoiseKind>(k, "noise kind")?, r)),
        (None, Some(0.0)) => Ok(NoiseSpec::none()),
        _ => bail!(Config, "--noise-kind and --noise-rate are required (there is no default noise family)"),
    }
}

fn ensure_writable(path: &Path, overwrite: bool) -> Result<()> {
    if path.exists() && !overwrite {
        bail!(Config, "{} exists; pass --overwrite to replace it", path.display());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn gen_data(args: &GenDataArgs) -> Result<()> {
    let spec = match &args.config {
        Some(p) => ExperimentConfig::load(p)?.dataset,
        None => args.data.spec()?,
    };
    spec.validate()?;
    prepare_output_dir(&args.out, args.overwrite)?;
    let (train, test) = generate_dataset(&spec, args.seed)?;
    train.save_csv(args.out.join("train.csv"))?;
    test.save_csv(args.out.join("test.csv"))?;
    println!("wrote {} training and {} test examples to {}", train.len(), test.len(), args.out.display());
    Ok(())
}

fn add_noise(args: &AddNoiseArgs) -> Result<()> {
    let noise = match &args.config {
        Some(p) => ExperimentConfig::load(p)?.noise,
        None => noise_from_flags(args.noise_kind.as_deref(), args.noise_rate)?,
    };
    if !args.input.is_file() {
        bail!(Config, "input file {} does not exist", args.input.display());
    }
    let data = Dataset::load_csv(&args.input, None)?;
    noise.validate(data.num_classes)?;
    ensure_writable(&args.out, args.overwrite)?;
    let noisy = noise.apply(&data, &mut SeededRng::new(derive_seed(args.seed, 2)))?;
    let data = data.with_noisy_labels(noisy)?;
    data.save_csv(&args.out)?;
    println!("flipped {:.4} of {} labels into {}", data.noise_rate(), data.len(), args.out.display());
    Ok(())
}

fn train(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.to_config()?;
    let results = run_experiment(&cfg, args.overwrite)?;
    for r in &results {
        match (&r.error, r.test_accuracy) {
            (None, Some(acc)) => println!("seed {}: test accuracy {acc:.4}", r.seed),
            (err, _) => println!("seed {}: failed: {}", r.seed, err.as_deref().unwrap_or("unknown error")),
        }
    }
    if results.iter().all(|r| !r.succeeded()) {
        bail!(Training, "every seed failed");
    }
    Ok(())
}

fn profile(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.to_config()?;
    for c in run_profile(&cfg, args.overwrite)? {
        let means: Vec<String> = c.means.iter().map(|m| format!("{m:.4}")).collect();
        println!("layer {}: peak at epoch {} [{}]", c.layer, c.peak_epoch, means.join(", "));
    }
    Ok(())
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = args.experiment.to_config()?;
    let values: Vec<Value> = args
        .values
        .iter()
        .map(|v| serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.clone())))
        .collect();
    for row in sweep(&cfg, &args.param, &values, args.experiment.overwrite)? {
        let mean = row.mean.map_or("n/a".to_string(), |m| format!("{m:.4}"));
        println!("{}={}: mean {mean}{}", args.param, row.value, if row.is_best { " (best)" } else { "" });
    }
    Ok(())
}

fn run_report(args: &ReportArgs) -> Result<()> {
    let out = report(&args.dir)?;
    if !out.conditions.is_empty() {
        print!("{}", crate::harness::render_markdown(&out.conditions));
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::AddNoise(a) => add_noise(a),
        Command::Train(a) => train(a),
        Command::ProfileLayers(a) => profile(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Report(a) => run_report(a),
    }
}

/// Parses `args` and runs the command. Exit code 0 on success, 1 on
/// invalid input (including bad flags), 2 on runtime failure.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
