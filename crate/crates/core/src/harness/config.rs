use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::confident::{Augmenter, ClassWeighting};
use crate::data::Dataset;
use crate::error::{bail, Result};
use crate::model::{Architecture, OptimizerConfig};
use crate::noise::NoiseSpec;
use crate::pes::{default_later_optimizer, default_stage1_optimizer, PesSchedule};
use crate::profiler::ProbeConfig;
use crate::semi::SemiConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Where the examples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Blobs {
        n: usize,
        #[serde(default = "default_n_test")]
        n_test: usize,
        d: usize,
        k: usize,
        separation: f64,
    },
    TwoMoons {
        n: usize,
        #[serde(default = "default_n_test")]
        n_test: usize,
        noise_std: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        train_subset: Option<usize>,
        #[serde(default)]
        test_subset: Option<usize>,
    },
}

fn default_n_test() -> usize {
    1000
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Blobs { n: 3000, n_test: 1000, d: 16, k: 3, separation: 4.5 }
    }
}

impl DatasetSpec {
    /// `(input_dim, classes)` without generating or fully loading anything.
    pub fn shape(&self) -> Result<(usize, usize)> {
        match self {
            DatasetSpec::Blobs { d, k, .. } => Ok((*d, *k)),
            DatasetSpec::TwoMoons { .. } => Ok((2, 2)),
            DatasetSpec::Idx { train_images, train_labels, .. } => {
                let header = read_prefix(train_images, 16)?;
                let dim = be_u32(&header, 8) as usize * be_u32(&header, 12) as usize;
                let mut labels = Vec::new();
                File::open(train_labels)?.read_to_end(&mut labels)?;
                let classes = labels.iter().skip(8).copied().max().map_or(2, |m| (m as usize + 1).max(2));
                Ok((dim, classes))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetSpec::Blobs { n, n_test, d, k, separation } => {
                if *k < 2 || *d == 0 {
                    bail!(Config, "blobs need k >= 2 and d >= 1, got k={k}, d={d}");
                }
                if *n < *k || *n_test < 1 {
                    bail!(Config, "blobs need n >= k and n_test >= 1, got n={n}, n_test={n_test}");
                }
                if !(separation.is_finite() && *separation >= 0.0) {
                    bail!(Config, "separation must be finite and nonnegative, got {separation}");
                }
            }
            DatasetSpec::TwoMoons { n, n_test, noise_std } => {
                if n % 2 != 0 || *n == 0 || n_test % 2 != 0 || *n_test == 0 {
                    bail!(Config, "two moons need positive even n and n_test, got {n}, {n_test}");
                }
                if !(noise_std.is_finite() && *noise_std >= 0.0) {
                    bail!(Config, "noise_std must be finite and nonnegative, got {noise_std}");
                }
            }
            DatasetSpec::Idx { train_images, train_labels, test_images, test_labels, .. } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    if !p.is_file() {
                        bail!(Config, "IDX file {} does not exist", p.display());
                    }
                }
                let header = read_prefix(train_images, 16)?;
                if be_u32(&header, 0) != 0x0803 {
                    return Err(crate::Error::Format { offset: 0, message: "bad image magic".into() });
                }
            }
        }
        Ok(())
    }
}

fn read_prefix(path: &Path, len: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    let mut f = File::open(path)?;
    if f.read_exact(&mut buf).is_err() {
        return Err(crate::Error::Format { offset: 0, message: format!("{} is shorter than {len} bytes", path.display()) });
    }
    Ok(buf)
}

fn be_u32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// What happens after the noisy-label training stage(s).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Single stage over the whole network for `stage_epochs[0]` epochs.
    BaselineEs,
    #[default]
    Pes,
    /// PES, then class-weighted training on the confident examples.
    PesConfident,
    /// PES, then the MixMatch stage.
    PesSemi,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::BaselineEs => "baseline_es",
            Mode::Pes => "pes",
            Mode::PesConfident => "pes_confident",
            Mode::PesSemi => "pes_semi",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PesSettings {
    pub stage_epochs: Vec<usize>,
    /// One per stage; defaults to SGD for stage 1 and Adam afterwards.
    pub optimizers: Option<Vec<OptimizerConfig>>,
    pub batch_size: usize,
    pub select_best_on_val: bool,
}

impl Default for PesSettings {
    fn default() -> Self {
        PesSettings { stage_epochs: vec![30, 7, 5], optimizers: None, batch_size: 128, select_best_on_val: false }
    }
}

impl PesSettings {
    pub fn schedule(&self, seed: u64) -> Result<PesSchedule> {
        let opts = match &self.optimizers {
            Some(o) => o.clone(),
            None => (0..self.stage_epochs.len())
                .map(|i| if i == 0 { default_stage1_optimizer() } else { default_later_optimizer() })
                .collect(),
        };
        let mut s = PesSchedule::new(self.stage_epochs.clone(), opts, self.batch_size, seed)?;
        s.select_best_on_val = self.select_best_on_val;
        Ok(s)
    }

    /// Stage 1 alone, for the early-stopping baseline.
    pub fn baseline_schedule(&self, seed: u64) -> Result<PesSchedule> {
        let mut s = self.schedule(seed)?;
        s.stage_epochs.truncate(1);
        s.stage_optimizers.truncate(1);
        Ok(s)
    }
}

/// Augmentation used when averaging predictions for confident selection and
/// inside the MixMatch stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmentSpec {
    /// Gaussian noise scaled by each feature's standard deviation.
    Jitter { strength: f64 },
    /// Flip and pad-crop of square single-channel images.
    FlipCrop { pad: usize },
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec::Jitter { strength: 0.1 }
    }
}

impl AugmentSpec {
    pub fn build(&self, train: &Dataset) -> Result<Augmenter> {
        match *self {
            AugmentSpec::Jitter { strength } => Ok(Augmenter::jitter_for(train, strength)),
            AugmentSpec::FlipCrop { pad } => {
                let side = square_side(train.dim())?;
                Ok(Augmenter::ImageFlipCrop { height: side, width: side, pad })
            }
        }
    }
}

fn square_side(dim: usize) -> Result<usize> {
    let side = (dim as f64).sqrt().round() as usize;
    if side * side != dim {
        bail!(Config, "flip/crop augmentation needs square images, got {dim} features");
    }
    Ok(side)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfidentSettings {
    pub augmentation: AugmentSpec,
    /// Epochs of class-weighted training in `pes_confident` mode.
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub weighting: ClassWeighting,
}

impl Default for ConfidentSettings {
    fn default() -> Self {
        ConfidentSettings {
            augmentation: AugmentSpec::default(),
            epochs: 20,
            optimizer: OptimizerConfig::adam(1e-3),
            weighting: ClassWeighting::Proportional,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSettings {
    pub epoch_grid: Vec<usize>,
    /// 1-based layers; all layers when absent.
    pub probe_layers: Option<Vec<usize>>,
    pub clean_retrain_epochs: usize,
    pub clean_optimizer: OptimizerConfig,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        ProfileSettings {
            epoch_grid: vec![0, 5, 10, 20, 40, 80],
            probe_layers: None,
            clean_retrain_epochs: 30,
            clean_optimizer: OptimizerConfig::adam(1e-3),
        }
    }
}

/// One experiment: data, noise, model, training procedure and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetSpec,
    /// The noise family has no default; flip-rate conventions differ.
    pub noise: NoiseSpec,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub pes: PesSettings,
    #[serde(default)]
    pub confident: ConfidentSettings,
    #[serde(default)]
    pub semi: SemiConfig,
    #[serde(default)]
    pub profile: ProfileSettings,
    /// Fraction of the noisy training set held out as noisy validation data.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_validation_fraction() -> f64 {
    0.1
}

impl ExperimentConfig {
    /// Desk-scale defaults around the given noise and output directory.
    pub fn new(noise: NoiseSpec, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            name: default_name(),
            dataset: DatasetSpec::default(),
            noise,
            architecture: Architecture::default(),
            mode: Mode::default(),
            pes: PesSettings::default(),
            confident: ConfidentSettings::default(),
            semi: SemiConfig::default(),
            profile: ProfileSettings::default(),
            validation_fraction: default_validation_fraction(),
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: output_dir.into(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            bail!(Config, "config file {} does not exist", path.display());
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every nested invariant; nothing is trained or generated.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            bail!(Config, "unsupported config version {} (expected {CONFIG_VERSION})", self.version);
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.=".contains(c)) {
            bail!(Config, "name {:?} must be nonempty and use only [A-Za-z0-9-_.=]", self.name);
        }
        if self.seeds.is_empty() {
            bail!(Config, "at least one seed is required");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            bail!(Config, "seeds must be distinct, got {:?}", self.seeds);
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            bail!(Config, "validation_fraction must lie in [0, 1), got {}", self.validation_fraction);
        }
        self.dataset.validate()?;
        let (dim, classes) = self.dataset.shape()?;
        self.noise.validate(classes)?;
        self.architecture.validate(dim, classes)?;
        let schedule = self.pes.schedule(0)?;
        if self.mode != Mode::BaselineEs && schedule.num_stages() != self.architecture.num_parts() {
            bail!(
                Config,
                "{} stage budgets for an architecture with {} parts",
                schedule.num_stages(),
                self.architecture.num_parts()
            );
        }
        match self.confident.augmentation {
            AugmentSpec::Jitter { strength } if !(strength.is_finite() && strength >= 0.0) => {
                bail!(Config, "jitter strength must be finite and nonnegative, got {strength}")
            }
            AugmentSpec::FlipCrop { .. } => {
                square_side(dim)?;
            }
            _ => {}
        }
        self.confident.optimizer.validate()?;
        self.semi.validate()?;
        self.probe_config().validate(&self.architecture)
    }

    pub fn probe_config(&self) -> ProbeConfig {
        let mut p = ProbeConfig::for_architecture(&self.architecture, self.profile.epoch_grid.clone(), self.seeds.clone());
        if let Some(layers) = &self.profile.probe_layers {
            p.probe_layers = layers.clone();
        }
        p.clean_retrain_epochs = self.profile.clean_retrain_epochs;
        p.clean_optimizer = self.profile.clean_optimizer;
        p.noisy_optimizer = self.pes.schedule(0).map(|s| s.stage_optimizers[0]).unwrap_or(p.noisy_optimizer);
        p.batch_size = self.pes.batch_size;
        p
    }
}
