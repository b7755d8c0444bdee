//! Progressive early stopping.
//!
//! Stage 1 trains the whole network for `T₁` epochs. Stage `l` freezes parts
//! `1..l`, re-initialises parts `l..=L` and trains them for `T_l` epochs,
//! with `T₁ ≥ T₂ ≥ … ≥ T_L`. A zero budget makes a stage a no-op.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{bail, Result};
use crate::model::{OptimizerConfig, OptimizerState, PartitionedNetwork};
use crate::numerics::{derive_seed, SeededRng, Targets};
use crate::train::train_epochs;

/// Epoch budgets and optimizers for every stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PesSchedule {
    pub stage_epochs: Vec<usize>,
    /// One optimizer per stage.
    pub stage_optimizers: Vec<OptimizerConfig>,
    pub batch_size: usize,
    pub seed: u64,
    /// Restore the epoch with the best noisy-validation accuracy at the end
    /// of each stage instead of keeping the last one.
    #[serde(default)]
    pub select_best_on_val: bool,
}

/// SGD with momentum 0.9 for the whole-network stage.
pub fn default_stage1_optimizer() -> OptimizerConfig {
    OptimizerConfig::sgd(0.01, 0.9, 1e-4)
}

/// Adam for the re-initialised suffix stages.
pub fn default_later_optimizer() -> OptimizerConfig {
    OptimizerConfig::adam(1e-3)
}

impl PesSchedule {
    pub fn new(stage_epochs: Vec<usize>, stage_optimizers: Vec<OptimizerConfig>, batch_size: usize, seed: u64) -> Result<Self> {
        let s = PesSchedule { stage_epochs, stage_optimizers, batch_size, seed, select_best_on_val: false };
        s.validate()?;
        Ok(s)
    }

    /// SGD for stage 1 and Adam for every later stage.
    pub fn with_defaults(stage_epochs: Vec<usize>, batch_size: usize, seed: u64) -> Result<Self> {
        let opts = (0..stage_epochs.len())
            .map(|i| if i == 0 { default_stage1_optimizer() } else { default_later_optimizer() })
            .collect();
        Self::new(stage_epochs, opts, batch_size, seed)
    }

    pub fn num_stages(&self) -> usize {
        self.stage_epochs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_epochs.is_empty() {
            bail!(Config, "a schedule needs at least one stage");
        }
        if self.stage_optimizers.len() != self.stage_epochs.len() {
            bail!(Config, "{} optimizers for {} stages", self.stage_optimizers.len(), self.stage_epochs.len());
        }
        for (i, w) in self.stage_epochs.windows(2).enumerate() {
            if w[1] > w[0] {
                bail!(Config, "epoch budgets must not increase: T{} = {} < T{} = {}", i + 1, w[0], i + 2, w[1]);
            }
        }
        if self.batch_size == 0 {
            bail!(Config, "batch size must be positive");
        }
        for o in &self.stage_optimizers {
            o.validate()?;
        }
        Ok(())
    }

    pub fn validate_for(&self, net: &PartitionedNetwork) -> Result<()> {
        self.validate()?;
        if self.num_stages() != net.num_parts() {
            bail!(Config, "{} stages for a network with {} parts", self.num_stages(), net.num_parts());
        }
        Ok(())
    }

    /// Shuffle seed of 1-based `stage`; stage 1 uses the schedule seed itself,
    /// so a one-stage schedule replays plain training exactly.
    pub fn shuffle_seed(&self, stage: usize) -> u64 {
        if stage == 1 {
            self.seed
        } else {
            derive_seed(self.seed, stage as u64)
        }
    }

    fn reinit_seed(&self, stage: usize) -> u64 {
        derive_seed(self.seed, 1000 + stage as u64)
    }
}

/// Audit record of one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub epochs_run: usize,
    pub train_loss: Vec<f64>,
    /// Accuracy against noisy labels of the held-out slice, per epoch.
    pub val_accuracy: Vec<f64>,
    pub reinitialized: bool,
    pub checksums_before: Vec<String>,
    /// Checksums right after re-initialisation (equal to `checksums_before`
    /// when nothing was re-initialised).
    pub checksums_after_reinit: Vec<String>,
    pub checksums_after: Vec<String>,
    /// Prefix checksums sampled after every epoch.
    pub frozen_prefix_per_epoch: Vec<Vec<String>>,
}

impl StageReport {
    /// Parts before this stage kept their parameters bit for bit.
    pub fn prefix_unchanged(&self) -> bool {
        let p = self.stage - 1;
        self.checksums_before[..p] == self.checksums_after[..p]
            && self.frozen_prefix_per_epoch.iter().all(|c| c[..] == self.checksums_before[..p])
    }

    /// Every part from this stage on received new parameters.
    pub fn suffix_reinitialized(&self) -> bool {
        let p = self.stage - 1;
        self.reinitialized
            && self.checksums_before[p..].iter().zip(&self.checksums_after_reinit[p..]).all(|(a, b)| a != b)
    }
}

/// Stateful driver that enforces stage order.
pub struct PesTrainer<'a> {
    net: PartitionedNetwork,
    schedule: PesSchedule,
    train: &'a Dataset,
    val: Option<&'a Dataset>,
    completed: usize,
}

impl<'a> PesTrainer<'a> {
    pub fn new(net: PartitionedNetwork, train: &'a Dataset, val: Option<&'a Dataset>, schedule: PesSchedule) -> Result<Self> {
        schedule.validate_for(&net)?;
        if train.is_empty() {
            bail!(InvalidArgument, "cannot train on an empty dataset");
        }
        if train.dim() != net.input_dim() {
            bail!(Dimension, "data has {} features, network expects {}", train.dim(), net.input_dim());
        }
        Ok(PesTrainer { net, schedule, train, val, completed: 0 })
    }

    pub fn network(&self) -> &PartitionedNetwork {
        &self.net
    }

    pub fn completed_stages(&self) -> usize {
        self.completed
    }

    /// `T₁` epochs over all parameters.
    pub fn train_stage1(&mut self) -> Result<StageReport> {
        if self.completed != 0 {
            bail!(Training, "stage 1 already ran");
        }
        if self.net.frozen_parts().iter().any(|&f| f) {
            bail!(Training, "stage 1 requires an unfrozen network");
        }
        self.run_stage(1)
    }

    /// Freeze parts `1..l`, re-initialise `l..=L`, train for `T_l` epochs.
    pub fn train_stage(&mut self, stage: usize) -> Result<StageReport> {
        if stage == 1 {
            return self.train_stage1();
        }
        if stage > self.schedule.num_stages() {
            bail!(InvalidArgument, "stage {stage} beyond the {} scheduled", self.schedule.num_stages());
        }
        if self.completed + 1 != stage {
            bail!(Training, "stage {stage} requested after {} completed stages", self.completed);
        }
        self.run_stage(stage)
    }

    fn run_stage(&mut self, stage: usize) -> Result<StageReport> {
        let epochs = self.schedule.stage_epochs[stage - 1];
        let before = self.net.part_checksums();
        let mut report = StageReport {
            stage,
            epochs_run: 0,
            train_loss: Vec::new(),
            val_accuracy: Vec::new(),
            reinitialized: false,
            checksums_before: before.clone(),
            checksums_after_reinit: before.clone(),
            checksums_after: before,
            frozen_prefix_per_epoch: Vec::new(),
        };
        if epochs == 0 {
            self.completed = stage;
            return Ok(report);
        }

        let mut opt = OptimizerState::new(self.schedule.stage_optimizers[stage - 1]);
        if stage > 1 {
            self.net.set_frozen(stage - 1);
            let mut rng = SeededRng::new(self.schedule.reinit_seed(stage));
            let layers = self.net.reinit_parts(stage, &mut rng)?;
            opt.clear_layers(layers);
            report.reinitialized = true;
            report.checksums_after_reinit = self.net.part_checksums();
        }

        let val = self.val;
        let select_best = self.schedule.select_best_on_val && val.is_some();
        let mut best: Option<(f64, PartitionedNetwork)> = None;
        let mut val_acc = Vec::with_capacity(epochs);
        let mut prefix = Vec::with_capacity(epochs);
        let train = self.train;
        report.train_loss = train_epochs(
            &mut self.net,
            &mut opt,
            &train.features,
            Targets::Labels(&train.noisy_labels),
            None,
            epochs,
            self.schedule.batch_size,
            self.schedule.shuffle_seed(stage),
            |_, _, net| {
                prefix.push(net.part_checksums()[..stage - 1].to_vec());
                if let Some(v) = val.filter(|v| !v.is_empty()) {
                    let acc = net.accuracy(&v.features, &v.noisy_labels)?;
                    val_acc.push(acc);
                    if select_best && best.as_ref().is_none_or(|(b, _)| acc > *b) {
                        best = Some((acc, net.clone()));
                    }
                }
                Ok(())
            },
        )?;
        if let Some((_, net)) = best {
            let frozen = self.net.frozen_parts().to_vec();
            self.net = net;
            self.net.set_frozen_flags(&frozen)?;
        }
        report.val_accuracy = val_acc;
        report.frozen_prefix_per_epoch = prefix;
        report.epochs_run = epochs;
        report.checksums_after = self.net.part_checksums();
        self.completed = stage;
        Ok(report)
    }

    /// Runs every remaining stage in order.
    pub fn run_remaining(&mut self) -> Result<Vec<StageReport>> {
        (self.completed + 1..=self.schedule.num_stages()).map(|l| self.train_stage(l)).collect()
    }

    /// Unfreezes every part and hands back the network.
    pub fn finish(mut self) -> PartitionedNetwork {
        self.net.set_frozen(0);
        self.net
    }
}

/// Stage 1 on its own; see [`PesTrainer::train_stage1`].
pub fn train_stage1(trainer: &mut PesTrainer<'_>) -> Result<StageReport> {
    trainer.train_stage1()
}

/// Stage `l >= 2`; see [`PesTrainer::train_stage`].
pub fn train_stage_l(trainer: &mut PesTrainer<'_>, stage: usize) -> Result<StageReport> {
    trainer.train_stage(stage)
}

/// Full progressive early stopping run; every part ends unfrozen.
pub fn train_pes(
    net: PartitionedNetwork,
    train: &Dataset,
    val: Option<&Dataset>,
    schedule: &PesSchedule,
) -> Result<(PartitionedNetwork, Vec<StageReport>)> {
    let mut trainer = PesTrainer::new(net, train, val, schedule.clone())?;
    let reports = trainer.run_remaining()?;
    Ok((trainer.finish(), reports))
}

/// Ordinary early stopping: `epochs` passes over the whole network with the
/// shuffle order keyed by `seed`.
pub fn train_plain(
    net: &mut PartitionedNetwork,
    train: &Dataset,
    epochs: usize,
    optimizer: OptimizerConfig,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut opt = OptimizerState::new(optimizer);
    train_epochs(
        net,
        &mut opt,
        &train.features,
        Targets::Labels(&train.noisy_labels),
        None,
        epochs,
        batch_size,
        seed,
        |_, _, _| Ok(()),
    )
}
