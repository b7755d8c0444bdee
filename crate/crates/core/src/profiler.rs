//! Layer-wise noise sensitivity: train on noisy labels, freeze a prefix of
//! layers, re-initialise and retrain the suffix on clean labels, and measure
//! how much of the prefix representation survives.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{bail, Result};
use crate::model::{Architecture, OptimizerConfig, OptimizerState, PartitionedNetwork};
use crate::numerics::{derive_seed, SeededRng, Targets};
use crate::plot::{line_chart, Series};
use crate::train::{batches, epoch_order, train_epochs, train_step};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// 1-based layer indices; the last layer of the network reports the
    /// accuracy after noisy training directly.
    pub probe_layers: Vec<usize>,
    /// Strictly increasing noisy-training epoch counts.
    pub epoch_grid: Vec<usize>,
    pub clean_retrain_epochs: usize,
    pub seeds: Vec<u64>,
    pub noisy_optimizer: OptimizerConfig,
    pub clean_optimizer: OptimizerConfig,
    pub batch_size: usize,
}

impl ProbeConfig {
    /// Probes every layer of `arch` over `epoch_grid` with the usual optimizers.
    pub fn for_architecture(arch: &Architecture, epoch_grid: Vec<usize>, seeds: Vec<u64>) -> Self {
        ProbeConfig {
            probe_layers: (1..=arch.num_layers()).collect(),
            epoch_grid,
            clean_retrain_epochs: 30,
            seeds,
            noisy_optimizer: OptimizerConfig::sgd(0.01, 0.9, 1e-4),
            clean_optimizer: OptimizerConfig::adam(1e-3),
            batch_size: 128,
        }
    }

    pub fn validate(&self, arch: &Architecture) -> Result<()> {
        if self.epoch_grid.is_empty() || self.probe_layers.is_empty() || self.seeds.is_empty() {
            bail!(Config, "probe needs at least one layer, grid point and seed");
        }
        if self.epoch_grid.windows(2).any(|w| w[0] >= w[1]) {
            bail!(Config, "epoch grid must be strictly increasing, got {:?}", self.epoch_grid);
        }
        if let Some(&l) = self.probe_layers.iter().find(|&&l| l == 0 || l > arch.num_layers()) {
            bail!(Config, "probe layer {l} outside 1..={}", arch.num_layers());
        }
        if self.batch_size == 0 {
            bail!(Config, "batch size must be positive");
        }
        self.noisy_optimizer.validate()?;
        self.clean_optimizer.validate()
    }
}

/// Seed-aggregated test accuracy of one layer over the epoch grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub layer: usize,
    pub epochs: Vec<usize>,
    pub means: Vec<f64>,
    /// Sample standard deviation over seeds; 0 for a single seed.
    pub stds: Vec<f64>,
    /// Grid epoch of the highest mean, earliest on ties.
    pub peak_epoch: usize,
}

impl SensitivityCurve {
    fn from_samples(layer: usize, epochs: &[usize], samples: &[Vec<f64>]) -> Self {
        let means: Vec<f64> = samples.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
        let stds = samples.iter().zip(&means).map(|(s, m)| sample_std(s, *m)).collect();
        let mut peak = 0;
        for (i, &m) in means.iter().enumerate() {
            if m > means[peak] {
                peak = i;
            }
        }
        SensitivityCurve { layer, epochs: epochs.to_vec(), means, stds, peak_epoch: epochs[peak] }
    }

    pub fn peak_mean(&self) -> f64 {
        self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean accuracy lost between the peak and the last grid point.
    pub fn drop_to_end(&self) -> f64 {
        self.peak_mean() - self.means.last().copied().unwrap_or(f64::NAN)
    }
}

pub(crate) fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// One probe measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub layer: usize,
    pub epochs_noisy: usize,
    pub seed: u64,
    pub accuracy: f64,
}

fn init_net(arch: &Architecture, data: &Dataset, seed: u64) -> Result<PartitionedNetwork> {
    let flat = Architecture::new(arch.hidden.clone(), vec![]);
    flat.build(data.dim(), data.num_classes, &mut SeededRng::new(derive_seed(seed, 1)))
}

fn noisy_epochs(
    net: &mut PartitionedNetwork,
    opt: &mut OptimizerState,
    train: &Dataset,
    epochs: std::ops::Range<usize>,
    config: &ProbeConfig,
    seed: u64,
) -> Result<()> {
    // Epoch `e` always uses the same shuffle, so training in segments is
    // identical to one uninterrupted run.
    let shuffle = derive_seed(seed, 2);
    for e in epochs {
        opt.begin_epoch(e);
        for idx in batches(&epoch_order(shuffle, e, train.len()), config.batch_size) {
            train_step(net, opt, &train.features, Targets::Labels(&train.noisy_labels), None, idx)?;
        }
    }
    Ok(())
}

/// Freezes layers `1..=layer` of a noisily trained network, re-initialises
/// the rest, retrains on clean labels and returns the test accuracy. Also
/// returns whether the frozen prefix kept its checksum.
fn retrain_suffix(
    noisy_net: &PartitionedNetwork,
    train: &Dataset,
    test: &Dataset,
    layer: usize,
    config: &ProbeConfig,
    seed: u64,
) -> Result<(f64, bool)> {
    let mut net = noisy_net.with_partition(&[layer])?;
    net.set_frozen(1);
    let before = net.part_checksums()[0].clone();
    net.reinit_parts(2, &mut SeededRng::new(derive_seed(seed, 100 + layer as u64)))?;
    let mut opt = OptimizerState::new(config.clean_optimizer);
    train_epochs(
        &mut net,
        &mut opt,
        &train.features,
        Targets::Labels(&train.clean_labels),
        None,
        config.clean_retrain_epochs,
        config.batch_size,
        derive_seed(seed, 200 + layer as u64),
        |_, _, _| Ok(()),
    )?;
    let intact = net.part_checksums()[0] == before;
    Ok((net.accuracy(&test.features, &test.clean_labels)?, intact))
}

fn measure(
    net: &PartitionedNetwork,
    train: &Dataset,
    test: &Dataset,
    layer: usize,
    config: &ProbeConfig,
    seed: u64,
) -> Result<f64> {
    if layer == net.num_layers() {
        return net.accuracy(&test.features, &test.clean_labels);
    }
    let (acc, intact) = retrain_suffix(net, train, test, layer, config, seed)?;
    if !intact {
        bail!(Training, "frozen prefix of layer {layer} changed during clean retraining");
    }
    Ok(acc)
}

/// Probe of one `(layer, epochs_noisy, seed)` point. `train` supplies both
/// the noisy labels for the first phase and the clean labels for retraining.
pub fn probe_layer(
    arch: &Architecture,
    train: &Dataset,
    test: &Dataset,
    layer: usize,
    epochs_noisy: usize,
    config: &ProbeConfig,
    seed: u64,
) -> Result<f64> {
    if layer == 0 || layer > arch.num_layers() {
        bail!(InvalidArgument, "probe layer {layer} outside 1..={}", arch.num_layers());
    }
    let mut net = init_net(arch, train, seed)?;
    let mut opt = OptimizerState::new(config.noisy_optimizer);
    noisy_epochs(&mut net, &mut opt, train, 0..epochs_noisy, config, seed)?;
    measure(&net, train, test, layer, config, seed)
}

/// Full sweep over layers, grid points and seeds. Noisy training runs once
/// per seed and is snapshotted at every grid point; the results equal
/// independent [`probe_layer`] calls.
pub fn sensitivity_profile(
    arch: &Architecture,
    train: &Dataset,
    test: &Dataset,
    config: &ProbeConfig,
) -> Result<(Vec<ProbeRecord>, Vec<SensitivityCurve>)> {
    arch.validate(train.dim(), train.num_classes)?;
    config.validate(arch)?;
    let mut records = Vec::new();
    for &seed in &config.seeds {
        let mut net = init_net(arch, train, seed)?;
        let mut opt = OptimizerState::new(config.noisy_optimizer);
        let mut done = 0;
        for &e in &config.epoch_grid {
            noisy_epochs(&mut net, &mut opt, train, done..e, config, seed)?;
            done = e;
            for &layer in &config.probe_layers {
                let accuracy = measure(&net, train, test, layer, config, seed)?;
                records.push(ProbeRecord { layer, epochs_noisy: e, seed, accuracy });
            }
        }
    }
    Ok((records.clone(), curves_from_records(&config.probe_layers, &config.epoch_grid, &records)))
}

/// Aggregates raw records into one curve per requested layer.
pub fn curves_from_records(layers: &[usize], grid: &[usize], records: &[ProbeRecord]) -> Vec<SensitivityCurve> {
    layers
        .iter()
        .map(|&layer| {
            let samples: Vec<Vec<f64>> = grid
                .iter()
                .map(|&e| {
                    records.iter().filter(|r| r.layer == layer && r.epochs_noisy == e).map(|r| r.accuracy).collect()
                })
                .collect();
            SensitivityCurve::from_samples(layer, grid, &samples)
        })
        .collect()
}

/// `layer,epochs_noisy,seed,accuracy`.
pub fn write_records_csv<W: Write>(records: &[ProbeRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `layer,epochs_noisy,mean,std,is_peak`.
pub fn write_curves_csv<W: Write>(curves: &[SensitivityCurve], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["layer", "epochs_noisy", "mean", "std", "is_peak"])?;
    for c in curves {
        for ((e, m), s) in c.epochs.iter().zip(&c.means).zip(&c.stds) {
            w.write_record([
                c.layer.to_string(),
                e.to_string(),
                format!("{m:.6}"),
                format!("{s:.6}"),
                (*e == c.peak_epoch).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One series per layer with a dashed marker at its peak.
pub fn curves_svg(curves: &[SensitivityCurve]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|c| Series {
            label: format!("layer {}", c.layer),
            points: c.epochs.iter().zip(&c.means).map(|(&e, &m)| (e as f64, m)).collect(),
            marker: Some(c.peak_epoch as f64),
        })
        .collect();
    line_chart("Layer sensitivity to noisy training", "epochs on noisy labels", "test accuracy", &series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BlobModel;
    use crate::noise::{NoiseKind, NoiseSpec};

    fn data(rate: f64) -> (Dataset, Dataset) {
        let mut rng = SeededRng::new(5);
        let model = BlobModel::new(6, 3, 3.0).unwrap();
        let train = model.sample(240, &mut rng).unwrap();
        let test = model.sample(150, &mut rng).unwrap();
        let noisy = NoiseSpec::new(NoiseKind::SymmetricExcl, rate).apply(&train, &mut rng).unwrap();
        (train.with_noisy_labels(noisy).unwrap(), test)
    }

    fn small() -> (Architecture, ProbeConfig) {
        let arch = Architecture::new(vec![12, 12], vec![]);
        let mut cfg = ProbeConfig::for_architecture(&arch, vec![0, 2, 5], vec![1, 2]);
        cfg.clean_retrain_epochs = 4;
        cfg.batch_size = 32;
        (arch, cfg)
    }

    #[test]
    fn profile_matches_independent_probes() {
        let (train, test) = data(0.4);
        let (arch, cfg) = small();
        let (records, curves) = sensitivity_profile(&arch, &train, &test, &cfg).unwrap();
        assert_eq!(records.len(), 3 * 3 * 2);
        for r in records.iter().step_by(4) {
            let single = probe_layer(&arch, &train, &test, r.layer, r.epochs_noisy, &cfg, r.seed).unwrap();
            assert_eq!(single.to_bits(), r.accuracy.to_bits(), "{r:?}");
        }
        assert_eq!(curves.iter().map(|c| c.layer).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(curves.iter().all(|c| c.means.len() == 3 && c.stds.iter().all(|&s| s >= 0.0)));
    }

    #[test]
    fn final_layer_reports_noisy_accuracy() {
        let (train, test) = data(0.4);
        let (arch, cfg) = small();
        let acc = probe_layer(&arch, &train, &test, 3, 0, &cfg, 9).unwrap();
        let net = init_net(&arch, &train, 9).unwrap();
        assert_eq!(acc, net.accuracy(&test.features, &test.clean_labels).unwrap());
    }

    #[test]
    fn frozen_prefix_survives_retraining() {
        let (train, test) = data(0.4);
        let (arch, cfg) = small();
        let net = init_net(&arch, &train, 3).unwrap();
        let (_, intact) = retrain_suffix(&net, &train, &test, 2, &cfg, 3).unwrap();
        assert!(intact);
    }

    #[test]
    fn single_point_curves() {
        let (train, test) = data(0.2);
        let (arch, mut cfg) = small();
        cfg.epoch_grid = vec![3];
        cfg.seeds = vec![4];
        cfg.probe_layers = vec![2];
        let (records, curves) = sensitivity_profile(&arch, &train, &test, &cfg).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].peak_epoch, 3);
        assert_eq!(curves[0].stds, vec![0.0]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let (train, test) = data(0.2);
        let (arch, cfg) = small();
        let bad_grid = ProbeConfig { epoch_grid: vec![0, 5, 5], ..cfg.clone() };
        assert!(sensitivity_profile(&arch, &train, &test, &bad_grid).unwrap_err().is_validation());
        let bad_layer = ProbeConfig { probe_layers: vec![4], ..cfg.clone() };
        assert!(sensitivity_profile(&arch, &train, &test, &bad_layer).is_err());
        assert!(probe_layer(&arch, &train, &test, 0, 1, &cfg, 1).is_err());
    }

    #[test]
    fn peak_prefers_earliest_tie() {
        let c = SensitivityCurve::from_samples(1, &[0, 5, 10], &[vec![0.5], vec![0.8], vec![0.8]]);
        assert_eq!(c.peak_epoch, 5);
        assert!((c.drop_to_end()).abs() < 1e-15);
        let c = SensitivityCurve::from_samples(1, &[0, 5], &[vec![0.9, 0.7], vec![0.6, 0.6]]);
        assert!((c.means[0] - 0.8).abs() < 1e-12);
        assert!((c.stds[0] - (0.02f64).sqrt()).abs() < 1e-12);
        assert!((c.drop_to_end() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn csv_layouts() {
        let records = vec![ProbeRecord { layer: 2, epochs_noisy: 5, seed: 1, accuracy: 0.75 }];
        let mut buf = Vec::new();
        write_records_csv(&records, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "layer,epochs_noisy,seed,accuracy\n2,5,1,0.75\n");
        let curves = curves_from_records(&[2], &[5], &records);
        let mut buf = Vec::new();
        write_curves_csv(&curves, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "layer,epochs_noisy,mean,std,is_peak\n2,5,0.750000,0.000000,true\n");
        assert!(curves_svg(&curves).contains("layer 2"));
    }
}
