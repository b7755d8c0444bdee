use serde::{Deserialize, Serialize};

use super::network::{Gradients, PartitionedNetwork};
use crate::error::{bail, Result};
use crate::numerics::Matrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Single-cycle cosine decay from the configured learning rate down to
/// `min_lr` over `epochs` epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub min_lr: f64,
    pub epochs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub cosine: Option<CosineSchedule>,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        OptimizerConfig { kind: OptimizerKind::Sgd, learning_rate, momentum, weight_decay, cosine: None }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig { kind: OptimizerKind::Adam, learning_rate, momentum: 0.0, weight_decay: 0.0, cosine: None }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn with_cosine(mut self, min_lr: f64, epochs: usize) -> Self {
        self.cosine = Some(CosineSchedule { min_lr, epochs });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            bail!(Config, "learning rate must be positive, got {}", self.learning_rate);
        }
        if !(0.0..1.0).contains(&self.momentum) {
            bail!(Config, "momentum must lie in [0, 1), got {}", self.momentum);
        }
        if !(self.weight_decay >= 0.0) {
            bail!(Config, "weight decay must be nonnegative, got {}", self.weight_decay);
        }
        if let Some(c) = self.cosine {
            if !(c.min_lr >= 0.0) || c.min_lr > self.learning_rate || c.epochs == 0 {
                bail!(Config, "cosine schedule needs 0 <= min_lr <= lr and epochs > 0");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Moments {
    first_w: Matrix,
    first_b: Vec<f64>,
    second_w: Matrix,
    second_b: Vec<f64>,
    steps: u64,
}

/// Optimizer configuration plus its per-layer state.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    config: OptimizerConfig,
    lr: f64,
    step: u64,
    moments: Vec<Option<Moments>>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig) -> Self {
        OptimizerState { config, lr: config.learning_rate, step: 0, moments: Vec::new() }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Sets the learning rate for 0-based `epoch` from the cosine schedule,
    /// when one is configured.
    pub fn begin_epoch(&mut self, epoch: usize) {
        if let Some(c) = self.config.cosine {
            let progress = (epoch.min(c.epochs)) as f64 / c.epochs as f64;
            let base = self.config.learning_rate;
            self.lr = c.min_lr + 0.5 * (base - c.min_lr) * (1.0 + (std::f64::consts::PI * progress).cos());
        }
    }

    /// Drops accumulated moments for the given layers.
    pub fn clear_layers(&mut self, layers: std::ops::Range<usize>) {
        for l in layers {
            if let Some(m) = self.moments.get_mut(l) {
                *m = None;
            }
        }
    }

    /// Applies one update to every unfrozen layer; frozen layers are not touched.
    pub fn step(&mut self, net: &mut PartitionedNetwork, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.num_layers() {
            bail!(Dimension, "{} layer gradients for {} layers", grads.layers.len(), net.num_layers());
        }
        for (l, g) in grads.layers.iter().enumerate() {
            match (g, net.is_layer_frozen(l)) {
                (Some(_), true) => bail!(Dimension, "gradient supplied for frozen layer {l}"),
                (None, false) => bail!(Dimension, "missing gradient for trainable layer {l}"),
                (Some(g), false) => {
                    let s = net.layers()[l].spec;
                    if g.weight.shape() != (s.input_dim, s.output_dim) || g.bias.len() != s.output_dim {
                        bail!(Dimension, "gradient shape mismatch at layer {l}");
                    }
                }
                (None, true) => {}
            }
        }
        if !grads.is_finite() {
            bail!(NonFinite, "gradient contains NaN or infinity at optimizer step {}", self.step + 1);
        }
        if self.moments.len() < net.num_layers() {
            self.moments.resize(net.num_layers(), None);
        }
        let cfg = self.config;
        let lr = self.lr;
        for (l, g) in grads.layers.iter().enumerate() {
            let Some(g) = g else { continue };
            let layer = &mut net.layers_mut()[l];
            let m = self.moments[l].get_or_insert_with(|| Moments {
                first_w: Matrix::zeros(g.weight.rows(), g.weight.cols()),
                first_b: vec![0.0; g.bias.len()],
                second_w: Matrix::zeros(g.weight.rows(), g.weight.cols()),
                second_b: vec![0.0; g.bias.len()],
                steps: 0,
            });
            m.steps += 1;
            match cfg.kind {
                OptimizerKind::Sgd => {
                    sgd_update(layer.weight.data_mut(), g.weight.data(), m.first_w.data_mut(), cfg, lr);
                    sgd_update(&mut layer.bias, &g.bias, &mut m.first_b, cfg, lr);
                }
                OptimizerKind::Adam => {
                    let t = m.steps as i32;
                    let c1 = 1.0 - ADAM_BETA1.powi(t);
                    let c2 = 1.0 - ADAM_BETA2.powi(t);
                    adam_update(
                        layer.weight.data_mut(),
                        g.weight.data(),
                        m.first_w.data_mut(),
                        m.second_w.data_mut(),
                        cfg.weight_decay,
                        lr,
                        c1,
                        c2,
                    );
                    adam_update(&mut layer.bias, &g.bias, &mut m.first_b, &mut m.second_b, cfg.weight_decay, lr, c1, c2);
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// `v ← μv + g + wd·θ`, `θ ← θ − lr·v`.
fn sgd_update(theta: &mut [f64], grad: &[f64], velocity: &mut [f64], cfg: OptimizerConfig, lr: f64) {
    for ((t, &g), v) in theta.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = cfg.momentum * *v + g + cfg.weight_decay * *t;
        *t -= lr * *v;
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    theta: &mut [f64],
    grad: &[f64],
    first: &mut [f64],
    second: &mut [f64],
    weight_decay: f64,
    lr: f64,
    c1: f64,
    c2: f64,
) {
    for (((t, &g), m), v) in theta.iter_mut().zip(grad).zip(first.iter_mut()).zip(second.iter_mut()) {
        let g = g + weight_decay * *t;
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *t -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}
