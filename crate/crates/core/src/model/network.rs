use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{bail, Result};
use crate::numerics::{softmax_rows, Matrix, SeededRng, Targets};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        LayerSpec { input_dim, output_dim, activation }
    }
}

/// Fully connected layer computing `act(x·W + b)`, `W` stored `input × output`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub spec: LayerSpec,
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn init(spec: LayerSpec, rng: &mut SeededRng) -> Self {
        let std = (2.0 / spec.input_dim as f64).sqrt();
        let data = (0..spec.input_dim * spec.output_dim).map(|_| std * rng.normal()).collect();
        DenseLayer {
            spec,
            weight: Matrix::from_raw(spec.input_dim, spec.output_dim, data),
            bias: vec![0.0; spec.output_dim],
        }
    }
}

/// How a loss compares predicted probabilities with targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Softmax cross-entropy.
    CrossEntropy,
    /// Mean squared error between softmax probabilities and targets,
    /// averaged over classes.
    SquaredError,
}

/// Activations recorded by [`PartitionedNetwork::forward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pre: Vec<Matrix>,
    pub logits: Matrix,
    pub probs: Matrix,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.logits.rows()
    }

    /// Pre-activation outputs, one matrix per layer.
    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Per-layer gradients; `None` for every layer in a frozen part.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<LayerGrad>>,
}

impl Gradients {
    /// `self += factor * other`; both must cover the same layers.
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            bail!(Dimension, "gradient sets cover different layer counts");
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    a.weight.add_scaled(&b.weight, factor)?;
                    a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += factor * y);
                }
                (None, None) => {}
                _ => bail!(Dimension, "gradient sets disagree on frozen layers"),
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|g| g.weight.is_finite() && g.bias.iter().all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|g| g.weight.data().iter().all(|&v| v == 0.0) && g.bias.iter().all(|&v| v == 0.0))
    }
}

/// Multilayer perceptron split into contiguous parts that can be frozen or
/// re-initialised independently.
///
/// Parts are addressed 1-based (`1..=num_parts()`), layers 0-based.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionedNetwork {
    layers: Vec<DenseLayer>,
    /// First layer index of parts 2..=L.
    part_boundaries: Vec<usize>,
    frozen: Vec<bool>,
}

pub(crate) fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        bail!(InvalidArgument, "a network needs at least one layer");
    }
    for (i, s) in specs.iter().enumerate() {
        if s.input_dim == 0 || s.output_dim == 0 {
            bail!(InvalidArgument, "layer {i} has a zero dimension");
        }
    }
    for (i, w) in specs.windows(2).enumerate() {
        if w[0].output_dim != w[1].input_dim {
            bail!(
                InvalidArgument,
                "layer {i} emits {} features but layer {} expects {}",
                w[0].output_dim,
                i + 1,
                w[1].input_dim
            );
        }
    }
    if specs.last().map(|s| s.activation) != Some(Activation::Identity) {
        bail!(InvalidArgument, "the final layer must emit logits (identity activation)");
    }
    Ok(())
}

pub(crate) fn validate_boundaries(num_layers: usize, boundaries: &[usize]) -> Result<()> {
    let mut prev = 0;
    for &b in boundaries {
        if b <= prev || b >= num_layers {
            bail!(
                InvalidArgument,
                "part boundaries {boundaries:?} must be strictly increasing within 1..{num_layers}"
            );
        }
        prev = b;
    }
    Ok(())
}

impl PartitionedNetwork {
    /// He-initialised network (`W ~ N(0, 2/input_dim)`, zero biases), nothing frozen.
    pub fn new(specs: &[LayerSpec], part_boundaries: &[usize], rng: &mut SeededRng) -> Result<Self> {
        validate_specs(specs)?;
        validate_boundaries(specs.len(), part_boundaries)?;
        let layers = specs.iter().map(|&s| DenseLayer::init(s, rng)).collect();
        Ok(PartitionedNetwork {
            layers,
            part_boundaries: part_boundaries.to_vec(),
            frozen: vec![false; part_boundaries.len() + 1],
        })
    }

    /// Assembles a network from explicit layers; used by checkpoints and tests.
    pub fn from_layers(layers: Vec<DenseLayer>, part_boundaries: &[usize]) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        validate_specs(&specs)?;
        validate_boundaries(layers.len(), part_boundaries)?;
        for (i, l) in layers.iter().enumerate() {
            if l.weight.shape() != (l.spec.input_dim, l.spec.output_dim) || l.bias.len() != l.spec.output_dim {
                bail!(Dimension, "layer {i} parameters do not match its spec");
            }
            if !l.weight.is_finite() || l.bias.iter().any(|b| !b.is_finite()) {
                bail!(NonFinite, "layer {i} carries non-finite parameters");
            }
        }
        Ok(PartitionedNetwork {
            layers,
            part_boundaries: part_boundaries.to_vec(),
            frozen: vec![false; part_boundaries.len() + 1],
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_parts(&self) -> usize {
        self.part_boundaries.len() + 1
    }

    pub fn part_boundaries(&self) -> &[usize] {
        &self.part_boundaries
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.output_dim
    }

    /// Layer indices belonging to 1-based `part`.
    pub fn part_layers(&self, part: usize) -> Range<usize> {
        assert!(part >= 1 && part <= self.num_parts(), "part {part} out of range");
        let start = if part == 1 { 0 } else { self.part_boundaries[part - 2] };
        let end = if part == self.num_parts() { self.layers.len() } else { self.part_boundaries[part - 1] };
        start..end
    }

    /// 1-based part containing layer `layer`.
    pub fn part_of_layer(&self, layer: usize) -> usize {
        1 + self.part_boundaries.iter().filter(|&&b| b <= layer).count()
    }

    pub fn frozen_parts(&self) -> &[bool] {
        &self.frozen
    }

    pub fn is_layer_frozen(&self, layer: usize) -> bool {
        self.frozen[self.part_of_layer(layer) - 1]
    }

    /// Freezes exactly parts `1..=prefix_len`; `0` unfreezes everything.
    pub fn set_frozen(&mut self, prefix_len: usize) {
        assert!(prefix_len <= self.num_parts(), "cannot freeze {prefix_len} of {} parts", self.num_parts());
        for (i, f) in self.frozen.iter_mut().enumerate() {
            *f = i < prefix_len;
        }
    }

    /// Redraws every layer of parts `from_part..=L` with the initial scheme.
    /// Returns the affected layer range.
    pub fn reinit_parts(&mut self, from_part: usize, rng: &mut SeededRng) -> Result<Range<usize>> {
        if from_part < 1 || from_part > self.num_parts() {
            bail!(InvalidArgument, "part {from_part} outside 1..={}", self.num_parts());
        }
        let range = self.part_layers(from_part).start..self.layers.len();
        for layer in &mut self.layers[range.clone()] {
            *layer = DenseLayer::init(layer.spec, rng);
        }
        Ok(range)
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardCache> {
        if x.cols() != self.input_dim() {
            bail!(Dimension, "batch has {} features, network expects {}", x.cols(), self.input_dim());
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let mut z = current.matmul(&layer.weight)?;
            z.add_row_vector(&layer.bias)?;
            let out = match layer.spec.activation {
                Activation::Identity => z.clone(),
                Activation::Relu => {
                    let mut a = z.clone();
                    a.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                    a
                }
            };
            inputs.push(current);
            pre.push(z);
            current = out;
        }
        let probs = softmax_rows(&current);
        Ok(ForwardCache { inputs, pre, logits: current, probs })
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let mut current = x.clone();
        if x.cols() != self.input_dim() {
            bail!(Dimension, "batch has {} features, network expects {}", x.cols(), self.input_dim());
        }
        for layer in &self.layers {
            let mut z = current.matmul(&layer.weight)?;
            z.add_row_vector(&layer.bias)?;
            if layer.spec.activation == Activation::Relu {
                z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
            current = z;
        }
        Ok(current)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        Ok(softmax_rows(&self.logits(x)?))
    }

    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        Ok(crate::numerics::accuracy(&self.logits(x)?, labels))
    }

    /// Mean weighted loss `(1/n) Σ_i w_i ℓ_i` of a batch; the value that
    /// [`backward`](Self::backward) differentiates.
    pub fn loss(&self, x: &Matrix, targets: Targets<'_>, kind: LossKind, weights: Option<&[f64]>) -> Result<f64> {
        let probs = self.predict_proba(x)?;
        batch_loss(&probs, targets, kind, weights)
    }

    /// Exact gradients of the mean weighted loss with respect to every
    /// unfrozen parameter. Returns `(loss, gradients)`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        targets: Targets<'_>,
        kind: LossKind,
        weights: Option<&[f64]>,
    ) -> Result<(f64, Gradients)> {
        let n = cache.batch_size();
        let k = self.num_classes();
        if cache.inputs.len() != self.layers.len()
            || cache.logits.cols() != k
            || cache.inputs[0].cols() != self.input_dim()
        {
            bail!(Dimension, "forward cache does not belong to this network");
        }
        targets.check(n, k)?;
        if targets.len() != n {
            bail!(Dimension, "stale cache: {} rows cached, {} targets", n, targets.len());
        }
        check_weights(weights, n)?;
        let loss = batch_loss(&cache.probs, targets, kind, weights)?;

        let delta = output_delta(&cache.probs, targets, kind, weights);
        Ok((loss, self.backprop(cache, delta)?))
    }

    /// Gradients of any scalar function of the logits, given its gradient
    /// `dlogits` with respect to the cached logits.
    pub fn backward_logits(&self, cache: &ForwardCache, dlogits: &Matrix) -> Result<Gradients> {
        if cache.inputs.len() != self.layers.len() || dlogits.shape() != cache.logits.shape() {
            bail!(Dimension, "logit gradient {:?} does not match the cached logits {:?}", dlogits.shape(), cache.logits.shape());
        }
        self.backprop(cache, dlogits.clone())
    }

    fn backprop(&self, cache: &ForwardCache, mut delta: Matrix) -> Result<Gradients> {
        let n = cache.batch_size();
        let mut grads: Vec<Option<LayerGrad>> = vec![None; self.layers.len()];
        let Some(first_trainable) = (0..self.layers.len()).find(|&l| !self.is_layer_frozen(l)) else {
            return Ok(Gradients { layers: grads });
        };
        if n == 0 {
            for (l, g) in grads.iter_mut().enumerate().skip(first_trainable) {
                let s = self.layers[l].spec;
                *g = Some(LayerGrad { weight: Matrix::zeros(s.input_dim, s.output_dim), bias: vec![0.0; s.output_dim] });
            }
            return Ok(Gradients { layers: grads });
        }
        for l in (first_trainable..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if layer.spec.activation == Activation::Relu {
                for (d, &z) in delta.data_mut().iter_mut().zip(cache.pre[l].data()) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let weight = cache.inputs[l].t_matmul(&delta)?;
            let bias = delta.column_sums();
            if l > first_trainable {
                delta = delta.matmul_t(&layer.weight)?;
            }
            grads[l] = Some(LayerGrad { weight, bias });
        }
        Ok(Gradients { layers: grads })
    }

    /// Per-part SHA-256 fingerprints (hex, first 16 bytes) over the exact bit
    /// patterns of weights and biases.
    pub fn part_checksums(&self) -> Vec<String> {
        (1..=self.num_parts()).map(|p| self.checksum_layers(self.part_layers(p))).collect()
    }

    pub fn checksum_layers(&self, range: Range<usize>) -> String {
        let mut h = Sha256::new();
        for layer in &self.layers[range] {
            for v in layer.weight.data().iter().chain(&layer.bias) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect()
    }

    /// Same parameters under a different partition, nothing frozen.
    pub fn with_partition(&self, part_boundaries: &[usize]) -> Result<Self> {
        validate_boundaries(self.layers.len(), part_boundaries)?;
        Ok(PartitionedNetwork {
            layers: self.layers.clone(),
            part_boundaries: part_boundaries.to_vec(),
            frozen: vec![false; part_boundaries.len() + 1],
        })
    }

    /// Sets which parts are frozen from an explicit flag vector.
    pub(crate) fn set_frozen_flags(&mut self, flags: &[bool]) -> Result<()> {
        if flags.len() != self.num_parts() {
            bail!(Dimension, "{} freeze flags for {} parts", flags.len(), self.num_parts());
        }
        self.frozen = flags.to_vec();
        Ok(())
    }
}

fn check_weights(weights: Option<&[f64]>, n: usize) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != n {
            bail!(Dimension, "{} example weights for {n} rows", w.len());
        }
        if let Some(bad) = w.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            bail!(InvalidArgument, "example weight {bad} is negative or non-finite");
        }
    }
    Ok(())
}

pub(crate) fn batch_loss(probs: &Matrix, targets: Targets<'_>, kind: LossKind, weights: Option<&[f64]>) -> Result<f64> {
    let n = probs.rows();
    let k = probs.cols();
    targets.check(n, k)?;
    check_weights(weights, n)?;
    if n == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..n {
        let w = weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        let l = match kind {
            LossKind::CrossEntropy => crate::numerics::row_cross_entropy(probs.row(i), &targets, i),
            LossKind::SquaredError => {
                probs.row(i).iter().enumerate().map(|(c, p)| (p - targets.mass(i, c)).powi(2)).sum::<f64>() / k as f64
            }
        };
        total += w * l;
    }
    Ok(total / n as f64)
}

/// Gradient of the mean weighted loss with respect to the logits.
fn output_delta(probs: &Matrix, targets: Targets<'_>, kind: LossKind, weights: Option<&[f64]>) -> Matrix {
    let (n, k) = probs.shape();
    let mut delta = Matrix::zeros(n, k);
    for i in 0..n {
        let w = weights.map_or(1.0, |w| w[i]) / n as f64;
        let p = probs.row(i);
        let d = delta.row_mut(i);
        match kind {
            LossKind::CrossEntropy => {
                let mass: f64 = (0..k).map(|c| targets.mass(i, c)).sum();
                for c in 0..k {
                    d[c] = w * (p[c] * mass - targets.mass(i, c));
                }
            }
            LossKind::SquaredError => {
                let g: Vec<f64> = (0..k).map(|c| 2.0 * w * (p[c] - targets.mass(i, c)) / k as f64).collect();
                let dot: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
                for c in 0..k {
                    d[c] = p[c] * (g[c] - dot);
                }
            }
        }
    }
    delta
}
