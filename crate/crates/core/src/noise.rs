//! Synthetic label noise: symmetric (with or without the true label among
//! the flip targets), pairflip, and instance-dependent.
//!
//! Noise is generated once and stored with the dataset; it is never
//! resampled during training.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{bail, Result};
use crate::numerics::{sample_categorical, sample_truncated_normal, softmax_in_place, Matrix, SeededRng};

/// Row-stochastic matrix with `T[i][j] = P(noisy = j | clean = i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    entries: Matrix,
}

impl TransitionMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        let (r, c) = entries.shape();
        if r != c || r < 2 {
            bail!(Dimension, "transition matrix must be square with k >= 2, got {r}x{c}");
        }
        for (i, row) in entries.iter_rows().enumerate() {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                bail!(InvalidArgument, "row {i} has entries outside [0, 1]");
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                bail!(InvalidArgument, "row {i} sums to {s}");
            }
        }
        Ok(TransitionMatrix { entries })
    }

    pub fn classes(&self) -> usize {
        self.entries.rows()
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.entries.get(from, to)
    }

    pub fn row(&self, from: usize) -> &[f64] {
        self.entries.row(from)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Uniform flips over all classes, the true one included.
    SymmetricIncl,
    /// Uniform flips over the other classes.
    SymmetricExcl,
    /// Flips to the next class, `(i + 1) mod k`.
    Pairflip,
    /// Feature-dependent flips with per-example rates.
    Instance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, rate: f64) -> Self {
        NoiseSpec { kind, rate }
    }

    pub fn none() -> Self {
        NoiseSpec { kind: NoiseKind::SymmetricExcl, rate: 0.0 }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if k < 2 {
            bail!(InvalidArgument, "label noise needs k >= 2 classes, got {k}");
        }
        if !(0.0..1.0).contains(&self.rate) {
            bail!(Config, "noise rate must lie in [0, 1), got {}", self.rate);
        }
        match self.kind {
            NoiseKind::SymmetricExcl if self.rate >= (k as f64 - 1.0) / k as f64 => {
                bail!(Config, "symmetric (exclusive) rate {} leaves the clean class a minority for k={k}", self.rate)
            }
            NoiseKind::Pairflip if self.rate >= 0.5 => {
                bail!(Config, "pairflip rate {} >= 0.5 makes the clean class no longer the majority", self.rate)
            }
            _ => Ok(()),
        }
    }

    /// Class-conditional transition matrix; `None` for instance noise.
    pub fn transition_matrix(&self, k: usize) -> Result<Option<TransitionMatrix>> {
        self.validate(k)?;
        Ok(match self.kind {
            NoiseKind::SymmetricIncl => Some(symmetric_matrix(k, self.rate, true)?),
            NoiseKind::SymmetricExcl => Some(symmetric_matrix(k, self.rate, false)?),
            NoiseKind::Pairflip => Some(pairflip_matrix(k, self.rate)?),
            NoiseKind::Instance => None,
        })
    }

    /// Noisy labels for `data` drawn from its clean labels.
    pub fn apply(&self, data: &Dataset, rng: &mut SeededRng) -> Result<Vec<usize>> {
        match self.transition_matrix(data.num_classes)? {
            Some(t) => apply_class_noise(&data.clean_labels, &t, rng),
            None => instance_noise(&data.features, &data.clean_labels, data.num_classes, self.rate, rng),
        }
    }
}

/// Symmetric flips. Excluding the true label: diagonal `1−α`, off-diagonal
/// `α/(k−1)`. Including it: diagonal `1 − α(k−1)/k`, off-diagonal `α/k`.
pub fn symmetric_matrix(k: usize, alpha: f64, include_true: bool) -> Result<TransitionMatrix> {
    if k < 2 {
        bail!(InvalidArgument, "symmetric noise needs k >= 2, got {k}");
    }
    if !(0.0..1.0).contains(&alpha) {
        bail!(InvalidArgument, "flip rate must lie in [0, 1), got {alpha}");
    }
    let kf = k as f64;
    let (diag, off) = if include_true { (1.0 - alpha * (kf - 1.0) / kf, alpha / kf) } else { (1.0 - alpha, alpha / (kf - 1.0)) };
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m.set(i, j, if i == j { diag } else { off });
        }
    }
    TransitionMatrix::new(m)
}

/// Pairflip: diagonal `1−α`, entry `(i, (i+1) mod k)` equal to `α`.
pub fn pairflip_matrix(k: usize, alpha: f64) -> Result<TransitionMatrix> {
    if k < 2 {
        bail!(InvalidArgument, "pairflip noise needs k >= 2, got {k}");
    }
    if !(0.0..0.5).contains(&alpha) {
        bail!(InvalidArgument, "pairflip rate must lie in [0, 0.5), got {alpha}");
    }
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        m.set(i, i, 1.0 - alpha);
        let j = (i + 1) % k;
        m.set(i, j, m.get(i, j) + alpha);
    }
    TransitionMatrix::new(m)
}

/// Resamples every label independently from its row of `t`.
pub fn apply_class_noise(labels: &[usize], t: &TransitionMatrix, rng: &mut SeededRng) -> Result<Vec<usize>> {
    let k = t.classes();
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        bail!(InvalidArgument, "label {bad} has no row in a {k}-class transition matrix");
    }
    labels.iter().map(|&y| sample_categorical(t.row(y), rng)).collect()
}

/// Parameters of the instance-dependent generator: one flip rate per example
/// and one `d × k` projection per clean class.
#[derive(Clone, Debug)]
pub struct InstanceNoiseModel {
    pub flip_rates: Vec<f64>,
    pub projections: Vec<Matrix>,
}

impl InstanceNoiseModel {
    /// Draws flip rates from `N(τ, 0.1²)` truncated to `[0, 1]`, then the
    /// standard-normal projections `w_1 … w_k`.
    pub fn sample(n: usize, d: usize, k: usize, tau: f64, rng: &mut SeededRng) -> Result<Self> {
        if d == 0 {
            bail!(InvalidArgument, "instance noise needs at least one feature");
        }
        if k < 2 {
            bail!(InvalidArgument, "instance noise needs k >= 2, got {k}");
        }
        if !(0.0..1.0).contains(&tau) {
            bail!(InvalidArgument, "instance noise rate must lie in [0, 1), got {tau}");
        }
        let flip_rates = (0..n).map(|_| sample_truncated_normal(tau, 0.1, 0.0, 1.0, rng)).collect::<Result<_>>()?;
        let projections = (0..k)
            .map(|_| Matrix::from_raw(d, k, (0..d * k).map(|_| rng.normal()).collect()))
            .collect();
        Ok(InstanceNoiseModel { flip_rates, projections })
    }

    /// Flip distribution for example `i`: `1 − q_i` on the clean class and
    /// `q_i · softmax(x·w_y)` over the remaining classes.
    pub fn distribution(&self, i: usize, x: &[f64], y: usize) -> Vec<f64> {
        let w = &self.projections[y];
        let k = w.cols();
        let mut scores = vec![0.0; k];
        for (xj, wrow) in x.iter().zip(w.iter_rows()) {
            for (s, wv) in scores.iter_mut().zip(wrow) {
                *s += xj * wv;
            }
        }
        // softmax over the non-clean classes only
        let mut others: Vec<f64> = scores.iter().enumerate().filter(|&(c, _)| c != y).map(|(_, &s)| s).collect();
        softmax_in_place(&mut others);
        let q = self.flip_rates[i];
        let mut p = Vec::with_capacity(k);
        let mut it = others.into_iter();
        for c in 0..k {
            p.push(if c == y { 1.0 - q } else { q * it.next().expect("k-1 entries") });
        }
        p
    }

    pub fn apply(&self, features: &Matrix, labels: &[usize], rng: &mut SeededRng) -> Result<Vec<usize>> {
        if features.rows() != labels.len() || self.flip_rates.len() != labels.len() {
            bail!(Dimension, "{} feature rows, {} labels, {} flip rates", features.rows(), labels.len(), self.flip_rates.len());
        }
        let k = self.projections.len();
        if self.projections.iter().any(|w| w.rows() != features.cols()) {
            bail!(Dimension, "projections do not match {} features", features.cols());
        }
        labels
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                if y >= k {
                    bail!(InvalidArgument, "label {y} outside [0, {k})");
                }
                sample_categorical(&self.distribution(i, features.row(i), y), rng)
            })
            .collect()
    }
}

/// Instance-dependent noisy labels with mean flip rate about `tau`.
pub fn instance_noise(features: &Matrix, labels: &[usize], k: usize, tau: f64, rng: &mut SeededRng) -> Result<Vec<usize>> {
    if features.rows() != labels.len() {
        bail!(Dimension, "{} feature rows for {} labels", features.rows(), labels.len());
    }
    let model = InstanceNoiseModel::sample(labels.len(), features.cols(), k, tau, rng)?;
    model.apply(features, labels, rng)
}

/// Fraction of positions where the two label vectors differ.
pub fn flip_fraction(clean: &[usize], noisy: &[usize]) -> f64 {
    if clean.is_empty() {
        return 0.0;
    }
    clean.iter().zip(noisy).filter(|(a, b)| a != b).count() as f64 / clean.len() as f64
}
