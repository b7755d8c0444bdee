//! Labelled datasets: synthetic generators, the IDX loader and the CSV
//! interchange format shared with the noise generators.

mod csv_io;
mod idx;
mod synthetic;

pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels, IdxImages};
pub use synthetic::{make_blobs, make_two_moons, BlobModel};

use crate::error::{bail, Result};
use crate::numerics::{Matrix, SeededRng};

/// Features together with the clean labels and the (possibly corrupted)
/// labels a learner gets to see.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub clean_labels: Vec<usize>,
    pub noisy_labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    /// Dataset whose noisy labels start out equal to the clean ones.
    pub fn clean(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Self::new(features, labels.clone(), labels, num_classes)
    }

    pub fn new(features: Matrix, clean_labels: Vec<usize>, noisy_labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let n = features.rows();
        if clean_labels.len() != n || noisy_labels.len() != n {
            bail!(Dimension, "{n} feature rows but {} clean / {} noisy labels", clean_labels.len(), noisy_labels.len());
        }
        if num_classes < 2 {
            bail!(InvalidArgument, "need at least two classes, got {num_classes}");
        }
        if let Some(bad) = clean_labels.iter().chain(&noisy_labels).find(|&&y| y >= num_classes) {
            bail!(InvalidArgument, "label {bad} outside [0, {num_classes})");
        }
        Ok(Dataset { features, clean_labels, noisy_labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn with_noisy_labels(mut self, noisy: Vec<usize>) -> Result<Self> {
        if noisy.len() != self.len() {
            bail!(Dimension, "{} noisy labels for {} examples", noisy.len(), self.len());
        }
        if let Some(bad) = noisy.iter().find(|&&y| y >= self.num_classes) {
            bail!(InvalidArgument, "label {bad} outside [0, {})", self.num_classes);
        }
        self.noisy_labels = noisy;
        Ok(self)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            clean_labels: indices.iter().map(|&i| self.clean_labels[i]).collect(),
            noisy_labels: indices.iter().map(|&i| self.noisy_labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Randomly moves `fraction` of the examples into a second dataset.
    /// Returns `(kept, held_out)`.
    pub fn split(&self, fraction: f64, rng: &mut SeededRng) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            bail!(Config, "split fraction must lie in [0, 1), got {fraction}");
        }
        let perm = rng.permutation(self.len());
        let held = (fraction * self.len() as f64).round() as usize;
        let (out, keep) = perm.split_at(held);
        let mut keep = keep.to_vec();
        let mut out = out.to_vec();
        keep.sort_unstable();
        out.sort_unstable();
        Ok((self.subset(&keep), self.subset(&out)))
    }

    /// Fraction of examples whose observed label differs from the clean one.
    pub fn noise_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let flipped = self.clean_labels.iter().zip(&self.noisy_labels).filter(|(a, b)| a != b).count();
        flipped as f64 / self.len() as f64
    }

    /// Per-feature sample standard deviation.
    pub fn feature_std(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let means: Vec<f64> = self.features.column_sums().iter().map(|s| s / n).collect();
        let mut var = vec![0.0; self.dim()];
        for row in self.features.iter_rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&means) {
                *v += (x - m).powi(2);
            }
        }
        var.iter().map(|v| (v / (n - 1.0).max(1.0)).sqrt()).collect()
    }

    pub fn class_counts(&self, labels: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in labels {
            counts[y] += 1;
        }
        counts
    }
}
