use super::Dataset;
use crate::error::{bail, Result};
use crate::numerics::{Matrix, SeededRng};

/// Class means for Gaussian blobs with unit covariance.
///
/// With `d >= k` the means are scaled basis vectors, so every pair of classes
/// sits exactly `separation` apart. With fewer dimensions they are spread on
/// a regular polygon (or a line when `d == 1`) with adjacent classes
/// `separation` apart.
#[derive(Clone, Debug, PartialEq)]
pub struct BlobModel {
    pub means: Matrix,
}

impl BlobModel {
    pub fn new(d: usize, k: usize, separation: f64) -> Result<Self> {
        if d == 0 || k < 2 {
            bail!(InvalidArgument, "blobs need d >= 1 and k >= 2, got d={d}, k={k}");
        }
        if !(separation >= 0.0) || !separation.is_finite() {
            bail!(InvalidArgument, "separation must be finite and nonnegative, got {separation}");
        }
        let mut means = Matrix::zeros(k, d);
        if d >= k {
            for j in 0..k {
                means.set(j, j, separation / std::f64::consts::SQRT_2);
            }
        } else if d >= 2 {
            let radius = separation / (2.0 * (std::f64::consts::PI / k as f64).sin());
            for j in 0..k {
                let angle = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
                means.set(j, 0, radius * angle.cos());
                means.set(j, 1, radius * angle.sin());
            }
        } else {
            for j in 0..k {
                means.set(j, 0, separation * j as f64);
            }
        }
        Ok(BlobModel { means })
    }

    pub fn classes(&self) -> usize {
        self.means.rows()
    }

    /// `n` balanced draws in shuffled order; class `j` gets `n/k` examples,
    /// the first `n mod k` classes one extra.
    pub fn sample(&self, n: usize, rng: &mut SeededRng) -> Result<Dataset> {
        let (k, d) = self.means.shape();
        if n < k {
            bail!(InvalidArgument, "need at least one example per class (n={n}, k={k})");
        }
        let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        rng.shuffle(&mut labels);
        let mut data = Vec::with_capacity(n * d);
        for &y in &labels {
            data.extend(self.means.row(y).iter().map(|m| m + rng.normal()));
        }
        Dataset::clean(Matrix::from_vec(n, d, data)?, labels, k)
    }
}

/// `k` unit-covariance Gaussian clusters with balanced classes.
pub fn make_blobs(n: usize, d: usize, k: usize, separation: f64, rng: &mut SeededRng) -> Result<Dataset> {
    BlobModel::new(d, k, separation)?.sample(n, rng)
}

/// Two interleaved half circles: class 0 on `(cos t, sin t)`, class 1 on
/// `(1 − cos t, ½ − sin t)`, `t ~ U[0, π]`, plus isotropic Gaussian noise.
pub fn make_two_moons(n: usize, noise_std: f64, rng: &mut SeededRng) -> Result<Dataset> {
    if n == 0 || !n.is_multiple_of(2) {
        bail!(InvalidArgument, "two moons needs a positive even n, got {n}");
    }
    if !(noise_std >= 0.0) {
        bail!(InvalidArgument, "noise_std must be nonnegative, got {noise_std}");
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    rng.shuffle(&mut labels);
    let mut data = Vec::with_capacity(2 * n);
    for &y in &labels {
        let t = std::f64::consts::PI * rng.uniform();
        let (x0, x1) = if y == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        data.push(x0 + noise_std * rng.normal());
        data.push(x1 + noise_std * rng.normal());
    }
    Dataset::clean(Matrix::from_vec(n, 2, data)?, labels, 2)
}
