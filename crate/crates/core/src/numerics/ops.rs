use super::Matrix;
use crate::error::{bail, Result};

/// Floor applied to probabilities before taking logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

/// Supervision for one batch: hard class indices or soft rows on the simplex.
#[derive(Clone, Copy, Debug)]
pub enum Targets<'a> {
    Labels(&'a [usize]),
    Soft(&'a Matrix),
}

impl Targets<'_> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels(l) => l.len(),
            Targets::Soft(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Target mass on class `k` for row `i`.
    #[inline]
    pub fn mass(&self, i: usize, k: usize) -> f64 {
        match self {
            Targets::Labels(l) => f64::from(u8::from(l[i] == k)),
            Targets::Soft(m) => m.get(i, k),
        }
    }

    pub(crate) fn check(&self, rows: usize, classes: usize) -> Result<()> {
        if self.len() != rows {
            bail!(Dimension, "{} targets for {rows} rows", self.len());
        }
        match self {
            Targets::Labels(l) => {
                if let Some(&bad) = l.iter().find(|&&y| y >= classes) {
                    bail!(InvalidArgument, "label {bad} outside [0, {classes})");
                }
            }
            Targets::Soft(m) => {
                if m.cols() != classes {
                    bail!(Dimension, "soft targets have {} classes, predictions {classes}", m.cols());
                }
            }
        }
        Ok(())
    }
}

/// In-place stabilised softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

/// Mean over rows of `−Σ_k t_k log max(p_k, 1e-12)`.
pub fn cross_entropy(probs: &Matrix, targets: Targets<'_>) -> Result<f64> {
    targets.check(probs.rows(), probs.cols())?;
    if probs.rows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..probs.rows()).map(|i| row_cross_entropy(probs.row(i), &targets, i)).sum();
    Ok(total / probs.rows() as f64)
}

#[inline]
pub(crate) fn row_cross_entropy(p: &[f64], targets: &Targets<'_>, i: usize) -> f64 {
    match targets {
        Targets::Labels(l) => -p[l[i]].max(LOG_CLAMP).ln(),
        Targets::Soft(m) => -m
            .row(i)
            .iter()
            .zip(p)
            .filter(|(t, _)| **t != 0.0)
            .map(|(t, pk)| t * pk.max(LOG_CLAMP).ln())
            .sum::<f64>(),
    }
}

/// One-hot encoding of labels as a `labels.len() × classes` matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (i, &y) in labels.iter().enumerate() {
        m.set(i, y, 1.0);
    }
    m
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits_or_probs: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = logits_or_probs.argmax_rows().iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    /// exp/sum with Neumaier-compensated accumulation, no max shift.
    fn softmax_oracle(row: &[f64]) -> Vec<f64> {
        let exps: Vec<f64> = row.iter().map(|v| v.exp()).collect();
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &e in &exps {
            let t = sum + e;
            if sum.abs() >= e.abs() {
                comp += (sum - t) + e;
            } else {
                comp += (e - t) + sum;
            }
            sum = t;
        }
        let total = sum + comp;
        exps.iter().map(|e| e / total).collect()
    }

    #[test]
    fn equal_logits_are_uniform() {
        let p = softmax_rows(&Matrix::from_rows(&[vec![3.0; 4]]).unwrap());
        assert!(p.row(0).iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn ln2_gives_two_thirds() {
        let p = softmax_rows(&Matrix::from_rows(&[vec![2f64.ln(), 0.0]]).unwrap());
        assert!((p.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matches_compensated_oracle() {
        let mut rng = SeededRng::new(17);
        for _ in 0..200 {
            let row: Vec<f64> = (0..10).map(|_| 4.0 * rng.normal()).collect();
            let p = softmax_rows(&Matrix::from_rows(std::slice::from_ref(&row)).unwrap());
            for (a, b) in p.row(0).iter().zip(softmax_oracle(&row)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_logits_stay_normalised() {
        let p = softmax_rows(&Matrix::from_rows(&[vec![1000.0, -1000.0, 999.0]]).unwrap());
        assert!((p.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.is_finite());
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let p = Matrix::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(cross_entropy(&p, Targets::Labels(&[1])).unwrap(), 0.0);
    }

    #[test]
    fn uniform_prediction_costs_ln_k() {
        let p = Matrix::from_rows(&[vec![0.1; 10], vec![0.1; 10]]).unwrap();
        let l = cross_entropy(&p, Targets::Labels(&[3, 9])).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn batch_mean_matches_scalar_loop() {
        let mut rng = SeededRng::new(5);
        let logits =
            Matrix::from_vec(6, 4, (0..24).map(|_| rng.normal()).collect()).unwrap();
        let probs = softmax_rows(&logits);
        let labels = [0, 3, 2, 1, 1, 0];
        let mut expected = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            expected -= probs.get(i, y).ln();
        }
        expected /= 6.0;
        let hard = cross_entropy(&probs, Targets::Labels(&labels)).unwrap();
        assert!((hard - expected).abs() < 1e-10);
        let soft = cross_entropy(&probs, Targets::Soft(&one_hot(&labels, 4))).unwrap();
        assert!((soft - expected).abs() < 1e-10);
    }

    #[test]
    fn confident_wrong_prediction_is_clamped() {
        let p = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let l = cross_entropy(&p, Targets::Labels(&[1])).unwrap();
        assert!((l + LOG_CLAMP.ln()).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = Matrix::zeros(2, 3);
        assert!(cross_entropy(&p, Targets::Labels(&[0])).is_err());
        assert!(cross_entropy(&p, Targets::Labels(&[0, 3])).is_err());
        assert!(cross_entropy(&p, Targets::Soft(&Matrix::zeros(2, 2))).is_err());
    }
}
