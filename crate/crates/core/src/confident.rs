//! Confident-example selection from augmentation-averaged predictions, class
//! weights, weighted refinement and label precision/recall.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{bail, Result};
use crate::model::{OptimizerConfig, OptimizerState, PartitionedNetwork};
use crate::numerics::{argmax, Matrix, SeededRng, Targets};
use crate::train::train_epochs;

/// Stochastic input transformation applied before prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Augmenter {
    /// `x + ε`, `ε_j ~ N(0, (strength · feature_std_j)²)`.
    GaussianJitter { strength: f64, feature_std: Vec<f64> },
    /// Rows are `height × width` single-channel images: horizontal flip with
    /// probability ½, then zero-pad by `pad` and crop back at a random offset.
    ImageFlipCrop { height: usize, width: usize, pad: usize },
}

impl Augmenter {
    /// Jitter scaled by the per-feature spread of `data`.
    pub fn jitter_for(data: &Dataset, strength: f64) -> Self {
        Augmenter::GaussianJitter { strength, feature_std: data.feature_std() }
    }

    /// Leaves inputs untouched.
    pub fn identity(dim: usize) -> Self {
        Augmenter::GaussianJitter { strength: 0.0, feature_std: vec![0.0; dim] }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Augmenter::GaussianJitter { feature_std, .. } => feature_std.len(),
            Augmenter::ImageFlipCrop { height, width, .. } => height * width,
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Augmenter::GaussianJitter { strength, feature_std } => {
                *strength == 0.0 || feature_std.iter().all(|&s| s == 0.0)
            }
            Augmenter::ImageFlipCrop { .. } => false,
        }
    }

    /// Independently augmented copy of every row.
    pub fn augment(&self, x: &Matrix, rng: &mut SeededRng) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            bail!(Dimension, "augmenter expects {} features, batch has {}", self.input_dim(), x.cols());
        }
        let mut out = x.clone();
        match self {
            Augmenter::GaussianJitter { strength, feature_std } => {
                if self.is_identity() {
                    return Ok(out);
                }
                for r in 0..out.rows() {
                    for (v, s) in out.row_mut(r).iter_mut().zip(feature_std) {
                        *v += strength * s * rng.normal();
                    }
                }
            }
            &Augmenter::ImageFlipCrop { height, width, pad } => {
                for r in 0..out.rows() {
                    let flip = rng.uniform() < 0.5;
                    let dy = rng.below(2 * pad + 1);
                    let dx = rng.below(2 * pad + 1);
                    let src = x.row(r);
                    let flipped: Vec<f64> = if flip { flip_horizontal(src, height, width) } else { src.to_vec() };
                    crop_shift(&flipped, out.row_mut(r), height, width, pad, dy, dx);
                }
            }
        }
        Ok(out)
    }
}

/// Mirrors a row-major `height × width` image left to right.
pub fn flip_horizontal(img: &[f64], height: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = img[y * width + (width - 1 - x)];
        }
    }
    out
}

/// Crop at offset `(dy, dx)` out of the image zero-padded by `pad`.
fn crop_shift(src: &[f64], dst: &mut [f64], height: usize, width: usize, pad: usize, dy: usize, dx: usize) {
    for y in 0..height {
        for x in 0..width {
            let sy = (y + dy) as isize - pad as isize;
            let sx = (x + dx) as isize - pad as isize;
            dst[y * width + x] = if sy >= 0 && sx >= 0 && (sy as usize) < height && (sx as usize) < width {
                src[sy as usize * width + sx as usize]
            } else {
                0.0
            };
        }
    }
}

/// Mean of the softmax outputs for two independent augmentations of `x`.
pub fn predict_averaged(net: &PartitionedNetwork, x: &Matrix, augmenter: &Augmenter, rng: &mut SeededRng) -> Result<Matrix> {
    let mut p = net.predict_proba(&augmenter.augment(x, rng)?)?;
    let q = net.predict_proba(&augmenter.augment(x, rng)?)?;
    p.add_scaled(&q, 1.0)?;
    p.scale(0.5);
    Ok(p)
}

/// Confident (labelled) and remaining (unlabelled) training indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfidentSplit {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    /// Number of labelled examples per noisy class.
    pub class_counts: Vec<usize>,
}

impl ConfidentSplit {
    /// Splits indices by agreement between `predicted` and `noisy` labels.
    pub fn from_predictions(predicted: &[usize], noisy: &[usize], classes: usize) -> Self {
        let mut labeled = Vec::new();
        let mut unlabeled = Vec::new();
        let mut class_counts = vec![0; classes];
        for (i, (p, y)) in predicted.iter().zip(noisy).enumerate() {
            if p == y {
                labeled.push(i);
                class_counts[*y] += 1;
            } else {
                unlabeled.push(i);
            }
        }
        ConfidentSplit { labeled, unlabeled, class_counts }
    }

    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `index,noisy_label,assigned_set` with `L` or `U` per example.
    pub fn write_csv<W: Write>(&self, noisy_labels: &[usize], writer: W) -> Result<()> {
        let mut set = vec![""; noisy_labels.len()];
        self.labeled.iter().for_each(|&i| set[i] = "L");
        self.unlabeled.iter().for_each(|&i| set[i] = "U");
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "noisy_label", "assigned_set"])?;
        for (i, (y, s)) in noisy_labels.iter().zip(set).enumerate() {
            w.write_record([i.to_string(), y.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Example `i` is confident when the argmax of its averaged prediction
/// (lowest class on ties) equals its noisy label.
pub fn extract_confident(
    net: &PartitionedNetwork,
    data: &Dataset,
    augmenter: &Augmenter,
    rng: &mut SeededRng,
) -> Result<ConfidentSplit> {
    let probs = predict_averaged(net, &data.features, augmenter, rng)?;
    let predicted: Vec<usize> = probs.iter_rows().map(argmax).collect();
    Ok(ConfidentSplit::from_predictions(&predicted, &data.noisy_labels, data.num_classes))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    /// `w_k = σ_k / Σ_j σ_j`.
    #[default]
    Proportional,
    /// `w_k ∝ 1/σ_k`, normalised to sum to one; empty classes get zero.
    Inverse,
}

/// Per-class weights from the confident counts `σ_k`.
pub fn class_weights(split: &ConfidentSplit, weighting: ClassWeighting) -> Result<Vec<f64>> {
    let total: usize = split.class_counts.iter().sum();
    if total == 0 {
        bail!(InvalidArgument, "no confident examples to weight");
    }
    Ok(match weighting {
        ClassWeighting::Proportional => split.class_counts.iter().map(|&s| s as f64 / total as f64).collect(),
        ClassWeighting::Inverse => {
            let inv: Vec<f64> = split.class_counts.iter().map(|&s| if s == 0 { 0.0 } else { 1.0 / s as f64 }).collect();
            let z: f64 = inv.iter().sum();
            inv.iter().map(|v| v / z).collect()
        }
    })
}

/// Mini-batch minimisation of `Σ_i w_{ỹ_i} · CE(ỹ_i, f(x_i))` over the
/// labelled part of `split`, class weights held fixed.
#[allow(clippy::too_many_arguments)]
pub fn train_weighted(
    net: &mut PartitionedNetwork,
    data: &Dataset,
    split: &ConfidentSplit,
    weights: &[f64],
    epochs: usize,
    optimizer: OptimizerConfig,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if split.labeled.is_empty() {
        bail!(InvalidArgument, "weighted training needs at least one confident example");
    }
    if weights.len() != data.num_classes {
        bail!(Dimension, "{} class weights for {} classes", weights.len(), data.num_classes);
    }
    let subset = data.subset(&split.labeled);
    let example_weights: Vec<f64> = subset.noisy_labels.iter().map(|&y| weights[y]).collect();
    let mut opt = OptimizerState::new(optimizer);
    train_epochs(
        net,
        &mut opt,
        &subset.features,
        Targets::Labels(&subset.noisy_labels),
        Some(&example_weights),
        epochs,
        batch_size,
        seed,
        |_, _, _| Ok(()),
    )
}

/// Label precision and recall of a confident split against clean labels.
/// `None` marks an empty denominator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn label_metrics(split: &ConfidentSplit, noisy: &[usize], clean: &[usize]) -> LabelMetrics {
    let correct_in_l = split.labeled.iter().filter(|&&i| noisy[i] == clean[i]).count();
    let correct_total = noisy.iter().zip(clean).filter(|(a, b)| a == b).count();
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    LabelMetrics { precision: ratio(correct_in_l, split.labeled.len()), recall: ratio(correct_in_l, correct_total) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;
    use crate::model::{Activation, Architecture, LayerSpec};

    fn uniform_net(dim: usize, k: usize) -> PartitionedNetwork {
        let mut net =
            PartitionedNetwork::new(&[LayerSpec::new(dim, k, Activation::Identity)], &[], &mut SeededRng::new(0)).unwrap();
        net.layers_mut()[0].weight.scale(0.0);
        net
    }

    #[test]
    fn zero_strength_jitter_is_identity() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let aug = Augmenter::GaussianJitter { strength: 0.0, feature_std: vec![1.0, 1.0] };
        assert_eq!(aug.augment(&x, &mut SeededRng::new(1)).unwrap(), x);
        assert!(aug.augment(&Matrix::zeros(1, 3), &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn jitter_is_centred_and_stochastic() {
        let x = Matrix::zeros(10_000, 3);
        let aug = Augmenter::GaussianJitter { strength: 0.1, feature_std: vec![1.0, 2.0, 0.5] };
        let mut rng = SeededRng::new(2);
        let a = aug.augment(&x, &mut rng).unwrap();
        let b = aug.augment(&x, &mut rng).unwrap();
        assert_ne!(a, b);
        for (j, m) in a.column_sums().iter().enumerate() {
            let sd = [1.0, 2.0, 0.5][j] * 0.1 / 100.0;
            assert!((m / 10_000.0).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn double_flip_is_identity() {
        let img: Vec<f64> = (0..12).map(f64::from).collect();
        let once = flip_horizontal(&img, 3, 4);
        assert_eq!(&once[..4], &[3.0, 2.0, 1.0, 0.0]);
        assert_eq!(flip_horizontal(&once, 3, 4), img);
    }

    #[test]
    fn zero_pad_crop_only_flips() {
        let img: Vec<f64> = (0..6).map(f64::from).collect();
        let x = Matrix::from_rows(std::slice::from_ref(&img)).unwrap();
        let aug = Augmenter::ImageFlipCrop { height: 2, width: 3, pad: 0 };
        let mut rng = SeededRng::new(3);
        for _ in 0..20 {
            let out = aug.augment(&x, &mut rng).unwrap();
            assert!(out.row(0) == img.as_slice() || out.row(0) == flip_horizontal(&img, 2, 3).as_slice());
        }
    }

    #[test]
    fn averaged_prediction_without_augmentation_is_plain() {
        let ds = make_blobs(20, 4, 3, 2.0, &mut SeededRng::new(4)).unwrap();
        let net = Architecture::new(vec![8], vec![]).build(4, 3, &mut SeededRng::new(5)).unwrap();
        let p = predict_averaged(&net, &ds.features, &Augmenter::identity(4), &mut SeededRng::new(6)).unwrap();
        let plain = net.predict_proba(&ds.features).unwrap();
        assert!(p.data().iter().zip(plain.data()).all(|(a, b)| (a - b).abs() < 1e-15));
        for row in p.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn averaging_two_views_lowers_variance() {
        let ds = make_blobs(30, 4, 3, 2.0, &mut SeededRng::new(7)).unwrap();
        let net = Architecture::new(vec![16], vec![]).build(4, 3, &mut SeededRng::new(8)).unwrap();
        let aug = Augmenter::jitter_for(&ds, 0.5);
        let x = ds.features.select_rows(&[0]);
        let mut rng = SeededRng::new(9);
        let var = |samples: &[f64]| {
            let m = samples.iter().sum::<f64>() / samples.len() as f64;
            samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (samples.len() - 1) as f64
        };
        let single: Vec<f64> =
            (0..100).map(|_| net.predict_proba(&aug.augment(&x, &mut rng).unwrap()).unwrap().get(0, 0)).collect();
        let double: Vec<f64> = (0..100).map(|_| predict_averaged(&net, &x, &aug, &mut rng).unwrap().get(0, 0)).collect();
        assert!(var(&double) < var(&single));
    }

    #[test]
    fn uniform_output_net_selects_class_zero() {
        let ds = make_blobs(60, 4, 3, 2.0, &mut SeededRng::new(10)).unwrap();
        let split = extract_confident(&uniform_net(4, 3), &ds, &Augmenter::identity(4), &mut SeededRng::new(0)).unwrap();
        assert!(split.labeled.iter().all(|&i| ds.noisy_labels[i] == 0));
        assert_eq!(split.labeled.len(), ds.noisy_labels.iter().filter(|&&y| y == 0).count());
        assert_eq!(split.len(), ds.len());
        assert_eq!(split.class_counts, vec![20, 0, 0]);
    }

    #[test]
    fn memorising_predictor_keeps_everything() {
        let noisy = vec![2, 0, 1, 1, 0];
        let split = ConfidentSplit::from_predictions(&noisy, &noisy, 3);
        assert_eq!(split.labeled, vec![0, 1, 2, 3, 4]);
        assert!(split.unlabeled.is_empty());
    }

    #[test]
    fn proportional_weights() {
        let split = |c: Vec<usize>| ConfidentSplit { labeled: vec![], unlabeled: vec![], class_counts: c };
        let w = class_weights(&split(vec![10, 10, 10]), ClassWeighting::Proportional).unwrap();
        assert!(w.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(class_weights(&split(vec![30, 10]), ClassWeighting::Proportional).unwrap(), vec![0.75, 0.25]);
        assert_eq!(class_weights(&split(vec![0, 30, 10]), ClassWeighting::Proportional).unwrap(), vec![0.0, 0.75, 0.25]);
        assert_eq!(class_weights(&split(vec![0, 30, 10]), ClassWeighting::Inverse).unwrap(), vec![0.0, 0.25, 0.75]);
        assert!(class_weights(&split(vec![0, 0]), ClassWeighting::Proportional).is_err());
    }

    #[test]
    fn metrics_on_toy_split() {
        // indices 0..6 correctly labelled, 6..8 wrong
        let clean = vec![0, 1, 2, 0, 1, 2, 0, 1];
        let noisy = vec![0, 1, 2, 0, 1, 2, 1, 2];
        let split = ConfidentSplit { labeled: vec![0, 2, 4, 7], unlabeled: vec![1, 3, 5, 6], class_counts: vec![1, 1, 2] };
        let m = label_metrics(&split, &noisy, &clean);
        assert_eq!(m.precision, Some(0.75));
        assert_eq!(m.recall, Some(0.5));

        let exact = ConfidentSplit::from_predictions(&clean, &noisy, 3);
        let m = label_metrics(&exact, &noisy, &clean);
        assert_eq!((m.precision, m.recall), (Some(1.0), Some(1.0)));

        let empty = ConfidentSplit { labeled: vec![], unlabeled: (0..8).collect(), class_counts: vec![0; 3] };
        let m = label_metrics(&empty, &noisy, &clean);
        assert_eq!((m.precision, m.recall), (None, Some(0.0)));
    }

    #[test]
    fn split_csv_layout() {
        let split = ConfidentSplit { labeled: vec![1], unlabeled: vec![0, 2], class_counts: vec![0, 1] };
        let mut buf = Vec::new();
        split.write_csv(&[0, 1, 1], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "index,noisy_label,assigned_set\n0,0,U\n1,1,L\n2,1,U\n");
    }

    #[test]
    fn zero_epochs_leave_net_untouched() {
        let ds = make_blobs(30, 4, 3, 2.0, &mut SeededRng::new(11)).unwrap();
        let mut net = Architecture::new(vec![8], vec![]).build(4, 3, &mut SeededRng::new(12)).unwrap();
        let before = net.clone();
        let split = ConfidentSplit::from_predictions(&ds.noisy_labels, &ds.noisy_labels, 3);
        train_weighted(&mut net, &ds, &split, &[0.2, 0.3, 0.5], 0, OptimizerConfig::adam(1e-3), 8, 0).unwrap();
        assert_eq!(net, before);
        let empty = ConfidentSplit { labeled: vec![], unlabeled: (0..30).collect(), class_counts: vec![0; 3] };
        assert!(train_weighted(&mut net, &ds, &empty, &[0.2, 0.3, 0.5], 1, OptimizerConfig::adam(1e-3), 8, 0).is_err());
    }

    #[test]
    fn uniform_weights_match_rescaled_learning_rate() {
        let ds = make_blobs(40, 4, 3, 2.0, &mut SeededRng::new(13)).unwrap();
        let split = ConfidentSplit::from_predictions(&ds.noisy_labels, &ds.noisy_labels, 3);
        let base = Architecture::new(vec![8], vec![]).build(4, 3, &mut SeededRng::new(14)).unwrap();
        let mut weighted = base.clone();
        let mut plain = base.clone();
        train_weighted(&mut weighted, &ds, &split, &[0.25; 3], 3, OptimizerConfig::sgd(0.4, 0.9, 0.0), 8, 1).unwrap();
        // Weight 1 per example with a quarter of the learning rate traces the same path.
        train_weighted(&mut plain, &ds, &split, &[1.0; 3], 3, OptimizerConfig::sgd(0.1, 0.9, 0.0), 8, 1).unwrap();
        for (a, b) in weighted.layers().iter().zip(plain.layers()) {
            assert!(a.weight.data().iter().zip(b.weight.data()).all(|(x, y)| (x - y).abs() < 1e-10));
        }
    }

    #[test]
    fn zero_class_weight_removes_its_gradient() {
        let ds = make_blobs(12, 4, 3, 2.0, &mut SeededRng::new(15)).unwrap();
        let net = Architecture::new(vec![6], vec![]).build(4, 3, &mut SeededRng::new(16)).unwrap();
        let class_w = [0.5, 0.0, 0.5];
        let w: Vec<f64> = ds.noisy_labels.iter().map(|&y| class_w[y]).collect();
        let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.noisy_labels[i] != 1).collect();
        let labels = Targets::Labels(&ds.noisy_labels);
        // Finite differences of the weighted loss equal those of the loss
        // restricted to the other classes (rescaled by batch size).
        let sub = ds.subset(&keep);
        let sub_w: Vec<f64> = sub.noisy_labels.iter().map(|&y| class_w[y]).collect();
        let h = 1e-5;
        for idx in 0..net.layers()[0].weight.data().len() {
            let mut p = net.clone();
            let mut m = net.clone();
            p.layers_mut()[0].weight.data_mut()[idx] += h;
            m.layers_mut()[0].weight.data_mut()[idx] -= h;
            let full = (p.loss(&ds.features, labels, crate::model::LossKind::CrossEntropy, Some(&w)).unwrap()
                - m.loss(&ds.features, labels, crate::model::LossKind::CrossEntropy, Some(&w)).unwrap())
                / (2.0 * h);
            let part = (p
                .loss(&sub.features, Targets::Labels(&sub.noisy_labels), crate::model::LossKind::CrossEntropy, Some(&sub_w))
                .unwrap()
                - m.loss(&sub.features, Targets::Labels(&sub.noisy_labels), crate::model::LossKind::CrossEntropy, Some(&sub_w))
                    .unwrap())
                / (2.0 * h)
                * sub.len() as f64
                / ds.len() as f64;
            assert!((full - part).abs() < 1e-8);
        }
    }
}
