//! MixMatch-style refinement: confident examples act as labelled data, the
//! rest as unlabelled data with sharpened guessed labels, and both are mixed
//! with MixUp before the combined loss.

use serde::{Deserialize, Serialize};

use crate::confident::{class_weights, extract_confident, Augmenter, ClassWeighting, ConfidentSplit};
use crate::data::Dataset;
use crate::error::{bail, Result};
use crate::model::{Gradients, LossKind, OptimizerConfig, OptimizerState, PartitionedNetwork};
use crate::numerics::{one_hot, sample_beta, Matrix, SeededRng, Targets, LOG_CLAMP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemiConfig {
    /// Weight of the unlabelled squared-error term once fully ramped.
    pub lambda_u: f64,
    /// Sharpening temperature.
    pub temperature: f64,
    /// Augmentations averaged per unlabelled example.
    pub k_aug: usize,
    /// Beta parameter for MixUp before `alpha_switch_epoch`.
    pub mix_alpha: f64,
    /// Beta parameter from `alpha_switch_epoch` on.
    pub mix_alpha_late: f64,
    /// First epoch using `mix_alpha_late`; `None` means `total_epochs / 2`.
    pub alpha_switch_epoch: Option<usize>,
    /// Length of the linear ramp of `lambda_u`; 0 disables the ramp.
    pub ramp_epochs: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Weight of the uniform-prior penalty on the batch-mean prediction;
    /// 0 disables it.
    pub prior_weight: f64,
    /// Apply class weights to the labelled term.
    pub class_weighted: bool,
    pub weighting: ClassWeighting,
}

impl Default for SemiConfig {
    fn default() -> Self {
        SemiConfig {
            lambda_u: 5.0,
            temperature: 0.5,
            k_aug: 2,
            mix_alpha: 4.0,
            mix_alpha_late: 0.75,
            alpha_switch_epoch: None,
            ramp_epochs: 16,
            total_epochs: 20,
            batch_size: 128,
            optimizer: OptimizerConfig::adam(1e-3),
            prior_weight: 1.0,
            class_weighted: false,
            weighting: ClassWeighting::Proportional,
        }
    }
}

impl SemiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            bail!(Config, "sharpening temperature must be positive, got {}", self.temperature);
        }
        if self.k_aug == 0 {
            bail!(Config, "k_aug must be at least 1");
        }
        if !(self.lambda_u >= 0.0) || !self.lambda_u.is_finite() {
            bail!(Config, "lambda_u must be finite and nonnegative, got {}", self.lambda_u);
        }
        if !(self.prior_weight >= 0.0) || !self.prior_weight.is_finite() {
            bail!(Config, "prior_weight must be finite and nonnegative, got {}", self.prior_weight);
        }
        if !(self.mix_alpha > 0.0) || !(self.mix_alpha_late > 0.0) {
            bail!(Config, "MixUp alphas must be positive");
        }
        if self.batch_size == 0 {
            bail!(Config, "batch size must be positive");
        }
        self.optimizer.validate()
    }

    pub fn alpha_at(&self, epoch: usize) -> f64 {
        let switch = self.alpha_switch_epoch.unwrap_or(self.total_epochs / 2);
        if epoch >= switch {
            self.mix_alpha_late
        } else {
            self.mix_alpha
        }
    }

    /// `λ_u · min(1, progress / ramp_epochs)`, progress measured in epochs.
    pub fn lambda_at(&self, progress: f64) -> f64 {
        if self.ramp_epochs == 0 {
            self.lambda_u
        } else {
            self.lambda_u * (progress / self.ramp_epochs as f64).clamp(0.0, 1.0)
        }
    }
}

/// `p_k^{1/T} / Σ_j p_j^{1/T}`.
pub fn sharpen(p: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        bail!(InvalidArgument, "temperature must be positive, got {temperature}");
    }
    let inv = 1.0 / temperature;
    // Scaling by the max first keeps the powers away from underflow.
    let max = p.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        bail!(InvalidArgument, "cannot sharpen an all-zero row");
    }
    let powered: Vec<f64> = p.iter().map(|&v| (v / max).powf(inv)).collect();
    let z: f64 = powered.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        bail!(InvalidArgument, "sharpening underflowed to an all-zero row");
    }
    Ok(powered.iter().map(|v| v / z).collect())
}

/// `k_aug` augmented copies of `x` and the sharpened mean prediction over
/// them. Returns `(copies, guesses)`; guesses are constants, not trained on.
pub fn guess_with_copies(
    net: &PartitionedNetwork,
    x: &Matrix,
    augmenter: &Augmenter,
    k_aug: usize,
    temperature: f64,
    rng: &mut SeededRng,
) -> Result<(Vec<Matrix>, Matrix)> {
    if k_aug == 0 {
        bail!(InvalidArgument, "k_aug must be at least 1");
    }
    let mut copies = Vec::with_capacity(k_aug);
    let mut mean = Matrix::zeros(x.rows(), net.num_classes());
    for _ in 0..k_aug {
        let xa = augmenter.augment(x, rng)?;
        mean.add_scaled(&net.predict_proba(&xa)?, 1.0 / k_aug as f64)?;
        copies.push(xa);
    }
    let mut guesses = Vec::with_capacity(mean.data().len());
    for row in mean.iter_rows() {
        guesses.extend(sharpen(row, temperature)?);
    }
    Ok((copies, Matrix::from_raw(x.rows(), net.num_classes(), guesses)))
}

/// Sharpened mean prediction over `k_aug` augmentations of each row of `x`.
pub fn guess_labels(
    net: &PartitionedNetwork,
    x: &Matrix,
    augmenter: &Augmenter,
    k_aug: usize,
    temperature: f64,
    rng: &mut SeededRng,
) -> Result<Matrix> {
    Ok(guess_with_copies(net, x, augmenter, k_aug, temperature, rng)?.1)
}

/// Convex combination with `λ' = max(λ, 1−λ)` on the first operand.
pub fn mix_with(lambda: f64, x1: &[f64], t1: &[f64], x2: &[f64], t2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let l = lambda.max(1.0 - lambda);
    let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| l * u + (1.0 - l) * v).collect();
    (mix(x1, x2), mix(t1, t2))
}

/// MixUp of two examples with `λ ~ Beta(α, α)`.
pub fn mixup_pair(
    x1: &[f64],
    t1: &[f64],
    x2: &[f64],
    t2: &[f64],
    mix_alpha: f64,
    rng: &mut SeededRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let lambda = sample_beta(mix_alpha, rng)?;
    Ok(mix_with(lambda, x1, t1, x2, t2))
}

/// Mixed inputs and soft targets; the first `labeled_rows` rows come from
/// labelled examples, the rest from unlabelled ones.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedBatch {
    pub inputs: Matrix,
    pub targets: Matrix,
    pub labeled_rows: usize,
    /// Effective mixing coefficient `λ'` of every row.
    pub lambdas: Vec<f64>,
    /// Optional per-row weights for the labelled term.
    pub labeled_weights: Option<Vec<f64>>,
}

impl MixedBatch {
    fn part(&self, labeled: bool) -> (Matrix, Matrix) {
        let range: Vec<usize> =
            if labeled { (0..self.labeled_rows).collect() } else { (self.labeled_rows..self.inputs.rows()).collect() };
        (self.inputs.select_rows(&range), self.targets.select_rows(&range))
    }

    /// Every target row lies on the simplex and every `λ' ≥ ½`.
    pub fn audit(&self) -> bool {
        self.lambdas.iter().all(|&l| l >= 0.5)
            && self.targets.iter_rows().all(|r| r.iter().all(|&v| v >= 0.0) && (r.iter().sum::<f64>() - 1.0).abs() < 1e-9)
    }
}

/// Assembles one MixMatch batch from labelled and unlabelled inputs.
#[allow(clippy::too_many_arguments)]
pub fn build_mixed_batch(
    net: &PartitionedNetwork,
    x_labeled: &Matrix,
    labels: &[usize],
    x_unlabeled: &Matrix,
    augmenter: &Augmenter,
    config: &SemiConfig,
    alpha: f64,
    rng: &mut SeededRng,
) -> Result<MixedBatch> {
    let k = net.num_classes();
    let xl = augmenter.augment(x_labeled, rng)?;
    let tl = one_hot(labels, k);
    let (mut xu, mut tu) = (Matrix::zeros(0, xl.cols()), Matrix::zeros(0, k));
    if x_unlabeled.rows() > 0 {
        let (copies, guesses) = guess_with_copies(net, x_unlabeled, augmenter, config.k_aug, config.temperature, rng)?;
        for c in &copies {
            xu = xu.vstack(c)?;
            tu = tu.vstack(&guesses)?;
        }
    }
    let all_x = xl.vstack(&xu)?;
    let all_t = tl.vstack(&tu)?;
    let order = rng.permutation(all_x.rows());
    let lambda = sample_beta(alpha, rng)?;
    let lambda = lambda.max(1.0 - lambda);
    let mut inputs = Vec::with_capacity(all_x.data().len());
    let mut targets = Vec::with_capacity(all_t.data().len());
    for (i, &j) in order.iter().enumerate() {
        let (x, t) = mix_with(lambda, all_x.row(i), all_t.row(i), all_x.row(j), all_t.row(j));
        inputs.extend(x);
        targets.extend(t);
    }
    Ok(MixedBatch {
        inputs: Matrix::from_vec(all_x.rows(), all_x.cols(), inputs)?,
        targets: Matrix::from_raw(all_t.rows(), k, targets),
        labeled_rows: xl.rows(),
        lambdas: vec![lambda; all_x.rows()],
        labeled_weights: None,
    })
}

/// Loss and gradients of `CE(labelled rows) + λ_eff · MSE(unlabelled rows)`,
/// each term averaged over its own rows. Returns `(total, ce, mse, grads)`.
pub fn mixmatch_gradients(
    net: &PartitionedNetwork,
    mixed: &MixedBatch,
    lambda_u: f64,
) -> Result<(f64, f64, f64, Gradients)> {
    let (xl, tl) = mixed.part(true);
    let cache = net.forward(&xl)?;
    let (ce, mut grads) =
        net.backward(&cache, Targets::Soft(&tl), LossKind::CrossEntropy, mixed.labeled_weights.as_deref())?;
    let mut mse = 0.0;
    if mixed.inputs.rows() > mixed.labeled_rows {
        let (xu, tu) = mixed.part(false);
        let cache = net.forward(&xu)?;
        let (l, g) = net.backward(&cache, Targets::Soft(&tu), LossKind::SquaredError, None)?;
        mse = l;
        if lambda_u != 0.0 {
            grads.add_scaled(&g, lambda_u)?;
        }
    }
    Ok((ce + lambda_u * mse, ce, mse, grads))
}

/// `CE(labelled rows) + λ_eff · MSE(unlabelled rows)`.
pub fn mixmatch_loss(net: &PartitionedNetwork, mixed: &MixedBatch, lambda_u: f64) -> Result<f64> {
    let (xl, tl) = mixed.part(true);
    let ce = net.loss(&xl, Targets::Soft(&tl), LossKind::CrossEntropy, mixed.labeled_weights.as_deref())?;
    if mixed.inputs.rows() == mixed.labeled_rows {
        return Ok(ce);
    }
    let (xu, tu) = mixed.part(false);
    Ok(ce + lambda_u * net.loss(&xu, Targets::Soft(&tu), LossKind::SquaredError, None)?)
}

/// `Σ_c π_c log(π_c / p̄_c)` for uniform `π` and the batch-mean prediction
/// `p̄`, with its gradient with respect to the logits behind `probs`.
pub fn uniform_prior_penalty(probs: &Matrix) -> (f64, Matrix) {
    let (n, k) = probs.shape();
    if n == 0 {
        return (0.0, Matrix::zeros(0, k));
    }
    let prior = 1.0 / k as f64;
    let mean: Vec<f64> = probs.column_sums().iter().map(|s| (s / n as f64).max(LOG_CLAMP)).collect();
    let value = mean.iter().map(|&m| prior * (prior / m).ln()).sum();
    // dL/dp_ic = -π_c / (n p̄_c), pushed through each row's softmax.
    let g: Vec<f64> = mean.iter().map(|&m| -prior / (n as f64 * m)).collect();
    let mut d = Vec::with_capacity(n * k);
    for row in probs.iter_rows() {
        let dot: f64 = row.iter().zip(&g).map(|(p, g)| p * g).sum();
        d.extend(row.iter().zip(&g).map(|(p, g)| p * (g - dot)));
    }
    (value, Matrix::from_raw(n, k, d))
}

/// Value and parameter gradients of [`uniform_prior_penalty`] on `x`.
pub fn prior_gradients(net: &PartitionedNetwork, x: &Matrix) -> Result<(f64, Gradients)> {
    let cache = net.forward(x)?;
    let (value, dlogits) = uniform_prior_penalty(&cache.probs);
    Ok((value, net.backward_logits(&cache, &dlogits)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiEpoch {
    pub epoch: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    /// Confident examples per noisy class.
    pub class_counts: Vec<usize>,
    pub labeled_loss: f64,
    pub unlabeled_loss: f64,
    pub prior_penalty: f64,
    pub lambda_u: f64,
    pub mix_alpha: f64,
    pub test_accuracy: Option<f64>,
    /// Every mixed batch of the epoch passed [`MixedBatch::audit`].
    pub batches_audited: bool,
}

/// Runs `total_epochs` of MixMatch training, re-extracting the confident
/// split from the current network before every epoch after the first.
pub fn train_semi(
    net: &mut PartitionedNetwork,
    split: &ConfidentSplit,
    data: &Dataset,
    config: &SemiConfig,
    augmenter: &Augmenter,
    eval: Option<&Dataset>,
    rng: &mut SeededRng,
) -> Result<Vec<SemiEpoch>> {
    config.validate()?;
    if split.labeled.is_empty() {
        bail!(Training, "semi-supervised stage needs at least one confident example");
    }
    let mut opt = OptimizerState::new(config.optimizer);
    let mut history = Vec::with_capacity(config.total_epochs);
    let mut split = split.clone();
    for epoch in 0..config.total_epochs {
        if epoch > 0 {
            split = extract_confident(net, data, augmenter, rng)?;
        }
        if split.labeled.is_empty() {
            bail!(Training, "no confident examples left at semi-supervised epoch {epoch}");
        }
        let weights = if config.class_weighted { Some(class_weights(&split, config.weighting)?) } else { None };
        opt.begin_epoch(epoch);
        let alpha = config.alpha_at(epoch);
        let mut labeled = split.labeled.clone();
        rng.shuffle(&mut labeled);
        let mut unlabeled = split.unlabeled.clone();
        rng.shuffle(&mut unlabeled);
        let mut u_cursor = 0;
        let n_batches = labeled.len().div_ceil(config.batch_size);
        let (mut sum_ce, mut sum_mse, mut sum_prior, mut audited) = (0.0, 0.0, 0.0, true);
        let mut lambda_eff = 0.0;
        for (b, idx) in labeled.chunks(config.batch_size).enumerate() {
            let mut u_idx = Vec::with_capacity(idx.len());
            while !unlabeled.is_empty() && u_idx.len() < idx.len() {
                if u_cursor == unlabeled.len() {
                    rng.shuffle(&mut unlabeled);
                    u_cursor = 0;
                }
                u_idx.push(unlabeled[u_cursor]);
                u_cursor += 1;
            }
            let y: Vec<usize> = idx.iter().map(|&i| data.noisy_labels[i]).collect();
            let mut mixed = build_mixed_batch(
                net,
                &data.features.select_rows(idx),
                &y,
                &data.features.select_rows(&u_idx),
                augmenter,
                config,
                alpha,
                rng,
            )?;
            if let Some(w) = &weights {
                mixed.labeled_weights = Some(y.iter().map(|&c| w[c]).collect());
            }
            audited &= mixed.audit();
            lambda_eff = config.lambda_at(epoch as f64 + b as f64 / n_batches as f64);
            let (_, ce, mse, mut grads) = mixmatch_gradients(net, &mixed, lambda_eff)?;
            if config.prior_weight > 0.0 {
                let (penalty, g) = prior_gradients(net, &mixed.inputs)?;
                grads.add_scaled(&g, config.prior_weight)?;
                sum_prior += penalty;
            }
            sum_ce += ce;
            sum_mse += mse;
            opt.step(net, &grads)?;
        }
        let test_accuracy = match eval {
            Some(t) => Some(net.accuracy(&t.features, &t.clean_labels)?),
            None => None,
        };
        history.push(SemiEpoch {
            epoch,
            labeled: split.labeled.len(),
            unlabeled: split.unlabeled.len(),
            class_counts: split.class_counts.clone(),
            labeled_loss: sum_ce / n_batches as f64,
            unlabeled_loss: sum_mse / n_batches as f64,
            prior_penalty: sum_prior / n_batches as f64,
            lambda_u: lambda_eff,
            mix_alpha: alpha,
            test_accuracy,
            batches_audited: audited,
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;
    use crate::model::Architecture;
    use crate::numerics::argmax;

    #[test]
    fn unit_temperature_is_identity() {
        let p = [0.2, 0.5, 0.3];
        let s = sharpen(&p, 1.0).unwrap();
        assert!(s.iter().zip(p).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn half_temperature_squares() {
        let s = sharpen(&[0.6, 0.4], 0.5).unwrap();
        assert!((s[0] - 0.36 / 0.52).abs() < 1e-12);
        assert!((s[1] - 0.16 / 0.52).abs() < 1e-12);
        assert!((s[0] - 0.6923).abs() < 1e-4);
        assert!(sharpen(&[0.0, 0.0], 0.5).is_err());
        assert!(sharpen(&[0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn forced_lambdas() {
        let (x, t) = mix_with(0.5, &[1.0, 3.0], &[1.0, 0.0], &[3.0, 5.0], &[0.0, 1.0]);
        assert_eq!(x, vec![2.0, 4.0]);
        assert_eq!(t, vec![0.5, 0.5]);
        let (x, t) = mix_with(0.3, &[10.0], &[1.0, 0.0], &[0.0], &[0.0, 1.0]);
        assert!((x[0] - 7.0).abs() < 1e-12);
        assert!((t[0] - 0.7).abs() < 1e-12 && (t[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn degenerate_guess_is_plain_prediction() {
        let ds = make_blobs(10, 4, 3, 2.0, &mut SeededRng::new(1)).unwrap();
        let net = Architecture::new(vec![8], vec![]).build(4, 3, &mut SeededRng::new(2)).unwrap();
        let g = guess_labels(&net, &ds.features, &Augmenter::identity(4), 1, 1.0, &mut SeededRng::new(3)).unwrap();
        let p = net.predict_proba(&ds.features).unwrap();
        assert!(g.data().iter().zip(p.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn guess_variance_shrinks_with_views() {
        let ds = make_blobs(30, 4, 3, 2.0, &mut SeededRng::new(4)).unwrap();
        let net = Architecture::new(vec![16], vec![]).build(4, 3, &mut SeededRng::new(5)).unwrap();
        let aug = Augmenter::jitter_for(&ds, 0.5);
        let x = ds.features.select_rows(&[0]);
        let mut rng = SeededRng::new(6);
        let var_for = |k: usize, rng: &mut SeededRng| {
            let s: Vec<f64> = (0..200).map(|_| guess_labels(&net, &x, &aug, k, 1.0, rng).unwrap().get(0, 0)).collect();
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64
        };
        let v1 = var_for(1, &mut rng);
        let v4 = var_for(4, &mut rng);
        assert!(v4 < v1, "{v1} {v4}");
    }

    fn fixture() -> (Dataset, PartitionedNetwork) {
        let ds = make_blobs(60, 4, 3, 2.0, &mut SeededRng::new(7)).unwrap();
        let net = Architecture::new(vec![8], vec![]).build(4, 3, &mut SeededRng::new(8)).unwrap();
        (ds, net)
    }

    #[test]
    fn mixed_batch_invariants() {
        let (ds, net) = fixture();
        let aug = Augmenter::jitter_for(&ds, 0.1);
        let cfg = SemiConfig::default();
        let l: Vec<usize> = (0..8).collect();
        let u: Vec<usize> = (8..16).collect();
        let labels: Vec<usize> = l.iter().map(|&i| ds.noisy_labels[i]).collect();
        let mixed = build_mixed_batch(
            &net,
            &ds.features.select_rows(&l),
            &labels,
            &ds.features.select_rows(&u),
            &aug,
            &cfg,
            4.0,
            &mut SeededRng::new(9),
        )
        .unwrap();
        assert_eq!(mixed.labeled_rows, 8);
        assert_eq!(mixed.inputs.rows(), 8 + 2 * 8);
        assert!(mixed.audit());
    }

    #[test]
    fn loss_reduces_without_unlabelled_term() {
        let (ds, net) = fixture();
        let aug = Augmenter::identity(4);
        let labels: Vec<usize> = ds.noisy_labels[..6].to_vec();
        let x = ds.features.select_rows(&(0..6).collect::<Vec<_>>());
        let mixed =
            build_mixed_batch(&net, &x, &labels, &Matrix::zeros(0, 4), &aug, &SemiConfig::default(), 4.0, &mut SeededRng::new(1))
                .unwrap();
        let ce = net.loss(&mixed.inputs, Targets::Soft(&mixed.targets), LossKind::CrossEntropy, None).unwrap();
        assert!((mixmatch_loss(&net, &mixed, 25.0).unwrap() - ce).abs() < 1e-15);

        let u = ds.features.select_rows(&(6..12).collect::<Vec<_>>());
        let mixed = build_mixed_batch(&net, &x, &labels, &u, &aug, &SemiConfig::default(), 4.0, &mut SeededRng::new(2)).unwrap();
        let (xl, tl) = mixed.part(true);
        let ce = net.loss(&xl, Targets::Soft(&tl), LossKind::CrossEntropy, None).unwrap();
        assert!((mixmatch_loss(&net, &mixed, 0.0).unwrap() - ce).abs() < 1e-15);
    }

    #[test]
    fn mixmatch_gradient_matches_finite_differences() {
        let (ds, net) = fixture();
        let aug = Augmenter::jitter_for(&ds, 0.1);
        let x = ds.features.select_rows(&[0, 1, 2, 3]);
        let u = ds.features.select_rows(&[4, 5, 6]);
        let labels: Vec<usize> = ds.noisy_labels[..4].to_vec();
        let mixed = build_mixed_batch(&net, &x, &labels, &u, &aug, &SemiConfig::default(), 4.0, &mut SeededRng::new(3)).unwrap();
        let lambda = 7.5;
        let (total, _, _, grads) = mixmatch_gradients(&net, &mixed, lambda).unwrap();
        assert!((total - mixmatch_loss(&net, &mixed, lambda).unwrap()).abs() < 1e-12);
        let h = 1e-5;
        for l in 0..net.num_layers() {
            let g = grads.layers[l].as_ref().unwrap();
            for idx in 0..g.weight.data().len() {
                let mut p = net.clone();
                let mut m = net.clone();
                p.layers_mut()[l].weight.data_mut()[idx] += h;
                m.layers_mut()[l].weight.data_mut()[idx] -= h;
                let fd = (mixmatch_loss(&p, &mixed, lambda).unwrap() - mixmatch_loss(&m, &mixed, lambda).unwrap()) / (2.0 * h);
                let a = g.weight.data()[idx];
                assert!((a - fd).abs() / (a.abs() + fd.abs()).max(1e-6) < 1e-4);
            }
        }
    }

    #[test]
    fn prior_penalty_gradient_matches_finite_differences() {
        let (ds, net) = fixture();
        let x = ds.features.select_rows(&[0, 1, 2, 3, 4]);
        let (value, grads) = prior_gradients(&net, &x).unwrap();
        assert!(value >= 0.0);
        let penalty = |n: &PartitionedNetwork| uniform_prior_penalty(&n.predict_proba(&x).unwrap()).0;
        let h = 1e-5;
        for l in 0..net.num_layers() {
            let g = grads.layers[l].as_ref().unwrap();
            for idx in 0..g.weight.data().len() {
                let mut p = net.clone();
                let mut m = net.clone();
                p.layers_mut()[l].weight.data_mut()[idx] += h;
                m.layers_mut()[l].weight.data_mut()[idx] -= h;
                let fd = (penalty(&p) - penalty(&m)) / (2.0 * h);
                let a = g.weight.data()[idx];
                assert!((a - fd).abs() / (a.abs() + fd.abs()).max(1e-6) < 1e-4, "{a} vs {fd}");
            }
        }
    }

    #[test]
    fn prior_penalty_vanishes_at_uniform_mean() {
        let probs = Matrix::from_rows(&[vec![0.7, 0.2, 0.1], vec![0.1, 0.7, 0.2], vec![0.2, 0.1, 0.7]]).unwrap();
        let (v, d) = uniform_prior_penalty(&probs);
        assert!(v.abs() < 1e-12);
        assert!(d.data().iter().all(|g| g.abs() < 1e-12));
        let skewed = Matrix::from_rows(&[vec![0.9, 0.05, 0.05]]).unwrap();
        assert!(uniform_prior_penalty(&skewed).0 > 0.0);
    }

    #[test]
    fn alpha_and_ramp_schedules() {
        let cfg = SemiConfig { total_epochs: 10, ramp_epochs: 4, lambda_u: 20.0, ..SemiConfig::default() };
        assert_eq!(cfg.alpha_at(4), 4.0);
        assert_eq!(cfg.alpha_at(5), 0.75);
        assert_eq!(cfg.lambda_at(0.0), 0.0);
        assert_eq!(cfg.lambda_at(2.0), 10.0);
        assert_eq!(cfg.lambda_at(9.0), 20.0);
        let flat = SemiConfig { ramp_epochs: 0, ..cfg };
        assert_eq!(flat.lambda_at(0.0), 20.0);
    }

    #[test]
    fn zero_epochs_leave_net_untouched() {
        let (ds, mut net) = fixture();
        let before = net.clone();
        let split = ConfidentSplit::from_predictions(&ds.noisy_labels, &ds.noisy_labels, 3);
        let cfg = SemiConfig { total_epochs: 0, ..SemiConfig::default() };
        let h = train_semi(&mut net, &split, &ds, &cfg, &Augmenter::identity(4), None, &mut SeededRng::new(0)).unwrap();
        assert!(h.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn empty_labelled_set_aborts() {
        let (ds, mut net) = fixture();
        let split = ConfidentSplit { labeled: vec![], unlabeled: (0..60).collect(), class_counts: vec![0; 3] };
        let err = train_semi(&mut net, &split, &ds, &SemiConfig::default(), &Augmenter::identity(4), None, &mut SeededRng::new(0));
        assert!(err.is_err());
    }

    #[test]
    fn supervised_mixup_when_nothing_unlabelled() {
        let (ds, mut net) = fixture();
        let mut split = ConfidentSplit::from_predictions(&ds.noisy_labels, &ds.noisy_labels, 3);
        split.unlabeled.clear();
        let cfg = SemiConfig { total_epochs: 1, lambda_u: 0.0, batch_size: 16, ..SemiConfig::default() };
        let before = net.clone();
        let h = train_semi(&mut net, &split, &ds, &cfg, &Augmenter::identity(4), None, &mut SeededRng::new(3)).unwrap();
        assert_eq!(h[0].unlabeled, 0);
        assert_eq!(h[0].unlabeled_loss, 0.0);
        assert!(h[0].batches_audited);
        assert_ne!(net, before);
    }

    #[test]
    fn sharpen_keeps_argmax_on_samples() {
        let mut rng = SeededRng::new(11);
        for _ in 0..1000 {
            let raw: Vec<f64> = (0..5).map(|_| rng.uniform() + 1e-3).collect();
            let z: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / z).collect();
            let t = 0.05 + 3.0 * rng.uniform();
            assert_eq!(argmax(&sharpen(&p, t).unwrap()), argmax(&p));
        }
    }
}
