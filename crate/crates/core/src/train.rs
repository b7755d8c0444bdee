//! Mini-batch training loop shared by every stage.

use crate::error::Result;
use crate::model::{LossKind, OptimizerState, PartitionedNetwork};
use crate::numerics::{derive_seed, Matrix, SeededRng, Targets};

/// Owned counterpart of [`Targets`] for gathered mini-batches.
#[derive(Clone, Debug)]
pub enum BatchTargets {
    Labels(Vec<usize>),
    Soft(Matrix),
}

impl BatchTargets {
    pub fn gather(targets: Targets<'_>, idx: &[usize]) -> Self {
        match targets {
            Targets::Labels(l) => BatchTargets::Labels(idx.iter().map(|&i| l[i]).collect()),
            Targets::Soft(m) => BatchTargets::Soft(m.select_rows(idx)),
        }
    }

    pub fn as_targets(&self) -> Targets<'_> {
        match self {
            BatchTargets::Labels(l) => Targets::Labels(l),
            BatchTargets::Soft(m) => Targets::Soft(m),
        }
    }
}

/// Visiting order for 0-based `epoch`: a permutation keyed by `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    SeededRng::new(derive_seed(seed, epoch as u64)).permutation(n)
}

/// Consecutive chunks of `order` of at most `batch_size` indices.
pub fn batches(order: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(batch_size.max(1))
}

/// One forward/backward/update on the rows `idx`. Returns the batch loss
/// measured before the update.
pub fn train_step(
    net: &mut PartitionedNetwork,
    opt: &mut OptimizerState,
    x: &Matrix,
    targets: Targets<'_>,
    weights: Option<&[f64]>,
    idx: &[usize],
) -> Result<f64> {
    let xb = x.select_rows(idx);
    let tb = BatchTargets::gather(targets, idx);
    let wb: Option<Vec<f64>> = weights.map(|w| idx.iter().map(|&i| w[i]).collect());
    let cache = net.forward(&xb)?;
    let (loss, grads) = net.backward(&cache, tb.as_targets(), LossKind::CrossEntropy, wb.as_deref())?;
    opt.step(net, &grads)?;
    Ok(loss)
}

/// Runs `epochs` shuffled passes of mini-batch cross-entropy training and
/// calls `after_epoch(epoch, mean_loss, net)` once per pass. Returns the
/// per-epoch mean training loss.
#[allow(clippy::too_many_arguments)]
pub fn train_epochs(
    net: &mut PartitionedNetwork,
    opt: &mut OptimizerState,
    x: &Matrix,
    targets: Targets<'_>,
    weights: Option<&[f64]>,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    mut after_epoch: impl FnMut(usize, f64, &PartitionedNetwork) -> Result<()>,
) -> Result<Vec<f64>> {
    let n = x.rows();
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        opt.begin_epoch(epoch);
        let order = epoch_order(seed, epoch, n);
        let mut total = 0.0;
        for idx in batches(&order, batch_size) {
            total += train_step(net, opt, x, targets, weights, idx)? * idx.len() as f64;
        }
        let mean = if n == 0 { 0.0 } else { total / n as f64 };
        losses.push(mean);
        after_epoch(epoch, mean, net)?;
    }
    Ok(losses)
}
