#![allow(dead_code)]

use std::path::Path;

use pes_lab::harness::{DatasetSpec, ExperimentConfig, Mode};
use pes_lab::model::{Architecture, LossKind, PartitionedNetwork};
use pes_lab::noise::{NoiseKind, NoiseSpec};
use pes_lab::numerics::{Matrix, Targets};

/// Desk-scale blobs experiment with a two-part network, T = (30, 7).
pub fn desk_config(rate: f64, mode: Mode, out: &Path) -> ExperimentConfig {
    let noise = if rate == 0.0 { NoiseSpec::none() } else { NoiseSpec::new(NoiseKind::SymmetricExcl, rate) };
    let mut cfg = ExperimentConfig::new(noise, out);
    cfg.dataset = DatasetSpec::Blobs { n: 3000, n_test: 1000, d: 16, k: 3, separation: 4.5 };
    cfg.architecture = Architecture::new(vec![64; 4], vec![2]);
    cfg.pes.stage_epochs = vec![30, 7];
    cfg.mode = mode;
    cfg.seeds = vec![1, 2, 3, 4, 5];
    cfg
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn perturbed(net: &PartitionedNetwork, layer: usize, index: usize, delta: f64) -> PartitionedNetwork {
    let mut out = net.clone();
    let l = &mut out.layers_mut()[layer];
    let w = l.weight.data().len();
    if index < w {
        let mut data = l.weight.data().to_vec();
        data[index] += delta;
        l.weight = Matrix::from_vec(l.weight.rows(), l.weight.cols(), data).unwrap();
    } else {
        l.bias[index - w] += delta;
    }
    out
}

/// Largest relative error between backpropagated gradients and central
/// differences over every trainable parameter.
pub fn max_gradient_error(
    net: &PartitionedNetwork,
    x: &Matrix,
    targets: Targets<'_>,
    kind: LossKind,
    weights: Option<&[f64]>,
) -> f64 {
    let cache = net.forward(x).unwrap();
    let (_, grads) = net.backward(&cache, targets, kind, weights).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (l, g) in grads.layers.iter().enumerate() {
        let Some(g) = g else { continue };
        let analytic: Vec<f64> = g.weight.data().iter().chain(&g.bias).copied().collect();
        for (i, &a) in analytic.iter().enumerate() {
            let up = perturbed(net, l, i, h).loss(x, targets, kind, weights).unwrap();
            let down = perturbed(net, l, i, -h).loss(x, targets, kind, weights).unwrap();
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((a - fd).abs() / (a.abs() + fd.abs()).max(1e-6));
        }
    }
    worst
}

/// Run-log text with the wall-clock field removed.
pub fn without_wall_clock(text: &str) -> String {
    text.lines().filter(|l| !l.contains("wall_clock_seconds")).collect::<Vec<_>>().join("\n")
}
