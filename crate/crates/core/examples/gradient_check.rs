//! Compare backpropagated gradients with central finite differences on a
//! small ReLU network, with one part frozen.
//!
//!     cargo run --example gradient_check

use pes_lab::model::{Activation, LayerSpec, LossKind, PartitionedNetwork};
use pes_lab::numerics::{Matrix, SeededRng, Targets};

fn main() -> pes_lab::Result<()> {
    let mut rng = SeededRng::new(3);
    let specs = [
        LayerSpec::new(4, 8, Activation::Relu),
        LayerSpec::new(8, 8, Activation::Relu),
        LayerSpec::new(8, 3, Activation::Identity),
    ];
    let mut net = PartitionedNetwork::new(&specs, &[1], &mut rng)?;
    for layer in net.layers_mut() {
        layer.bias.iter_mut().for_each(|b| *b = 0.3 * rng.normal());
    }
    net.set_frozen(1);

    let x = Matrix::from_vec(6, 4, (0..24).map(|_| rng.normal()).collect())?;
    let y: Vec<usize> = (0..6).map(|_| rng.below(3)).collect();
    let targets = Targets::Labels(&y);
    let cache = net.forward(&x)?;
    let (loss, grads) = net.backward(&cache, targets, LossKind::CrossEntropy, None)?;
    println!("loss {loss:.6}");

    let h = 1e-5;
    for (l, g) in grads.layers.iter().enumerate() {
        let Some(g) = g else {
            println!("layer {}: frozen, no gradient", l + 1);
            continue;
        };
        let mut worst: f64 = 0.0;
        for i in 0..g.bias.len() {
            let mut up = net.clone();
            up.layers_mut()[l].bias[i] += h;
            let mut down = net.clone();
            down.layers_mut()[l].bias[i] -= h;
            let fd = (up.loss(&x, targets, LossKind::CrossEntropy, None)?
                - down.loss(&x, targets, LossKind::CrossEntropy, None)?)
                / (2.0 * h);
            worst = worst.max((g.bias[i] - fd).abs() / (g.bias[i].abs() + fd.abs()).max(1e-8));
        }
        println!("layer {}: max relative bias-gradient error {worst:.2e}", l + 1);
    }
    Ok(())
}
