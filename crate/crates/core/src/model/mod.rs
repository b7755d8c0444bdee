//! Partitioned multilayer perceptron with exact backpropagation, part-level
//! freeze/re-initialise controls and SGD/Adam optimizers.

mod checkpoint;
mod network;
mod optim;

use serde::{Deserialize, Serialize};

pub use network::{
    Activation, DenseLayer, ForwardCache, Gradients, LayerGrad, LayerSpec, LossKind, PartitionedNetwork,
};
pub use optim::{CosineSchedule, OptimizerConfig, OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

use crate::error::Result;
use crate::numerics::SeededRng;

/// Hidden widths plus partition; input and output widths come from the data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    /// First layer index (0-based) of every part after the first.
    pub part_boundaries: Vec<usize>,
}

impl Default for Architecture {
    /// Four ReLU layers of width 64 and a linear head, in three parts:
    /// layers 1–2, layers 3–4, output.
    fn default() -> Self {
        Architecture { hidden: vec![64; 4], part_boundaries: vec![2, 4] }
    }
}

impl Architecture {
    pub fn new(hidden: Vec<usize>, part_boundaries: Vec<usize>) -> Self {
        Architecture { hidden, part_boundaries }
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn num_parts(&self) -> usize {
        self.part_boundaries.len() + 1
    }

    pub fn specs(&self, input_dim: usize, classes: usize) -> Vec<LayerSpec> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(classes);
        dims.windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == self.num_layers() { Activation::Identity } else { Activation::Relu };
                LayerSpec::new(w[0], w[1], act)
            })
            .collect()
    }

    pub fn validate(&self, input_dim: usize, classes: usize) -> Result<()> {
        network::validate_specs(&self.specs(input_dim, classes))?;
        network::validate_boundaries(self.num_layers(), &self.part_boundaries)
    }

    pub fn build(&self, input_dim: usize, classes: usize, rng: &mut SeededRng) -> Result<PartitionedNetwork> {
        PartitionedNetwork::new(&self.specs(input_dim, classes), &self.part_boundaries, rng)
    }
}

/// Builds a He-initialised network; see [`PartitionedNetwork::new`].
pub fn init_network(specs: &[LayerSpec], part_boundaries: &[usize], rng: &mut SeededRng) -> Result<PartitionedNetwork> {
    PartitionedNetwork::new(specs, part_boundaries, rng)
}
