//! Dense linear algebra, seeded sampling and the loss/activation primitives
//! shared by every other module.

mod matrix;
mod ops;
mod rng;
mod sampling;

pub use matrix::{argmax, Matrix};
pub use ops::{accuracy, cross_entropy, one_hot, softmax_in_place, softmax_rows, Targets, LOG_CLAMP};
pub(crate) use ops::row_cross_entropy;
pub use rng::{derive_seed, SeededRng};
pub use sampling::{normal_cdf, normal_interval_mass, sample_beta, sample_categorical, sample_truncated_normal};
