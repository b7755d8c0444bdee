//! Learning with noisy labels through progressive early stopping.
//!
//! A network is split into parts. The whole network is trained briefly on
//! noisy labels, then each later part is re-initialised and retrained on top
//! of the frozen earlier parts with a shrinking epoch budget. The resulting
//! classifier selects confident examples, which seed a weighted supervised
//! refinement or a MixMatch-style semi-supervised stage.
//!
//! The crate also ships the three synthetic label-noise families used to
//! benchmark these methods and a layer-wise noise-sensitivity probe.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
pub mod data;
pub mod noise;

pub use data::Dataset;
pub mod pes;
pub mod train;
pub mod confident;
pub mod semi;
pub mod plot;
pub mod profiler;
pub mod harness;
pub mod cli;
