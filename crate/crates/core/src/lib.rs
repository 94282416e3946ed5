//! Block Hadamard rotations, mass-diffusion permutations and few-bit
//! quantizers, with checks of worst-case and probabilistic outlier bounds.

pub mod analysis;
pub mod data;
pub mod error;
pub mod hadamard;
pub mod permutation;
pub mod qgraph;
pub mod quant;
pub mod seed;

pub use data::{ActivationSet, BlockView, Matrix};
pub use error::{Error, Result};
