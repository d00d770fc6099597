//! Gradient inversion attacks on federated-learning gradients via
//! gradient-guided diffusion sampling, plus defenses, the reconstruction
//! vulnerability metric and empirical checks of the attack's theory.

pub mod analysis;
pub mod attack;
pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod defense;
pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod models;
pub mod rng;
pub mod tensor;
pub mod validate;
pub mod vulnerability;

pub use error::{Error, Result};
pub use tensor::Tensor;
