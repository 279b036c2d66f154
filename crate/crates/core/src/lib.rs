//! Joint noisy-label supervised and contrastive training on a shared encoder.
//!
//! The crate is organised bottom-up: a small reverse-mode autodiff tape,
//! image datasets with label-noise injection, stochastic view augmentation,
//! an MLP encoder with classifier and projection heads, the three training
//! losses, the training loop, evaluation metrics and an experiment harness
//! driven by TOML configs.

pub mod augment;
pub mod autodiff;
pub mod color;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod harness;
pub mod losses;
pub mod model;
pub mod plot;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
