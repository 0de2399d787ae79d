//! Imitation of a multi-modal expert on a 2D trajectory task: behavior
//! cloning, adversarial imitation (GAIL) and its information-maximizing
//! variant with a latent-code posterior (InfoGAIL).
//!
//! Everything is plain `f64` on the CPU; networks, their gradients and the
//! trust-region solver are implemented here.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod sig17;
pub mod training;

pub use error::{Error, Result};
