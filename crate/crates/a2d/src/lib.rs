//! Attack-as-defense toolkit.
//!
//! Detects adversarial examples by measuring how cheap they are to attack:
//! iterative attacks run against an input yield a cost fingerprint
//! (iterations, queries), and statistical detectors (K-NN, Z-score,
//! ensembles) separate cheap-to-attack adversarial inputs from robust
//! benign ones. Includes an adaptive-attack evaluation harness
//! (confidence sweeps, autoencoder detector, PGD adversarial training).

pub mod attacks;
pub mod config;
pub mod data;
pub mod detectors;
pub mod error;
pub mod fingerprint;
pub mod hardening;
pub mod nn;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
