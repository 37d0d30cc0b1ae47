//! Random residual networks of fixed width and their infinite-depth limits.
//!
//! The crate simulates the bias-free residual recursion
//! `Y_l = Y_{l-1} + L^{-1/2} W_l phi(Y_{l-1})` with Gaussian weights, the
//! diffusion `dX_t = n^{-1/2} |phi(X_t)| dB_t` it converges to, and the
//! closed-form laws that hold for special activations (geometric Brownian
//! motion for ReLU at width one, Ornstein-Uhlenbeck for an erfi-based
//! activation, quasi-log-normal post-activation norms at general width).
//!
//! Every random quantity is drawn from an [`RngStream`] addressed by a root
//! seed and a path of labels, so Monte Carlo runs are reproducible
//! regardless of how samples are scheduled across threads.

pub mod activations;
pub mod error;
pub mod experiments;
pub mod export;
pub mod numerics;
pub mod resnet;
pub mod sde;
pub mod stats;
pub mod theory;

pub use activations::Activation;
pub use error::{Error, Result};
pub use numerics::rng::RngStream;
pub use numerics::DenseMatrix;
pub use stats::MonteCarloSummary;
