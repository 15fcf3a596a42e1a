//! Per-user like/dislike recommenders built from small feed-forward networks
//! trained on item features, plus a classical regularized matrix-factorization
//! baseline for side-by-side comparison.
//!
//! The crate is organised bottom-up:
//!
//! - [`matrix`] — dense row-major `f64` matrices and vectors; the only
//!   numerical substrate, no external linear-algebra dependency.
//! - [`dataset`] — ratings/feature-file loading, rating binarization, and
//!   feature preprocessing with replayable per-column statistics.
//! - [`classical`] — the coupled matrix-factorization baseline: squared-error
//!   fit of raw ratings with simultaneous gradient descent over both factors.
//! - [`perceptron`] — network topology, activations, forward propagation, and
//!   the cross-entropy cost.
//! - [`training`] — weight initialisation, back-propagation, numerical
//!   gradients, gradient checking, and the three descent modes.
//! - [`tuning`] — deterministic grid and random hyperparameter search over a
//!   holdout split.
//! - [`recommender`] — the per-user pipeline: example assembly, training,
//!   scoring, ranked recommendation, and lossless model persistence.
//!
//! Every random choice in the crate flows from an explicit 64-bit seed through
//! the derivations in [`rng`], so that identical inputs and seeds reproduce
//! results bit-for-bit.

pub mod classical;
pub mod dataset;
pub mod error;
pub mod matrix;
pub mod perceptron;
pub mod recommender;
pub mod rng;
pub mod training;
pub mod tuning;

pub use error::{Error, Result};
