//! Desk-scale pipeline for studying how floating-point non-determinism
//! affects the training of a convolutional surrogate of 2D acoustics.
//!
//! The crate is organised bottom-up:
//!
//! * [`lbm`] - D2Q9 lattice-Boltzmann solver producing acoustic density frames.
//! * [`dataset`] - simulation databases, rotation augmentation, normalisation, benchmarks.
//! * [`nn`] - precision-generic convolution, resampling, initialisation, Adam and the
//!   summation-order policy used to emulate non-deterministic reductions.
//! * [`msnet`] - the three-scale network and its L2 + gradient-difference loss.
//! * [`training`] - multi-run ensemble training with checkpoints.
//! * [`rollout`] - auto-regressive prediction with mean-preserving correction.
//! * [`analysis`] - deviation criterion, box plots and log-log regression.
//! * [`pipeline`] / [`cli`] - experiment configuration and the command-line driver.

pub mod analysis;
pub mod cli;
pub mod container;
pub mod dataset;
pub mod error;
pub mod lbm;
pub mod manifest;
pub mod msnet;
pub mod nn;
pub mod pipeline;
pub mod real;
pub mod rollout;
pub mod training;

pub use error::{Error, Result};
pub use real::{Precision, Real};
