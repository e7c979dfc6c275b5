//! Core algorithms for studying the top-down generative dynamics of a
//! Restricted Boltzmann Machine trained on handwritten digits.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. It holds no IO: datasets arrive as in-memory [`dataset::Image`]s,
//! models are plain parameter containers, and every random draw comes from an
//! explicit [`rng::Stream`].
//!
//! Module map:
//! - [`dataset`], [`augment`]: images, splits, non-digit augmentation, resizing, batching
//! - [`rbm`]: the energy model, conditional sampling and CD-1 training
//! - [`biasing`]: linear hidden→label readout, its inversion, chimera hidden states
//! - [`generation`]: top-down sampling trajectories
//! - [`classifier`]: the 11-class convolutional evaluator
//! - [`metrics`], [`stats`]: generativity metrics and the statistical tests

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod augment;
pub mod biasing;
pub mod classifier;
pub mod dataset;
mod error;
pub mod generation;
pub mod linalg;
pub mod metrics;
pub mod rbm;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};

/// Number of classifier classes: digits 0–9 plus the non-digit class.
pub const CLASS_COUNT: usize = 11;

/// Label of the non-digit class.
pub const NON_DIGIT: u8 = 10;

/// Number of digit classes.
pub const DIGIT_COUNT: usize = 10;
