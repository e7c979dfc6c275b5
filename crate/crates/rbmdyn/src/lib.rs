//! Experiment runner around `rbmdyn-core`: MNIST IDX loading, model files,
//! configuration, cached training stages, analysis and reports.

use std::sync::atomic::{AtomicBool, Ordering};

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod idx;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use error::{AppError, Result};

static QUIET: AtomicBool = AtomicBool::new(false);

pub fn set_quiet(quiet: bool) {
    QUIET.store(quiet, Ordering::Relaxed);
}

/// Progress line on stderr.
pub fn note(msg: &str) {
    if !QUIET.load(Ordering::Relaxed) {
        eprintln!("[rbmdyn] {msg}");
    }
}
