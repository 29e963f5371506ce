//! Tiny transformer for 5-class heartbeat classification on single-lead ECG.
//!
//! The crate covers the whole chain: WFDB record ingestion ([`signal_io`]),
//! denoising and QRS detection ([`dsp`]), beat segmentation and noise
//! augmentation ([`dataset`]), the float model and its complexity estimators
//! ([`model`]), training with exact analytic gradients ([`training`]),
//! 8-bit integer-only inference with quantization-aware fine-tuning
//! ([`quant`]) and the evaluation harness ([`eval`]).

pub mod config;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod model;
pub mod quant;
mod seeding;
pub mod signal_io;
pub mod training;

pub use error::{Error, Result};
