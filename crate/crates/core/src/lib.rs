//! Calibration-aware ensemble fusion for semantic segmentation.
//!
//! The crate works on exported per-pixel class probabilities. It measures
//! how well each model's confidence matches its accuracy ([`calibration`]),
//! fuses several models' hard votes weighted by the inverse of their
//! calibration error ([`fusion`]), and scores masks against ground truth
//! ([`metrics`]). [`synth`] generates reproducible datasets for testing and
//! [`pipeline`] strings the stages together over a manifest.

pub mod calibration;
pub mod error;
pub mod exact;
pub mod fusion;
pub mod metrics;
pub mod overlay;
mod par;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tensor_store;

pub use error::{Error, Result};
