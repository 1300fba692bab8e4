//! Measuring and mitigating model-update regression in structured
//! prediction: flip metrics, ensembles, distillation and backward-congruent
//! re-ranking over dependency and intent/slot parsers.

pub mod decoding;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod mitigation;
pub mod scoring;
pub mod structures;
pub mod synth;

pub use error::{Error, Result};
