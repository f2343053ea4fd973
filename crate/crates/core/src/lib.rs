//! Multi-disease prediction toolkit: population-based feature selection
//! (SEV-EB), a temporal-convolutional gated-recurrence classifier with
//! additive attention, and the evaluation machinery around them.
//!
//! Everything is seeded and deterministic: the same config, seed, and input
//! produce bit-identical models, metrics, and reports, including when
//! fitness evaluation runs in parallel.

pub mod dataio;
pub mod features;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod rng;
pub mod sev_eb;
