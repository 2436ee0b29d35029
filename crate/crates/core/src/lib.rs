//! Multi-head attention with pluggable positional and segment encodings.
//!
//! Schemes covered: input-additive (learned and sinusoidal), DIET-ABS
//! (per-head low-rank absolute bias), DIET-REL (per-head relative scalar
//! bias), Shaw key-relative embeddings, T5-style bucketed bias, and DIET-ABS
//! on a Linformer-projected key/value path. Alongside the kernels the crate
//! ships a tiny trainable transformer with analytic gradients, rank and
//! gradient verifiers, heatmap exporters and a micro-benchmark harness.

pub mod analysis;
pub mod archive;
pub mod attention;
pub mod bench;
pub mod cli;
pub mod config;
pub mod encodings;
pub mod error;
pub mod model;
pub mod rng;
pub mod tensor;

pub use config::{AttentionConfig, PositionScheme, SchemeName, SegmentLocation, Sharing};
pub use error::{Error, Result};
pub use tensor::Matrix;
