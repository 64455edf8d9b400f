//! Next-click prediction over mobile UI screens.
//!
//! The crate bundles everything needed to study element-level click
//! prediction end to end:
//!
//! - [`types`]: the domain model (elements, screens, events, sequences) and
//!   the canonical JSONL event-log format.
//! - [`vh`]: view-hierarchy ingestion (actionability filter, text fallback,
//!   preorder flattening, screen hashing).
//! - [`synth`]: a seeded synthetic click-sequence generator with a known
//!   ground-truth click distribution, calibrated to realistic screen and
//!   timing statistics.
//! - [`nn`]: a minimal dense-tensor reverse-mode autodiff engine with the
//!   layers the model needs (embeddings, attention, Transformer blocks,
//!   Adam with warm-up/decay).
//! - [`embed`]: featurization of domain objects into model inputs.
//! - [`model`]: the hierarchical Transformer + neural-pointer click model.
//! - [`baselines`]: Recency / Frequency / Global Frequency / Logistic
//!   Regression / Naive Bayes reference predictors.
//! - [`train`]: splitting, example construction, and the training loop.
//! - [`eval`]: top-K accuracy, absolute/relative ranking, breakdowns,
//!   ablations, and report emission.
//! - [`pipeline`]: the end-to-end run (synthesize, train, evaluate, compare).
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `clickseq` binary for the equivalent command-line interface.

pub mod baselines;
pub mod config;
pub mod embed;
pub mod eval;
pub mod model;
pub mod murmur3;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod train;
pub mod types;
pub mod vh;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum ClickseqError {
    #[error("screen has no actionable elements")]
    EmptyScreen,
    #[error("history events are not in chronological order")]
    HistoryOutOfOrder,
    #[error("embedding id {id} out of range for table of size {size}")]
    IndexOutOfRange { id: usize, size: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cross-entropy target is masked out")]
    TargetMasked,
    #[error("target element missing from ranking")]
    TargetMissing,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("need at least {need} users, corpus has {have}")]
    TooFewUsers { need: usize, have: usize },
    #[error("training diverged at step {step}: loss is not finite")]
    Divergence { step: u64 },
    #[error("no checkpoint for variant {0}")]
    MissingCheckpoint(String),
    #[error("empty input")]
    EmptyInput,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Derives an independent sub-seed from a run seed and a purpose label.
/// Every source of randomness in a run fans out from one seed through this.
pub fn fan_out_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut buf = Vec::with_capacity(label.len() + 16);
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(label.as_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    murmur3::murmur3_x64_128(&buf, 0x9e37) as u64
}
