//! Minimal dense-tensor reverse-mode autodiff and the neural building blocks
//! used by the click model: embedding tables, linear layers, layer norm,
//! multi-head attention, Transformer encoder blocks, dropout, masked softmax
//! cross-entropy, and Adam with a warm-up/decay schedule.
//!
//! Everything is generic over the float width: training runs in `f32`,
//! gradient checking in `f64`.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;

pub use params::{AdamConfig, LrSchedule, ParameterStore};
pub use tape::{Grads, Scalar, Tape, Var};
