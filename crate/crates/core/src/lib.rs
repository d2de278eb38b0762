//! Toy-scale ICAS attention structure: gated style cross-attention,
//! residual structure injection, cyclic multi-content embedding, and
//! partial fine-tuning of a small denoising backbone.

pub mod content_cycling;
pub mod error;
pub mod files;
pub mod numerics;
pub mod pipeline;
pub mod structure_preservation;
pub mod style_injection;
pub mod synthdata;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{Tape, Tensor, Var};
pub use style_injection::Embedding;
