//! Bilingual multi-speaker conversation translation.
//!
//! Two sentence-level attentional GRU encoder-decoders (one per
//! translation direction) extended with source-side, target-side and dual
//! conversation-history context, plus the corpus pipeline, training,
//! decoding and evaluation around them.

pub mod context;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod nmt;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
