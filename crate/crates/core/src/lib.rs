//! Contextual slot tagging for multi-turn dialogs.
//!
//! A shared LSTM tags each user utterance with IOB slot labels. Context comes
//! from two attended memories: one holding earlier user words, one holding the
//! system's slot requests as projected k-hot vectors.

pub mod autodiff;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod memory;
pub mod models;
pub mod rng;
pub mod slot_embed;

pub use error::{Error, Result};
