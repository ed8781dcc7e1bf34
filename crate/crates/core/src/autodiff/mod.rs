//! Minimal reverse-mode differentiation over rank-2 values, plus Adam.

mod adam;
mod matrix;
mod tape;

pub use adam::AdamState;
pub use matrix::Matrix;
pub use tape::{sigmoid, softmax_values, Activation, Elemwise, NodeId, Tape};
