//! Minimal CPU tensor engine with reverse-mode differentiation.

pub mod attention;
pub mod conv;
pub mod tape;
pub mod tensor;

pub use tape::{Grads, Tape, Var};
pub use tensor::{Real, Tensor};
