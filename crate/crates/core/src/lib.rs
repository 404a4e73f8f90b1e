//! Hierarchical attention (Ham-V, Ham-S) and the attention mechanisms it
//! generalizes, on top of a small dense tensor type and a tape-based
//! reverse-mode autodiff engine. Also hosts a desk-scale GRU
//! encoder-decoder with a Ham connector, training utilities, BLEU scoring
//! and synthetic sequence tasks.

pub mod attention;
pub mod autodiff;
pub mod checks;
pub mod data;
pub mod error;
pub mod eval;
pub mod ham;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
