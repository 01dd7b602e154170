//! Layers with explicit forward and backward passes.
//!
//! Activations are flat row-major slices with an explicit row count.
//! Backward passes accumulate into parameter gradients and into the
//! input-gradient buffers they are handed.

mod attention;
mod embedding;
mod gru;
mod layernorm;
mod linear;
mod loss;

pub use attention::{AttentionCache, CrossAttention};
pub use embedding::Embedding;
pub use gru::{GruCache, GruCell};
pub use layernorm::{LayerNorm, LayerNormCache};
pub use linear::Linear;
pub use loss::{log_softmax_row, softmax_cross_entropy};
