//! Dense f32/f64 compute with hand-written reverse-mode gradients.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
mod tensor;

use thiserror::Error;

pub use tensor::{
    clip_grad_norm, matmul, pack_grads, pack_values, unpack_values, HasParams, Parameter, Scalar,
    Tensor,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("{op}: expected {expected}, got {got}")]
    Shape {
        op: String,
        expected: String,
        got: String,
    },
    #[error("non-finite value produced by `{layer}`")]
    NonFinite { layer: String },
    #[error("optimizer misuse: {0}")]
    Usage(String),
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenRange { id: usize, vocab: usize },
}

pub(crate) fn shape_error(op: &str, expected: impl ToString, got: impl ToString) -> NumericError {
    NumericError::Shape {
        op: op.to_string(),
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

/// Fails with the layer name if any value is NaN or infinite.
pub fn ensure_finite<T: Scalar>(layer: &str, values: &[T]) -> Result<(), NumericError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumericError::NonFinite {
            layer: layer.to_string(),
        })
    }
}
