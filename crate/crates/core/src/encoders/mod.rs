//! Caption encoders `T: caption -> R^d`.

mod bow;
mod pooled;
mod shuffle;
mod table;
mod tokenizer;

use thiserror::Error;

use crate::numerics::NumericError;

pub use bow::{BowEncoder, PositionalBowEncoder};
pub use pooled::{PooledCache, PooledConfig, PooledEncoder};
pub use shuffle::{permutation, ShuffledEncoder};
pub use table::{EmbeddingTable, FileBackedEncoder, TableError};
pub use tokenizer::{Tokenizer, BOS, EOS, PAD, UNK};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("no embedding stored for caption id `{0}`")]
    MissingId(String),
    #[error("embedding has dimension {got}, expected {expected}")]
    Dim { expected: usize, got: usize },
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// A caption as encoders see it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caption<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

impl<'a> Caption<'a> {
    pub fn new(id: &'a str, text: &'a str) -> Caption<'a> {
        Caption { id, text }
    }
}

/// Maps a caption to a fixed-length vector. Implementations are
/// deterministic and safe to share across threads.
pub trait TextEncoder: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn encode(&self, caption: &Caption) -> Result<Vec<f32>, EncoderError>;

    fn encode_all(&self, captions: &[Caption]) -> Result<Vec<Vec<f32>>, EncoderError> {
        captions.iter().map(|c| self.encode(c)).collect()
    }
}

impl<E: TextEncoder + ?Sized> TextEncoder for Box<E> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn encode(&self, caption: &Caption) -> Result<Vec<f32>, EncoderError> {
        (**self).encode(caption)
    }

    fn encode_all(&self, captions: &[Caption]) -> Result<Vec<Vec<f32>>, EncoderError> {
        (**self).encode_all(captions)
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
