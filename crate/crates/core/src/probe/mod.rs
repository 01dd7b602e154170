//! The recovery probe `P(x | T(x))`: a conditional decoder, its training
//! loop and beam-search decoding.

mod beam;
mod decode;
mod model;
mod train;

use thiserror::Error;

use crate::encoders::{EncoderError, PooledEncoder};
use crate::numerics::checkpoint::CheckpointError;
use crate::numerics::NumericError;

pub use beam::{beam_search, greedy, BeamConfig, Hypothesis, FIRST_EMITTABLE};
pub use decode::{decode_all, read_decodes, write_decodes, DecodeOutput};
pub use model::{
    BatchLoss, Conditioner, Conditioning, DecodeState, DecoderLayer, ProbeConfig, ProbeModel,
};
pub use train::{
    autoencode_train, describe, fit, load_encoder, mean_loss, save_encoder, split, train_probe,
    AutoencoderObjective, AutoencoderTraining, Diverged, EncoderInfo, EpochStats, Fit, FitError,
    Objective, ProbeCheckpoint, ProbeObjective, ProbeTraining, TrainConfig,
};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        last_good: Option<Box<ProbeCheckpoint>>,
    },
    #[error("non-finite autoencoder loss at epoch {epoch}, batch {batch}")]
    EncoderNonFinite {
        epoch: usize,
        batch: usize,
        last_good: Option<Box<PooledEncoder<f32>>>,
    },
}
