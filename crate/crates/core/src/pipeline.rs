//! End-to-end steps: build an encoder, embed a corpus, train a probe on one
//! corpus and score its decodes on another.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::{
    BowEncoder, Caption, EncoderError, PooledConfig, PooledEncoder, PositionalBowEncoder,
    ShuffledEncoder, TextEncoder, Tokenizer,
};
use crate::grammar::Prompt;
use crate::probe::{
    autoencode_train, decode_all, train_probe, AutoencoderTraining, BeamConfig, Conditioning,
    DecodeOutput, EncoderInfo, ProbeCheckpoint, ProbeConfig, ProbeError, ProbeTraining,
    TrainConfig,
};
use crate::textmetrics::{join, stratify, EvalReport, TextMetricsError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{count} caption(s) appear in both corpora, e.g. {example:?}")]
    Overlap { count: usize, example: String },
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Metrics(#[from] TextMetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    Bow,
    PositionalBow,
    /// Randomly initialised, untrained.
    Pooled,
    /// Trained as an autoencoder before probing.
    PooledAutoenc,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 4] = [
        EncoderKind::Bow,
        EncoderKind::PositionalBow,
        EncoderKind::Pooled,
        EncoderKind::PooledAutoenc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Bow => "bow",
            EncoderKind::PositionalBow => "positional-bow",
            EncoderKind::Pooled => "pooled",
            EncoderKind::PooledAutoenc => "pooled-autoenc",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EncoderKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown encoder `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSettings {
    pub kind: EncoderKind,
    pub dim: usize,
    /// Pooled encoders only.
    pub hidden: usize,
    pub layers: usize,
    pub seed: u64,
    /// Seed of the fixed dimension permutation applied to every embedding.
    pub shuffle: Option<u64>,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        EncoderSettings {
            kind: EncoderKind::PooledAutoenc,
            dim: 256,
            hidden: 256,
            layers: 1,
            seed: 0,
            shuffle: Some(0),
        }
    }
}

impl EncoderSettings {
    pub fn pooled(&self) -> PooledConfig {
        PooledConfig {
            dim: self.dim,
            hidden: self.hidden,
            layers: self.layers,
            seed: self.seed,
        }
    }
}

/// Probe architecture; the input width comes from the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSettings {
    pub hidden: usize,
    pub layers: usize,
    pub conditioning: Conditioning,
    pub seed: u64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        let c = ProbeConfig::new(1);
        ProbeSettings {
            hidden: c.hidden,
            layers: c.layers,
            conditioning: c.conditioning,
            seed: c.seed,
        }
    }
}

impl ProbeSettings {
    pub fn config(&self, input_dim: usize) -> ProbeConfig {
        ProbeConfig {
            input_dim,
            hidden: self.hidden,
            layers: self.layers,
            conditioning: self.conditioning,
            seed: self.seed,
        }
    }
}

pub fn texts(prompts: &[Prompt]) -> Vec<&str> {
    prompts.iter().map(|p| p.text.as_str()).collect()
}

/// Fails when a caption text occurs in both corpora.
pub fn check_disjoint(train: &[Prompt], eval: &[Prompt]) -> Result<(), PipelineError> {
    let held_out: HashSet<&str> = eval.iter().map(|p| p.text.as_str()).collect();
    let shared: Vec<&str> = train
        .iter()
        .map(|p| p.text.as_str())
        .filter(|t| held_out.contains(t))
        .collect();
    match shared.first() {
        None => Ok(()),
        Some(t) => Err(PipelineError::Overlap {
            count: shared.len(),
            example: t.to_string(),
        }),
    }
}

/// Trains a pooled encoder to reconstruct `texts` through a scratch decoder
/// shaped like the probe.
pub fn train_autoencoder(
    encoder: &EncoderSettings,
    tokenizer: &Tokenizer,
    texts: &[&str],
    decoder: &ProbeSettings,
    cfg: &TrainConfig,
) -> Result<AutoencoderTraining, ProbeError> {
    let pooled = PooledEncoder::new(encoder.pooled(), tokenizer.clone());
    autoencode_train(pooled, texts, decoder.config(encoder.dim), cfg)
}

/// The encoder a probe reads, with the dimension shuffle applied. Pooled
/// kinds use `trained` weights when given; `pooled-autoenc` requires them.
pub fn build_encoder(
    settings: &EncoderSettings,
    tokenizer: &Tokenizer,
    trained: Option<PooledEncoder<f32>>,
) -> Result<Box<dyn TextEncoder>, PipelineError> {
    let inner: Box<dyn TextEncoder> = match (settings.kind, trained) {
        (EncoderKind::Bow, _) => Box::new(BowEncoder::new(settings.seed, settings.dim)),
        (EncoderKind::PositionalBow, _) => {
            Box::new(PositionalBowEncoder::new(settings.seed, settings.dim))
        }
        (EncoderKind::Pooled | EncoderKind::PooledAutoenc, Some(enc)) => {
            if enc.config().dim != settings.dim {
                return Err(PipelineError::Config(format!(
                    "trained encoder has dim {}, settings ask for {}",
                    enc.config().dim,
                    settings.dim
                )));
            }
            Box::new(enc)
        }
        (EncoderKind::Pooled, None) => Box::new(PooledEncoder::<f32>::new(
            settings.pooled(),
            tokenizer.clone(),
        )),
        (EncoderKind::PooledAutoenc, None) => {
            return Err(PipelineError::Config(
                "pooled-autoenc needs a trained encoder".into(),
            ))
        }
    };
    Ok(match settings.shuffle {
        Some(seed) => Box::new(ShuffledEncoder::new(inner, seed)),
        None => inner,
    })
}

/// Row-major `[prompts, dim]` embeddings.
pub fn embed(encoder: &dyn TextEncoder, prompts: &[Prompt]) -> Result<Vec<f32>, EncoderError> {
    let captions: Vec<Caption> = prompts
        .iter()
        .map(|p| Caption::new(&p.id, &p.text))
        .collect();
    let rows = encoder.encode_all(&captions)?;
    let dim = encoder.dim();
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(EncoderError::Dim {
            expected: dim,
            got: bad.len(),
        });
    }
    Ok(rows.concat())
}

pub fn beam_config(cfg: &TrainConfig) -> BeamConfig {
    BeamConfig {
        beam: cfg.beam,
        max_len: cfg.max_len,
        length_norm: cfg.length_norm,
    }
}

/// Decodes `prompts` from their embeddings and scores the result.
pub fn evaluate(
    checkpoint: &ProbeCheckpoint,
    embeddings: &[f32],
    prompts: &[Prompt],
    beam: &BeamConfig,
) -> Result<(Vec<DecodeOutput>, EvalReport), PipelineError> {
    let ids: Vec<&str> = prompts.iter().map(|p| p.id.as_str()).collect();
    let decodes = decode_all(
        &checkpoint.model,
        &checkpoint.tokenizer,
        &ids,
        &texts(prompts),
        embeddings,
        beam,
    )?;
    let report = stratify(&join(prompts, &decodes)?)?;
    Ok((decodes, report))
}

#[derive(Debug, Clone)]
pub struct ProbeRun {
    pub training: ProbeTraining,
    pub decodes: Vec<DecodeOutput>,
    pub report: EvalReport,
}

/// Trains a fresh probe on `train` and evaluates it on `eval`.
#[allow(clippy::too_many_arguments)]
pub fn probe_and_evaluate(
    encoder: EncoderInfo,
    train_embeddings: &[f32],
    train: &[Prompt],
    eval_embeddings: &[f32],
    eval: &[Prompt],
    tokenizer: &Tokenizer,
    probe: &ProbeSettings,
    cfg: &TrainConfig,
) -> Result<ProbeRun, PipelineError> {
    let dim = encoder.dim;
    let training = train_probe(
        train_embeddings,
        encoder,
        &texts(train),
        tokenizer,
        probe.config(dim),
        cfg,
    )?;
    let (decodes, report) = evaluate(
        &training.checkpoint,
        eval_embeddings,
        eval,
        &beam_config(cfg),
    )?;
    Ok(ProbeRun {
        training,
        decodes,
        report,
    })
}
