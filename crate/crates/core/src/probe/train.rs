use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::model::{BatchLoss, ProbeConfig, ProbeModel};
use super::ProbeError;
use crate::encoders::{permutation, PooledEncoder, Tokenizer};
use crate::numerics::checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
use crate::numerics::optim::{Optimizer, OptimizerConfig, OptimizerKind};
use crate::numerics::{clip_grad_norm, HasParams, NumericError, Parameter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub val_fraction: f64,
    pub max_len: usize,
    pub beam: usize,
    pub length_norm: bool,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 10,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            val_fraction: 0.1,
            max_len: 24,
            beam: 5,
            length_norm: true,
            clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |m: &str| Err(ProbeError::Config(m.to_string()));
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must be in (0, 1)");
        }
        if self.beam == 0 {
            return bad("beam width must be at least 1");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    fn optimizer_config(&self) -> OptimizerConfig {
        match self.optimizer {
            OptimizerKind::Adam => OptimizerConfig::adam(self.lr),
            OptimizerKind::AdafactorLite => OptimizerConfig::adafactor(self.lr),
        }
    }
}

/// Seeded train/validation split of `0..n`.
pub fn split(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let perm = permutation(seed, n);
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n.saturating_sub(1));
    let mut val = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// One quantity minimized by [`fit`]: a model plus the data it reads.
pub trait Objective: HasParams<f32> + Clone {
    /// Accumulates gradients of the mean token loss over `batch`.
    fn train_step(&mut self, batch: &[usize]) -> Result<BatchLoss, NumericError>;
    fn eval(&self, batch: &[usize]) -> Result<BatchLoss, NumericError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Fit<O> {
    pub best: O,
    /// 1-based epoch whose parameters `best` holds.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Validation loss of the untrained model.
    pub initial_val_loss: f64,
    pub history: Vec<EpochStats>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Training stopped on a non-finite loss.
#[derive(Debug, Clone)]
pub struct Diverged<O> {
    pub epoch: usize,
    pub batch: usize,
    /// Best parameters seen before divergence, if any epoch completed.
    pub last_good: Option<(O, usize, f64)>,
}

pub enum FitError<O> {
    Numeric(NumericError),
    Diverged(Diverged<O>),
}

impl<O> From<NumericError> for FitError<O> {
    fn from(e: NumericError) -> Self {
        FitError::Numeric(e)
    }
}

pub fn mean_loss<O: Objective>(
    obj: &O,
    indices: &[usize],
    batch: usize,
) -> Result<f64, NumericError> {
    let mut total = 0.0;
    let mut tokens = 0;
    for chunk in indices.chunks(batch.max(1)) {
        let l = obj.eval(chunk)?;
        total += l.total;
        tokens += l.tokens;
    }
    Ok(total / tokens.max(1) as f64)
}

/// Mini-batch training over examples `0..n` with a held-out split. Keeps
/// the parameters of the epoch with the lowest validation loss.
pub fn fit<O: Objective>(mut obj: O, n: usize, cfg: &TrainConfig) -> Result<Fit<O>, FitError<O>> {
    let (train, val) = split(n, cfg.val_fraction, cfg.seed);
    let mut optimizer = Optimizer::new(cfg.optimizer_config());
    optimizer.init(&obj.params());
    let initial_val_loss = mean_loss(&obj, &val, cfg.batch_size)?;
    let mut best: Option<(O, usize, f64)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let order = permutation(
            cfg.seed
                .wrapping_add(epoch as u64)
                .wrapping_mul(0x9e37_79b9),
            train.len(),
        );
        let mut total = 0.0;
        let mut tokens = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<usize> = chunk.iter().map(|&i| train[i]).collect();
            obj.zero_grad();
            let loss = obj.train_step(&batch)?;
            let grads_finite = obj.params().iter().all(|p| p.grad.all_finite());
            if !loss.total.is_finite() || !grads_finite {
                return Err(FitError::Diverged(Diverged {
                    epoch,
                    batch: b,
                    last_good: best,
                }));
            }
            total += loss.total;
            tokens += loss.tokens;
            let mut params = obj.params_mut();
            if let Some(max) = cfg.clip_norm {
                clip_grad_norm(&mut params, max);
            }
            optimizer.step(&mut params)?;
        }
        let val_loss = mean_loss(&obj, &val, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(FitError::Diverged(Diverged {
                epoch,
                batch: usize::MAX,
                last_good: best,
            }));
        }
        history.push(EpochStats {
            epoch,
            train_loss: total / tokens.max(1) as f64,
            val_loss,
        });
        if best.as_ref().is_none_or(|(_, _, v)| val_loss < *v) {
            best = Some((obj.clone(), epoch, val_loss));
        }
    }
    let (best, best_epoch, best_val_loss) = best.expect("at least one epoch");
    Ok(Fit {
        best,
        best_epoch,
        best_val_loss,
        initial_val_loss,
        history,
        train_indices: train,
        val_indices: val,
    })
}

/// A probe on fixed embeddings.
#[derive(Debug, Clone)]
pub struct ProbeObjective<'a> {
    pub model: ProbeModel<f32>,
    pub embeddings: &'a [f32],
    pub seqs: &'a [Vec<usize>],
}

impl ProbeObjective<'_> {
    fn gather(&self, batch: &[usize]) -> (Vec<f32>, Vec<Vec<usize>>) {
        let d = self.model.config().input_dim;
        let emb = batch
            .iter()
            .flat_map(|&i| self.embeddings[i * d..(i + 1) * d].iter().copied())
            .collect();
        (emb, batch.iter().map(|&i| self.seqs[i].clone()).collect())
    }
}

impl HasParams<f32> for ProbeObjective<'_> {
    fn params(&self) -> Vec<&Parameter<f32>> {
        self.model.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<f32>> {
        self.model.params_mut()
    }
}

impl Objective for ProbeObjective<'_> {
    fn train_step(&mut self, batch: &[usize]) -> Result<BatchLoss, NumericError> {
        let (emb, seqs) = self.gather(batch);
        Ok(self.model.train_batch(&emb, &seqs, false)?.0)
    }

    fn eval(&self, batch: &[usize]) -> Result<BatchLoss, NumericError> {
        let (emb, seqs) = self.gather(batch);
        self.model.loss(&emb, &seqs)
    }
}

/// Encoder and scratch decoder trained jointly to reconstruct the input.
#[derive(Debug, Clone)]
pub struct AutoencoderObjective<'a> {
    pub encoder: PooledEncoder<f32>,
    pub decoder: ProbeModel<f32>,
    pub seqs: &'a [Vec<usize>],
}

impl HasParams<f32> for AutoencoderObjective<'_> {
    fn params(&self) -> Vec<&Parameter<f32>> {
        let mut ps = self.encoder.params();
        ps.extend(self.decoder.params());
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<f32>> {
        let mut ps = self.encoder.params_mut();
        ps.extend(self.decoder.params_mut());
        ps
    }
}

impl Objective for AutoencoderObjective<'_> {
    fn train_step(&mut self, batch: &[usize]) -> Result<BatchLoss, NumericError> {
        let seqs: Vec<Vec<usize>> = batch.iter().map(|&i| self.seqs[i].clone()).collect();
        let (emb, cache) = self.encoder.forward(&seqs)?;
        let (loss, demb) = self.decoder.train_batch(&emb, &seqs, true)?;
        self.encoder.backward(&cache, &demb.expect("requested"));
        Ok(loss)
    }

    fn eval(&self, batch: &[usize]) -> Result<BatchLoss, NumericError> {
        let seqs: Vec<Vec<usize>> = batch.iter().map(|&i| self.seqs[i].clone()).collect();
        let emb = self.encoder.encode_ids(&seqs)?;
        self.decoder.loss(&emb, &seqs)
    }
}

/// Which encoder produced the embeddings a probe was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderInfo {
    pub name: String,
    pub dim: usize,
}

/// A trained probe with everything needed to decode and audit it.
#[derive(Debug, Clone)]
pub struct ProbeCheckpoint {
    pub model: ProbeModel<f32>,
    pub tokenizer: Tokenizer,
    pub train: TrainConfig,
    pub encoder: EncoderInfo,
    pub val_loss: f64,
    pub epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct ProbeMeta {
    kind: String,
    probe: ProbeConfig,
    vocab: usize,
    tokenizer: Tokenizer,
    train: TrainConfig,
    encoder: EncoderInfo,
    val_loss: f64,
    epoch: usize,
}

impl ProbeCheckpoint {
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let meta = ProbeMeta {
            kind: "probe".into(),
            probe: *self.model.config(),
            vocab: self.model.vocab(),
            tokenizer: self.tokenizer.clone(),
            train: self.train,
            encoder: self.encoder.clone(),
            val_loss: self.val_loss,
            epoch: self.epoch,
        };
        let file = BufWriter::new(fs::File::create(path)?);
        write_checkpoint(file, &self.model.params(), &serde_json::to_value(meta)?)
    }

    pub fn load(path: &Path) -> Result<ProbeCheckpoint, CheckpointError> {
        let ckpt = read_checkpoint(BufReader::new(fs::File::open(path)?))?;
        let meta: ProbeMeta = serde_json::from_value(ckpt.meta.clone())?;
        if meta.kind != "probe" {
            return Err(CheckpointError::Mismatch(format!(
                "expected a probe checkpoint, found `{}`",
                meta.kind
            )));
        }
        let mut model = ProbeModel::new(meta.probe, meta.vocab);
        ckpt.load_into(&mut model.params_mut())?;
        Ok(ProbeCheckpoint {
            model,
            tokenizer: meta.tokenizer,
            train: meta.train,
            encoder: meta.encoder,
            val_loss: meta.val_loss,
            epoch: meta.epoch,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct EncoderMeta {
    kind: String,
    config: crate::encoders::PooledConfig,
    tokenizer: Tokenizer,
    val_loss: f64,
    epoch: usize,
}

/// Saves a trained pooled encoder.
pub fn save_encoder(
    encoder: &PooledEncoder<f32>,
    val_loss: f64,
    epoch: usize,
    path: &Path,
) -> Result<(), CheckpointError> {
    let meta = EncoderMeta {
        kind: "pooled_encoder".into(),
        config: *encoder.config(),
        tokenizer: encoder.tokenizer().clone(),
        val_loss,
        epoch,
    };
    let file = BufWriter::new(fs::File::create(path)?);
    write_checkpoint(file, &encoder.params(), &serde_json::to_value(meta)?)
}

pub fn load_encoder(path: &Path) -> Result<PooledEncoder<f32>, CheckpointError> {
    let ckpt = read_checkpoint(BufReader::new(fs::File::open(path)?))?;
    let meta: EncoderMeta = serde_json::from_value(ckpt.meta.clone())?;
    if meta.kind != "pooled_encoder" {
        return Err(CheckpointError::Mismatch(format!(
            "expected a pooled encoder checkpoint, found `{}`",
            meta.kind
        )));
    }
    let mut encoder = PooledEncoder::new(meta.config, meta.tokenizer);
    ckpt.load_into(&mut encoder.params_mut())?;
    Ok(encoder)
}

/// Outcome of probe training.
#[derive(Debug, Clone)]
pub struct ProbeTraining {
    pub checkpoint: ProbeCheckpoint,
    pub initial_val_loss: f64,
    pub history: Vec<EpochStats>,
    pub val_indices: Vec<usize>,
}

/// Trains a fresh probe on fixed embeddings (`[n, dim]`, row `i` encoding
/// `texts[i]`).
pub fn train_probe(
    embeddings: &[f32],
    encoder: EncoderInfo,
    texts: &[&str],
    tokenizer: &Tokenizer,
    probe: ProbeConfig,
    cfg: &TrainConfig,
) -> Result<ProbeTraining, ProbeError> {
    cfg.validate()?;
    if probe.input_dim != encoder.dim || embeddings.len() != texts.len() * encoder.dim {
        return Err(ProbeError::Config(format!(
            "{} texts with {}-dim embeddings need {} values, got {} (probe input {})",
            texts.len(),
            encoder.dim,
            texts.len() * encoder.dim,
            embeddings.len(),
            probe.input_dim
        )));
    }
    if texts.len() < 2 {
        return Err(ProbeError::Config(
            "need at least two training captions".into(),
        ));
    }
    let seqs: Vec<Vec<usize>> = texts.iter().map(|t| tokenizer.encode(t)).collect();
    let obj = ProbeObjective {
        model: ProbeModel::new(probe, tokenizer.len()),
        embeddings,
        seqs: &seqs,
    };
    let to_checkpoint = |model: ProbeModel<f32>, epoch, val_loss| ProbeCheckpoint {
        model,
        tokenizer: tokenizer.clone(),
        train: *cfg,
        encoder: encoder.clone(),
        val_loss,
        epoch,
    };
    match fit(obj, texts.len(), cfg) {
        Ok(f) => Ok(ProbeTraining {
            checkpoint: to_checkpoint(f.best.model, f.best_epoch, f.best_val_loss),
            initial_val_loss: f.initial_val_loss,
            history: f.history,
            val_indices: f.val_indices,
        }),
        Err(FitError::Numeric(e)) => Err(e.into()),
        Err(FitError::Diverged(d)) => Err(ProbeError::NonFinite {
            epoch: d.epoch,
            batch: d.batch,
            last_good: d
                .last_good
                .map(|(o, epoch, v)| Box::new(to_checkpoint(o.model, epoch, v))),
        }),
    }
}

/// Outcome of autoencoder training. The decoder is discarded.
#[derive(Debug, Clone)]
pub struct AutoencoderTraining {
    pub encoder: PooledEncoder<f32>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub initial_val_loss: f64,
    pub history: Vec<EpochStats>,
}

/// Trains `encoder` jointly with a scratch decoder to reconstruct `texts`
/// and returns the encoder from the best validation epoch.
pub fn autoencode_train(
    encoder: PooledEncoder<f32>,
    texts: &[&str],
    probe: ProbeConfig,
    cfg: &TrainConfig,
) -> Result<AutoencoderTraining, ProbeError> {
    cfg.validate()?;
    if probe.input_dim != encoder.config().dim {
        return Err(ProbeError::Config(format!(
            "decoder input {} does not match encoder dim {}",
            probe.input_dim,
            encoder.config().dim
        )));
    }
    if texts.len() < 2 {
        return Err(ProbeError::Config(
            "need at least two training captions".into(),
        ));
    }
    let seqs: Vec<Vec<usize>> = texts
        .iter()
        .map(|t| encoder.tokenizer().encode(t))
        .collect();
    let vocab = encoder.tokenizer().len();
    let obj = AutoencoderObjective {
        encoder,
        decoder: ProbeModel::new(probe, vocab),
        seqs: &seqs,
    };
    match fit(obj, texts.len(), cfg) {
        Ok(f) => Ok(AutoencoderTraining {
            encoder: f.best.encoder,
            best_epoch: f.best_epoch,
            best_val_loss: f.best_val_loss,
            initial_val_loss: f.initial_val_loss,
            history: f.history,
        }),
        Err(FitError::Numeric(e)) => Err(e.into()),
        Err(FitError::Diverged(d)) => Err(ProbeError::EncoderNonFinite {
            epoch: d.epoch,
            batch: d.batch,
            last_good: d.last_good.map(|(o, _, _)| Box::new(o.encoder)),
        }),
    }
}

/// Metadata summary for manifests.
pub fn describe(training: &ProbeTraining) -> serde_json::Value {
    json!({
        "best_epoch": training.checkpoint.epoch,
        "best_val_loss": training.checkpoint.val_loss,
        "initial_val_loss": training.initial_val_loss,
        "history": training.history,
    })
}
