use std::path::Path;

use anyhow::Context;
use bottleneck::mmeval::Scoring;
use bottleneck::numerics::optim::OptimizerKind;
use bottleneck::pipeline::{EncoderKind, EncoderSettings, ProbeSettings};
use bottleneck::probe::{Conditioning, TrainConfig};
use bottleneck::textmetrics::ReportFormat;
use serde::{Deserialize, Serialize};

use crate::UserError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub per_type: usize,
    pub clamp: bool,
}

impl Default for GenSection {
    fn default() -> Self {
        GenSection {
            per_type: 50,
            clamp: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub kind: EncoderKind,
    pub dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub shuffle: bool,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let d = EncoderSettings::default();
        EncoderSection {
            kind: d.kind,
            dim: d.dim,
            hidden: d.hidden,
            layers: d.layers,
            shuffle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub hidden: usize,
    pub layers: usize,
    pub conditioning: Conditioning,
}

impl Default for ProbeSection {
    fn default() -> Self {
        let d = ProbeSettings::default();
        ProbeSection {
            hidden: d.hidden,
            layers: d.layers,
            conditioning: d.conditioning,
        }
    }
}

/// Optimisation settings; the seed comes from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub val_fraction: f64,
    pub max_len: usize,
    pub beam: usize,
    pub length_norm: bool,
    pub clip_norm: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            batch_size: d.batch_size,
            epochs: d.epochs,
            lr: d.lr,
            optimizer: d.optimizer,
            val_fraction: d.val_fraction,
            max_len: d.max_len,
            beam: d.beam,
            length_norm: d.length_norm,
            clip_norm: d.clip_norm,
        }
    }
}

impl TrainSection {
    pub fn resolve(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr: self.lr,
            optimizer: self.optimizer,
            seed,
            val_fraction: self.val_fraction,
            max_len: self.max_len,
            beam: self.beam,
            length_norm: self.length_norm,
            clip_norm: self.clip_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub format: ReportFormat,
    pub scoring: Scoring,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            format: ReportFormat::Markdown,
            scoring: Scoring::Conjunction,
        }
    }
}

/// Everything a run depends on. Merged from defaults, an optional TOML file
/// and command-line flags, in that order, and recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// `desk`, `full` or a path to a vocabulary file.
    pub vocab: String,
    /// Worker threads for decoding and encoding; `None` uses every core.
    pub threads: Option<usize>,
    pub gen: GenSection,
    pub encoder: EncoderSection,
    pub probe: ProbeSection,
    pub train: TrainSection,
    pub autoenc: TrainSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            vocab: "desk".into(),
            threads: None,
            gen: GenSection::default(),
            encoder: EncoderSection::default(),
            probe: ProbeSection::default(),
            train: TrainSection::default(),
            autoenc: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| UserError(format!("config {}: {e}", path.display())).into())
    }

    /// Component seeds all derive from the run seed.
    pub fn encoder_settings(&self) -> EncoderSettings {
        EncoderSettings {
            kind: self.encoder.kind,
            dim: self.encoder.dim,
            hidden: self.encoder.hidden,
            layers: self.encoder.layers,
            seed: self.seed,
            shuffle: self.encoder.shuffle.then_some(self.seed),
        }
    }

    pub fn probe_settings(&self) -> ProbeSettings {
        ProbeSettings {
            hidden: self.probe.hidden,
            layers: self.probe.layers,
            conditioning: self.probe.conditioning,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.resolve(self.seed)
    }

    pub fn autoenc_config(&self) -> TrainConfig {
        self.autoenc.resolve(self.seed)
    }
}
