mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use bottleneck::encoders::{EncoderError, TableError};
use bottleneck::grammar::{CorpusError, GenerateError, VocabError};
use bottleneck::mmeval::MmError;
use bottleneck::numerics::checkpoint::CheckpointError;
use bottleneck::pipeline::{EncoderKind, PipelineError};
use bottleneck::probe::ProbeError;
use bottleneck::textmetrics::TextMetricsError;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

/// A problem with the user's input rather than with the program.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UserError(pub String);

fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .or_else(|_| serde_json::from_value(serde_json::Value::String(s.to_string())))
        .map_err(|_| format!("unsupported value `{s}`"))
}

#[derive(Debug, Parser)]
#[command(
    name = "bottleneck",
    version,
    about = "Caption recovery probes and matching evaluation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Output directory.
    #[arg(long, global = true, env = "BOTTLENECK_OUT", default_value = "out")]
    pub out: PathBuf,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed; every component seed derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for encoding and decoding.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// `desk`, `full` or a vocabulary file.
    #[arg(long, global = true)]
    pub vocab: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct EncoderArgs {
    #[arg(long, value_parser = |s: &str| s.parse::<EncoderKind>())]
    pub encoder: Option<EncoderKind>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub encoder_hidden: Option<usize>,
    /// Feed the probe unpermuted embedding dimensions.
    #[arg(long)]
    pub no_shuffle: bool,
    /// Trained pooled encoder from `autoenc`.
    #[arg(long)]
    pub encoder_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub probe_hidden: Option<usize>,
    #[arg(long)]
    pub probe_layers: Option<usize>,
    #[arg(long, value_parser = serde_enum::<bottleneck::probe::Conditioning>)]
    pub conditioning: Option<bottleneck::probe::Conditioning>,
}

#[derive(Debug, Args, Default)]
pub struct DecodeArgs {
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a typed caption corpus.
    Gen {
        #[arg(long)]
        per_type: Option<usize>,
        /// Produce fewer prompts for cells that cannot supply the count.
        #[arg(long)]
        clamp: bool,
        /// Corpora whose captions must not be generated again.
        #[arg(long)]
        exclude: Vec<PathBuf>,
    },
    /// Train a pooled encoder as an autoencoder.
    Autoenc {
        #[arg(long)]
        train: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[command(flatten)]
        opt: TrainArgs,
    },
    /// Train a probe on one corpus and evaluate it on another.
    Probe {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
        /// Precomputed embeddings for the training corpus.
        #[arg(long, requires = "eval_embeddings")]
        train_embeddings: Option<PathBuf>,
        #[arg(long, requires = "train_embeddings")]
        eval_embeddings: Option<PathBuf>,
        #[command(flatten)]
        opt: TrainArgs,
        #[command(flatten)]
        decode: DecodeArgs,
        /// Permit captions shared between the two corpora.
        #[arg(long)]
        allow_overlap: bool,
        #[arg(long)]
        format: Option<String>,
    },
    /// Decode a corpus with a trained probe.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Score a decode file against its corpus.
    EvalText {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        decodes: PathBuf,
        #[arg(long)]
        format: Option<String>,
    },
    /// Score image/caption pair files.
    EvalMm {
        #[arg(long)]
        pairs: PathBuf,
        /// A second model's scores on the same pairs.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long, value_parser = serde_enum::<bottleneck::mmeval::Scoring>)]
        scoring: Option<bottleneck::mmeval::Scoring>,
        #[arg(long)]
        format: Option<String>,
    },
    /// Summarise several probe runs in one table.
    Report {
        #[arg(long, required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        format: Option<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen { .. } => "gen",
            Command::Autoenc { .. } => "autoenc",
            Command::Probe { .. } => "probe",
            Command::Decode { .. } => "decode",
            Command::EvalText { .. } => "eval-text",
            Command::EvalMm { .. } => "eval-mm",
            Command::Report { .. } => "report",
        }
    }
}

fn probe_is_user(e: &ProbeError) -> bool {
    match e {
        ProbeError::Config(_) | ProbeError::Checkpoint(_) => true,
        ProbeError::Encoder(e) => encoder_is_user(e),
        ProbeError::Numeric(_)
        | ProbeError::NonFinite { .. }
        | ProbeError::EncoderNonFinite { .. } => false,
    }
}

fn encoder_is_user(e: &EncoderError) -> bool {
    !matches!(e, EncoderError::Numeric(_))
}

/// 2 for bad input, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        let user = if cause.is::<UserError>()
            || cause.is::<std::io::Error>()
            || cause.is::<CorpusError>()
            || cause.is::<VocabError>()
            || cause.is::<GenerateError>()
            || cause.is::<MmError>()
            || cause.is::<TableError>()
            || cause.is::<TextMetricsError>()
            || cause.is::<CheckpointError>()
            || cause.is::<toml::de::Error>()
        {
            true
        } else if let Some(e) = cause.downcast_ref::<ProbeError>() {
            probe_is_user(e)
        } else if let Some(e) = cause.downcast_ref::<EncoderError>() {
            encoder_is_user(e)
        } else if let Some(e) = cause.downcast_ref::<PipelineError>() {
            match e {
                PipelineError::Probe(p) => probe_is_user(p),
                PipelineError::Encoder(e) => encoder_is_user(e),
                _ => true,
            }
        } else {
            continue;
        };
        return if user { 2 } else { 1 };
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
