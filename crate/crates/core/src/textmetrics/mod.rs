//! Caption recovery metrics: exact match, sentence BLEU-4, Shuffled% and
//! per-cell aggregation.

mod metrics;
mod report;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Prompt, PromptTypeKey};
use crate::probe::DecodeOutput;

pub use metrics::{bleu4, exact_match, same_bag, tokens, BLEU_EPSILON, BLEU_MAX_ORDER};
pub use report::{shuffled_rate, stratify, Aggregate, CellStats, EvalReport, ReportFormat};

#[derive(Debug, Error)]
pub enum TextMetricsError {
    #[error("unknown prompt type {0}")]
    UnknownCell(String),
    #[error("duplicate record id {0}")]
    DuplicateId(String),
    #[error("decode id {0} is not in the corpus")]
    UnknownId(String),
    #[error("decode {id} has reference {got:?} but the corpus text is {expected:?}")]
    ReferenceMismatch {
        id: String,
        expected: String,
        got: String,
    },
}

/// A decoded caption next to its reference and cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeRecord {
    pub id: String,
    pub reference: String,
    pub prediction: String,
    pub type_key: PromptTypeKey,
    pub order_sensitive: bool,
}

impl DecodeRecord {
    pub fn new(prompt: &Prompt, prediction: impl Into<String>) -> DecodeRecord {
        DecodeRecord {
            id: prompt.id.clone(),
            reference: prompt.text.clone(),
            prediction: prediction.into(),
            type_key: prompt.type_key.clone(),
            order_sensitive: prompt.order_sensitive,
        }
    }
}

/// Attaches cell information from the corpus to each decode.
pub fn join(
    prompts: &[Prompt],
    decodes: &[DecodeOutput],
) -> Result<Vec<DecodeRecord>, TextMetricsError> {
    let by_id: HashMap<&str, &Prompt> = prompts.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut seen = HashSet::new();
    decodes
        .iter()
        .map(|d| {
            let prompt = by_id
                .get(d.id.as_str())
                .ok_or_else(|| TextMetricsError::UnknownId(d.id.clone()))?;
            if !seen.insert(d.id.as_str()) {
                return Err(TextMetricsError::DuplicateId(d.id.clone()));
            }
            if prompt.text != d.reference {
                return Err(TextMetricsError::ReferenceMismatch {
                    id: d.id.clone(),
                    expected: prompt.text.clone(),
                    got: d.reference.clone(),
                });
            }
            Ok(DecodeRecord::new(prompt, d.prediction.clone()))
        })
        .collect()
}
