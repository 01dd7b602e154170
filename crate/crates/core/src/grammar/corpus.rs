use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::spec::{Attribute, PromptSpec, PromptTypeKey};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus line {line}: {message}")]
    Line { line: usize, message: String },
}

/// A generated caption with its structure and cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "PromptRecord", try_from = "PromptRecord")]
pub struct Prompt {
    pub id: String,
    pub text: String,
    pub spec: PromptSpec,
    pub type_key: PromptTypeKey,
    pub order_sensitive: bool,
}

/// On-disk JSONL shape of a prompt.
#[derive(Serialize, Deserialize)]
struct PromptRecord {
    id: String,
    text: String,
    type_key: PromptTypeKey,
    n_objects: usize,
    nouns: Vec<String>,
    attributes: Vec<Attribute>,
    multiples: Option<Vec<String>>,
    negation: bool,
    order_sensitive: bool,
}

impl From<Prompt> for PromptRecord {
    fn from(p: Prompt) -> Self {
        PromptRecord {
            id: p.id,
            text: p.text,
            type_key: p.type_key,
            n_objects: p.spec.nouns.len(),
            nouns: p.spec.nouns,
            attributes: p.spec.attributes,
            multiples: p.spec.multiples,
            negation: p.spec.negation,
            order_sensitive: p.order_sensitive,
        }
    }
}

impl TryFrom<PromptRecord> for Prompt {
    type Error = String;

    fn try_from(r: PromptRecord) -> Result<Self, Self::Error> {
        if r.n_objects != r.nouns.len() {
            return Err(format!(
                "n_objects is {} but {} nouns are listed",
                r.n_objects,
                r.nouns.len()
            ));
        }
        let mut spec = PromptSpec {
            nouns: r.nouns,
            attributes: r.attributes,
            multiples: r.multiples,
            negation: r.negation,
        };
        spec.canonicalize();
        let key = spec.type_key().map_err(|e| e.to_string())?;
        if key != r.type_key {
            return Err(format!(
                "type_key {} does not match attributes ({key})",
                r.type_key
            ));
        }
        Ok(Prompt {
            id: r.id,
            text: r.text,
            spec,
            type_key: r.type_key,
            order_sensitive: r.order_sensitive,
        })
    }
}

pub fn write_corpus<W: Write>(mut out: W, prompts: &[Prompt]) -> Result<(), CorpusError> {
    for p in prompts {
        serde_json::to_writer(&mut out, p).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSONL corpus. Blank lines are skipped; ids must be unique.
pub fn read_corpus<R: BufRead>(input: R) -> Result<Vec<Prompt>, CorpusError> {
    let mut prompts = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let prompt: Prompt = serde_json::from_str(&line).map_err(|e| CorpusError::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !ids.insert(prompt.id.clone()) {
            return Err(CorpusError::Line {
                line: i + 1,
                message: format!("duplicate id `{}`", prompt.id),
            });
        }
        prompts.push(prompt);
    }
    Ok(prompts)
}
