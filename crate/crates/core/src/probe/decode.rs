use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::beam::{beam_search, BeamConfig};
use super::model::ProbeModel;
use super::ProbeError;
use crate::encoders::Tokenizer;
use crate::grammar::CorpusError;

/// One line of a decode file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutput {
    pub id: String,
    pub reference: String,
    pub prediction: String,
    pub beam: usize,
    pub logprob: f64,
}

/// Decodes one embedding per item (`[n, dim]`), in parallel on the current
/// rayon pool. Output order follows input order.
pub fn decode_all(
    model: &ProbeModel<f32>,
    tokenizer: &Tokenizer,
    ids: &[&str],
    references: &[&str],
    embeddings: &[f32],
    cfg: &BeamConfig,
) -> Result<Vec<DecodeOutput>, ProbeError> {
    let d = model.config().input_dim;
    if ids.len() != references.len() || embeddings.len() != ids.len() * d {
        return Err(ProbeError::Config(format!(
            "{} ids, {} references and {} embedding values for dim {d}",
            ids.len(),
            references.len(),
            embeddings.len()
        )));
    }
    (0..ids.len())
        .into_par_iter()
        .map(|i| {
            let hyp = beam_search(model, &embeddings[i * d..(i + 1) * d], cfg)?;
            Ok(DecodeOutput {
                id: ids[i].to_string(),
                reference: references[i].to_string(),
                prediction: tokenizer.decode(&hyp.tokens),
                beam: cfg.beam,
                logprob: hyp.logprob,
            })
        })
        .collect()
}

pub fn write_decodes<W: Write>(mut w: W, records: &[DecodeOutput]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_decodes<R: BufRead>(r: R) -> Result<Vec<DecodeOutput>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Line {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
