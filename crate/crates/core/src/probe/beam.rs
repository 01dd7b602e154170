use serde::{Deserialize, Serialize};

use super::model::ProbeModel;
use crate::encoders::{BOS, EOS};
use crate::numerics::{NumericError, Scalar};

/// First token id a decoder may emit; PAD and BOS are never generated.
pub const FIRST_EMITTABLE: usize = EOS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam: usize,
    pub max_len: usize,
    /// Rank finished hypotheses by log-probability per emitted token.
    pub length_norm: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam: 5,
            max_len: 24,
            length_norm: true,
        }
    }
}

/// A finished hypothesis. `tokens` excludes BOS and EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    /// Summed log-probability of every emitted token, EOS included.
    pub logprob: f64,
    /// The ranking score: `logprob`, or `logprob / emitted` under length
    /// normalization.
    pub score: f64,
    pub ended: bool,
}

fn score(logprob: f64, emitted: usize, length_norm: bool) -> f64 {
    if length_norm {
        logprob / emitted.max(1) as f64
    } else {
        logprob
    }
}

fn better(a: &Hypothesis, b: &Hypothesis) -> bool {
    a.score > b.score || (a.score == b.score && a.tokens < b.tokens)
}

/// Beam search. Every step keeps the `beam` best expansions of all live
/// hypotheses by cumulative log-probability; expansions ending in EOS move
/// to the finished pool. Search stops when no hypothesis is live, the pool
/// holds `beam` entries, or `max_len` tokens have been emitted, at which
/// point the remaining live hypotheses are finished as truncated.
pub fn beam_search<T: Scalar>(
    model: &ProbeModel<T>,
    embedding: &[T],
    cfg: &BeamConfig,
) -> Result<Hypothesis, NumericError> {
    if cfg.beam == 0 {
        return Err(NumericError::Usage("beam width must be at least 1".into()));
    }
    let vocab = model.vocab();
    let mut state = model.start(embedding, 1)?;
    let mut live: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for step in 0..cfg.max_len {
        let last: Vec<usize> = live
            .iter()
            .map(|(toks, _)| toks.last().copied().unwrap_or(BOS))
            .collect();
        let (logp, next) = model.step(&state, &last)?;
        let mut candidates: Vec<(f64, usize, usize)> =
            Vec::with_capacity(live.len() * (vocab - FIRST_EMITTABLE));
        for (row, (_, base)) in live.iter().enumerate() {
            for tok in FIRST_EMITTABLE..vocab {
                candidates.push((base + logp[row * vocab + tok].as_f64(), row, tok));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.2.cmp(&b.2))
        });
        candidates.truncate(cfg.beam);

        let mut keep_rows = Vec::new();
        let mut next_live = Vec::new();
        for (lp, row, tok) in candidates {
            if tok == EOS {
                let tokens = live[row].0.clone();
                finished.push(Hypothesis {
                    score: score(lp, step + 1, cfg.length_norm),
                    tokens,
                    logprob: lp,
                    ended: true,
                });
            } else {
                let mut tokens = live[row].0.clone();
                tokens.push(tok);
                keep_rows.push(row);
                next_live.push((tokens, lp));
            }
        }
        live = next_live;
        if live.is_empty() || finished.len() >= cfg.beam {
            break;
        }
        state = next.select(&keep_rows);
    }
    if finished.len() < cfg.beam {
        for (tokens, lp) in live {
            let emitted = tokens.len();
            finished.push(Hypothesis {
                tokens,
                logprob: lp,
                score: score(lp, emitted, cfg.length_norm),
                ended: false,
            });
        }
    }
    let mut best = finished.swap_remove(0);
    for h in finished {
        if better(&h, &best) {
            best = h;
        }
    }
    Ok(best)
}

/// Argmax decoding.
pub fn greedy<T: Scalar>(
    model: &ProbeModel<T>,
    embedding: &[T],
    max_len: usize,
) -> Result<Hypothesis, NumericError> {
    let vocab = model.vocab();
    let mut state = model.start(embedding, 1)?;
    let mut tokens = Vec::new();
    let mut total = 0.0;
    let mut prev = BOS;
    for _ in 0..max_len {
        let (logp, next) = model.step(&state, &[prev])?;
        let mut best = FIRST_EMITTABLE;
        for tok in FIRST_EMITTABLE + 1..vocab {
            if logp[tok] > logp[best] {
                best = tok;
            }
        }
        total += logp[best].as_f64();
        if best == EOS {
            let emitted = tokens.len() + 1;
            return Ok(Hypothesis {
                tokens,
                logprob: total,
                score: total / emitted as f64,
                ended: true,
            });
        }
        tokens.push(best);
        prev = best;
        state = next;
    }
    let emitted = tokens.len();
    Ok(Hypothesis {
        tokens,
        logprob: total,
        score: total / emitted.max(1) as f64,
        ended: false,
    })
}
