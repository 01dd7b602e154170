//! Image/caption matching evaluation over precomputed score matrices:
//! text and image scores, significance tests and confidence intervals.

mod report;
mod scores;
mod stats;

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{
    compare, mm_report, CategoryComparison, CategoryStats, Comparison, MMReport, CONFIDENCE,
};
pub use scores::{image_score, image_score_with, text_score, text_score_with, Scoring};
pub use stats::{binom_ci, wilcoxon_signed_rank, wilson_interval, Wilcoxon, MIN_WILCOXON_N};

#[derive(Debug, Error)]
pub enum MmError {
    #[error("pairs io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("pair {0}: scores must be finite")]
    NonFinite(String),
    #[error("pair {pair_id}: captions must differ in exactly one word ({c0:?} / {c1:?})")]
    NotOneWord {
        pair_id: String,
        c0: String,
        c1: String,
    },
    #[error("duplicate pair id {0}")]
    DuplicateId(String),
    #[error("paired samples have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("{0} nonzero differences; the test needs at least {MIN_WILCOXON_N}")]
    Degenerate(usize),
    #[error("pair {0} is missing from one of the compared files")]
    Unpaired(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "spatial-1obj-LR")]
    Spatial1ObjLR,
    #[serde(rename = "spatial-2obj-LR")]
    Spatial2ObjLR,
    #[serde(rename = "temporal")]
    Temporal,
    #[serde(rename = "verb-1obj")]
    Verb1Obj,
    #[serde(rename = "verb-2obj")]
    Verb2Obj,
    #[serde(rename = "adjective")]
    Adjective,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Spatial1ObjLR,
        Category::Spatial2ObjLR,
        Category::Temporal,
        Category::Verb1Obj,
        Category::Verb2Obj,
        Category::Adjective,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Spatial1ObjLR => "spatial-1obj-LR",
            Category::Spatial2ObjLR => "spatial-2obj-LR",
            Category::Temporal => "temporal",
            Category::Verb1Obj => "verb-1obj",
            Category::Verb2Obj => "verb-2obj",
            Category::Adjective => "adjective",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Two images, two captions and the model's score for each of the four
/// combinations. `c0` describes `i0` and `c1` describes `i1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub category: Category,
    pub c0: String,
    pub c1: String,
    pub i0: String,
    pub i1: String,
    pub s_c0_i0: f64,
    pub s_c0_i1: f64,
    pub s_c1_i0: f64,
    pub s_c1_i1: f64,
}

/// True when the captions have the same length in words and differ at
/// exactly one position.
pub fn differ_by_one_word(a: &str, b: &str) -> bool {
    let a: Vec<&str> = a.split_whitespace().collect();
    let b: Vec<&str> = b.split_whitespace().collect();
    a.len() == b.len() && a.iter().zip(&b).filter(|(x, y)| x != y).count() == 1
}

impl PairRecord {
    pub fn scores(&self) -> [f64; 4] {
        [self.s_c0_i0, self.s_c0_i1, self.s_c1_i0, self.s_c1_i1]
    }

    pub fn validate(&self) -> Result<(), MmError> {
        if !self.scores().iter().all(|s| s.is_finite()) {
            return Err(MmError::NonFinite(self.pair_id.clone()));
        }
        if !differ_by_one_word(&self.c0, &self.c1) {
            return Err(MmError::NotOneWord {
                pair_id: self.pair_id.clone(),
                c0: self.c0.clone(),
                c1: self.c1.clone(),
            });
        }
        Ok(())
    }
}

/// Reads and validates a pairs file. Errors carry the 1-based line number.
pub fn read_pairs<R: BufRead>(input: R) -> Result<Vec<PairRecord>, MmError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |message: String| MmError::Line {
            line: i + 1,
            message,
        };
        let rec: PairRecord = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        rec.validate().map_err(|e| at(e.to_string()))?;
        if !ids.insert(rec.pair_id.clone()) {
            return Err(at(MmError::DuplicateId(rec.pair_id).to_string()));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_pairs<W: Write>(mut out: W, records: &[PairRecord]) -> Result<(), MmError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
