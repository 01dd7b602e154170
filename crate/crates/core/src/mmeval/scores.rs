use serde::{Deserialize, Serialize};

use super::PairRecord;

/// How the two comparisons behind a score are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Both comparisons must be right.
    #[default]
    Conjunction,
    /// Mean of the two comparisons.
    PerImageAverage,
}

fn combine(a: bool, b: bool, scoring: Scoring) -> f64 {
    match scoring {
        Scoring::Conjunction => f64::from(u8::from(a && b)),
        Scoring::PerImageAverage => (f64::from(u8::from(a)) + f64::from(u8::from(b))) / 2.0,
    }
}

/// Given each image, is the matching caption scored strictly higher?
pub fn text_score(r: &PairRecord) -> u8 {
    u8::from(r.s_c0_i0 > r.s_c1_i0 && r.s_c1_i1 > r.s_c0_i1)
}

/// Given each caption, is the matching image scored strictly higher?
pub fn image_score(r: &PairRecord) -> u8 {
    u8::from(r.s_c0_i0 > r.s_c0_i1 && r.s_c1_i1 > r.s_c1_i0)
}

pub fn text_score_with(r: &PairRecord, scoring: Scoring) -> f64 {
    combine(r.s_c0_i0 > r.s_c1_i0, r.s_c1_i1 > r.s_c0_i1, scoring)
}

pub fn image_score_with(r: &PairRecord, scoring: Scoring) -> f64 {
    combine(r.s_c0_i0 > r.s_c0_i1, r.s_c1_i1 > r.s_c1_i0, scoring)
}
