use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::scores::{image_score_with, text_score_with, Scoring};
use super::stats::{wilcoxon_signed_rank, wilson_interval, Wilcoxon};
use super::{Category, MmError, PairRecord};

pub const CONFIDENCE: f64 = 0.95;

/// Scores and 95% interval half-widths, all in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    /// `None` for the all-categories row.
    pub category: Option<Category>,
    pub pairs: usize,
    pub text: f64,
    pub image: f64,
    pub text_ci: f64,
    pub image_ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MMReport {
    pub scoring: Scoring,
    /// Categories with at least one pair, in canonical order.
    pub categories: Vec<CategoryStats>,
    pub overall: Option<CategoryStats>,
}

fn half_width(p: f64, n: usize) -> f64 {
    let (low, high) = wilson_interval(p, n, CONFIDENCE).expect("valid proportion");
    100.0 * (high - low) / 2.0
}

fn summarize(
    category: Option<Category>,
    records: &[&PairRecord],
    scoring: Scoring,
) -> Option<CategoryStats> {
    if records.is_empty() {
        return None;
    }
    let n = records.len();
    // Scores are multiples of 1/2, so these sums are exact in any order.
    let text = records
        .iter()
        .map(|r| text_score_with(r, scoring))
        .sum::<f64>()
        / n as f64;
    let image = records
        .iter()
        .map(|r| image_score_with(r, scoring))
        .sum::<f64>()
        / n as f64;
    Some(CategoryStats {
        category,
        pairs: n,
        text: 100.0 * text,
        image: 100.0 * image,
        text_ci: half_width(text, n),
        image_ci: half_width(image, n),
    })
}

pub fn mm_report(records: &[PairRecord], scoring: Scoring) -> MMReport {
    let categories = Category::ALL
        .into_iter()
        .filter_map(|c| {
            let rows: Vec<&PairRecord> = records.iter().filter(|r| r.category == c).collect();
            summarize(Some(c), &rows, scoring)
        })
        .collect();
    let all: Vec<&PairRecord> = records.iter().collect();
    MMReport {
        scoring,
        categories,
        overall: summarize(None, &all, scoring),
    }
}

fn label(c: Option<Category>) -> &'static str {
    c.map_or("all", Category::as_str)
}

impl MMReport {
    pub fn category(&self, c: Category) -> Option<&CategoryStats> {
        self.categories.iter().find(|s| s.category == Some(c))
    }

    fn rows(&self) -> impl Iterator<Item = &CategoryStats> {
        self.categories.iter().chain(self.overall.as_ref())
    }

    pub fn to_markdown(&self) -> String {
        let mut out =
            String::from("| category | pairs | text score | image score |\n|---|---|---|---|\n");
        for s in self.rows() {
            let _ = writeln!(
                out,
                "| {} | {} | {:.1} ± {:.1} | {:.1} ± {:.1} |",
                label(s.category),
                s.pairs,
                s.text,
                s.text_ci,
                s.image,
                s.image_ci
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,pairs,text,text_ci,image,image_ci\n");
        for s in self.rows() {
            let _ = writeln!(
                out,
                "{},{},{:.4},{:.4},{:.4},{:.4}",
                label(s.category),
                s.pairs,
                s.text,
                s.text_ci,
                s.image,
                s.image_ci
            );
        }
        out
    }
}

/// Paired signed-rank tests of per-pair scores, model A minus model B.
/// `None` where too few pairs differ for the test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryComparison {
    pub category: Option<Category>,
    pub pairs: usize,
    pub text: Option<Wilcoxon>,
    pub image: Option<Wilcoxon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scoring: Scoring,
    pub categories: Vec<CategoryComparison>,
    pub overall: CategoryComparison,
}

fn test_or_none(a: &[f64], b: &[f64]) -> Result<Option<Wilcoxon>, MmError> {
    match wilcoxon_signed_rank(a, b) {
        Ok(w) => Ok(Some(w)),
        Err(MmError::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn compare_rows(
    category: Option<Category>,
    rows: &[(&PairRecord, &PairRecord)],
    scoring: Scoring,
) -> Result<CategoryComparison, MmError> {
    let score = |f: fn(&PairRecord, Scoring) -> f64, first: bool| -> Vec<f64> {
        rows.iter()
            .map(|(x, y)| f(if first { x } else { y }, scoring))
            .collect()
    };
    let (ta, tb) = (score(text_score_with, true), score(text_score_with, false));
    let (ia, ib) = (
        score(image_score_with, true),
        score(image_score_with, false),
    );
    Ok(CategoryComparison {
        category,
        pairs: rows.len(),
        text: test_or_none(&ta, &tb)?,
        image: test_or_none(&ia, &ib)?,
    })
}

/// Compares two models scored on the same pairs, matched by `pair_id`.
pub fn compare(
    a: &[PairRecord],
    b: &[PairRecord],
    scoring: Scoring,
) -> Result<Comparison, MmError> {
    let by_id: HashMap<&str, &PairRecord> = b.iter().map(|r| (r.pair_id.as_str(), r)).collect();
    if by_id.len() != b.len() {
        return Err(MmError::Invalid(
            "duplicate pair ids in the second file".into(),
        ));
    }
    let mut rows = Vec::with_capacity(a.len());
    for r in a {
        let other = by_id
            .get(r.pair_id.as_str())
            .ok_or_else(|| MmError::Unpaired(r.pair_id.clone()))?;
        if other.category != r.category {
            return Err(MmError::Invalid(format!(
                "pair {} changes category",
                r.pair_id
            )));
        }
        rows.push((r, *other));
    }
    if rows.len() != b.len() {
        let ids: std::collections::HashSet<&str> = a.iter().map(|r| r.pair_id.as_str()).collect();
        let missing = b
            .iter()
            .find(|r| !ids.contains(r.pair_id.as_str()))
            .map_or_else(|| "?".to_string(), |r| r.pair_id.clone());
        return Err(MmError::Unpaired(missing));
    }
    // Sample order must not depend on file order.
    rows.sort_by(|x, y| x.0.pair_id.cmp(&y.0.pair_id));
    let mut categories = Vec::new();
    for c in Category::ALL {
        let subset: Vec<_> = rows.iter().copied().filter(|r| r.0.category == c).collect();
        if !subset.is_empty() {
            categories.push(compare_rows(Some(c), &subset, scoring)?);
        }
    }
    Ok(Comparison {
        scoring,
        categories,
        overall: compare_rows(None, &rows, scoring)?,
    })
}

impl Comparison {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| category | pairs | text W | text p | image W | image p |\n|---|---|---|---|---|---|\n",
        );
        let cell = |w: &Option<Wilcoxon>| {
            w.as_ref().map_or_else(
                || ("-".to_string(), "-".to_string()),
                |w| (format!("{}", w.statistic), format!("{:.4}", w.p_value)),
            )
        };
        for c in self.categories.iter().chain(std::iter::once(&self.overall)) {
            let (tw, tp) = cell(&c.text);
            let (iw, ip) = cell(&c.image);
            let _ = writeln!(
                out,
                "| {} | {} | {tw} | {tp} | {iw} | {ip} |",
                label(c.category),
                c.pairs
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,pairs,text_n,text_w,text_p,image_n,image_w,image_p\n");
        let cell = |w: &Option<Wilcoxon>| {
            w.as_ref().map_or_else(
                || ",,".to_string(),
                |w| format!("{},{},{}", w.n, w.statistic, w.p_value),
            )
        };
        for c in self.categories.iter().chain(std::iter::once(&self.overall)) {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                label(c.category),
                c.pairs,
                cell(&c.text),
                cell(&c.image)
            );
        }
        out
    }
}
