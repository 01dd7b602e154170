use std::collections::{BTreeMap, HashSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{bleu4, exact_match, same_bag};
use super::{DecodeRecord, TextMetricsError};
use crate::grammar::{all_cells, PromptTypeKey, Section, TABLE1_COLUMNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[serde(alias = "md")]
    Markdown,
    Csv,
    Json,
}

/// EM and BLEU over a group of records, both in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub exact: usize,
    pub em: f64,
    pub bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub type_key: PromptTypeKey,
    #[serde(flatten)]
    pub stats: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Populated cells in table order.
    pub cells: Vec<CellStats>,
    pub overall: Aggregate,
    /// Every record outside the multiples and negation cells.
    pub headline: Option<Aggregate>,
    pub multiples: Option<Aggregate>,
    pub negation: Option<Aggregate>,
    /// Order-sensitive records whose prediction has the reference's words.
    pub shuffled_eligible: usize,
    pub shuffled: Option<f64>,
}

struct Scored {
    exact: u8,
    bleu: f64,
}

fn aggregate<'a>(items: impl IntoIterator<Item = &'a Scored>) -> Option<Aggregate> {
    let mut exact = 0;
    let mut bleus = Vec::new();
    for s in items {
        exact += usize::from(s.exact);
        bleus.push(s.bleu);
    }
    if bleus.is_empty() {
        return None;
    }
    // Summing in sorted order keeps the report independent of record order.
    bleus.sort_by(f64::total_cmp);
    let count = bleus.len();
    Some(Aggregate {
        count,
        exact,
        em: 100.0 * exact as f64 / count as f64,
        bleu: bleus.iter().sum::<f64>() / count as f64,
    })
}

/// Percentage of eligible records decoded with the right words in the wrong
/// order. `None` when nothing is eligible.
pub fn shuffled_rate(records: &[DecodeRecord]) -> Option<f64> {
    let (eligible, shuffled) = shuffled_counts(records);
    (eligible > 0).then(|| 100.0 * shuffled as f64 / eligible as f64)
}

fn shuffled_counts(records: &[DecodeRecord]) -> (usize, usize) {
    let mut eligible = 0;
    let mut shuffled = 0;
    for r in records {
        if r.order_sensitive && same_bag(&r.reference, &r.prediction) {
            eligible += 1;
            shuffled += usize::from(exact_match(&r.reference, &r.prediction) == 0);
        }
    }
    (eligible, shuffled)
}

/// Scores every record and groups the results by cell.
pub fn stratify(records: &[DecodeRecord]) -> Result<EvalReport, TextMetricsError> {
    let mut ids = HashSet::new();
    let mut by_cell: BTreeMap<usize, Vec<Scored>> = BTreeMap::new();
    for r in records {
        let cell = r
            .type_key
            .index()
            .ok_or_else(|| TextMetricsError::UnknownCell(r.type_key.to_string()))?;
        if !ids.insert(r.id.as_str()) {
            return Err(TextMetricsError::DuplicateId(r.id.clone()));
        }
        by_cell.entry(cell).or_default().push(Scored {
            exact: exact_match(&r.reference, &r.prediction),
            bleu: bleu4(&r.reference, &r.prediction),
        });
    }
    let keys = all_cells();
    let group = |pred: &dyn Fn(&PromptTypeKey) -> bool| {
        aggregate(
            by_cell
                .iter()
                .filter(|(i, _)| pred(&keys[**i]))
                .flat_map(|(_, v)| v),
        )
    };
    let overall = group(&|_| true).unwrap_or(Aggregate {
        count: 0,
        exact: 0,
        em: 0.0,
        bleu: 0.0,
    });
    let (shuffled_eligible, shuffled) = shuffled_counts(records);
    Ok(EvalReport {
        cells: by_cell
            .iter()
            .filter_map(|(i, v)| {
                aggregate(v).map(|stats| CellStats {
                    type_key: keys[*i].clone(),
                    stats,
                })
            })
            .collect(),
        overall,
        headline: group(&|k| !k.is_multiples_or_negation()),
        multiples: group(&|k| k.section.multiples()),
        negation: group(&|k| k.section.negation()),
        shuffled_eligible,
        shuffled: (shuffled_eligible > 0)
            .then(|| 100.0 * shuffled as f64 / shuffled_eligible as f64),
    })
}

fn fmt_opt(a: &Option<Aggregate>, f: impl Fn(&Aggregate) -> f64) -> String {
    a.as_ref()
        .map_or_else(|| "-".to_string(), |a| format!("{:.1}", f(a)))
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl EvalReport {
    pub fn cell(&self, key: &PromptTypeKey) -> Option<&Aggregate> {
        self.cells
            .iter()
            .find(|c| &c.type_key == key)
            .map(|c| &c.stats)
    }

    fn grid(&self, out: &mut String, title: &str, f: &dyn Fn(&Aggregate) -> f64) {
        let _ = writeln!(out, "### {title}\n");
        let _ = writeln!(out, "| | {} |", TABLE1_COLUMNS.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(TABLE1_COLUMNS.len()));
        for section in Section::ALL {
            let row: Vec<String> = TABLE1_COLUMNS
                .iter()
                .map(|col| {
                    self.cells
                        .iter()
                        .find(|c| c.type_key.section == section && c.type_key.column() == *col)
                        .map_or_else(|| "-".to_string(), |c| format!("{:.1}", f(&c.stats)))
                })
                .collect();
            let _ = writeln!(out, "| {} | {} |", section.title(), row.join(" | "));
        }
        out.push('\n');
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "## Caption recovery\n");
        let _ = writeln!(out, "| group | prompts | EM | BLEU-4 |");
        let _ = writeln!(out, "|---|---|---|---|");
        let rows = [
            ("average (excl. multiples, negation)", &self.headline),
            ("multiples", &self.multiples),
            ("negation", &self.negation),
        ];
        let _ = writeln!(
            out,
            "| all | {} | {:.1} | {:.1} |",
            self.overall.count, self.overall.em, self.overall.bleu
        );
        for (name, agg) in rows {
            let _ = writeln!(
                out,
                "| {name} | {} | {} | {} |",
                agg.as_ref().map_or(0, |a| a.count),
                fmt_opt(agg, |a| a.em),
                fmt_opt(agg, |a| a.bleu)
            );
        }
        let shuffled = self
            .shuffled
            .map_or_else(|| "-".to_string(), |s| format!("{s:.1}"));
        let _ = writeln!(
            out,
            "\nShuffled%: {shuffled} ({} eligible)\n",
            self.shuffled_eligible
        );
        self.grid(&mut out, "EM", &|a| a.em);
        self.grid(&mut out, "BLEU-4", &|a| a.bleu);
        out
    }

    /// One row per populated cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("type_key,section,column,count,exact,em,bleu\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},\"{}\",{},{},{:.4},{:.4}",
                c.type_key,
                c.type_key.section.as_str(),
                c.type_key.column(),
                c.stats.count,
                c.stats.exact,
                c.stats.em,
                c.stats.bleu
            );
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Markdown => self.to_markdown(),
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report serializes");
                s.push('\n');
                s
            }
        }
    }
}
