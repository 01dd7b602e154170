use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::MmError;

/// Fewest nonzero differences the signed-rank test accepts.
pub const MIN_WILCOXON_N: usize = 5;
/// Largest sample handled with the exact null distribution.
const EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// Nonzero differences.
    pub n: usize,
    /// Rank sum of positive differences.
    pub w_plus: f64,
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
    pub significant: bool,
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Average ranks of `values` (ascending, ties share their mean rank).
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test of `a - b`. Zero differences are
/// dropped. The null distribution is exact (over the observed, possibly
/// tied, ranks) up to 12 differences and normal beyond, with tie and
/// continuity corrections.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<Wilcoxon, MmError> {
    if a.len() != b.len() {
        return Err(MmError::LengthMismatch(a.len(), b.len()));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(MmError::Invalid("non-finite sample value".into()));
    }
    let n = diffs.len();
    if n < MIN_WILCOXON_N {
        return Err(MmError::Degenerate(n));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let mean = total / 2.0;
    let (p_value, exact) = if n <= EXACT_MAX_N {
        // Midranks are multiples of 1/2, so doubled ranks are integers.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0u64; max + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=max).rev() {
                counts[s] += counts[s - r];
            }
        }
        let observed = (2.0 * w_plus - 2.0 * mean).abs();
        let extreme: u64 = counts
            .iter()
            .enumerate()
            .filter(|(s, _)| (*s as f64 - 2.0 * mean).abs() >= observed - 1e-9)
            .map(|(_, c)| c)
            .sum();
        (extreme as f64 / 2f64.powi(n as i32), true)
    } else {
        let mut ties = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            ties += t * t * t - t;
            i = j + 1;
        }
        let var = (n * (n + 1) * (2 * n + 1)) as f64 / 24.0 - ties / 48.0;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * standard_normal().sf(z), false)
    };
    let p_value = p_value.min(1.0);
    Ok(Wilcoxon {
        n,
        w_plus,
        statistic: w_plus.min(total - w_plus),
        p_value,
        exact,
        significant: p_value < 0.05,
    })
}

/// Wilson score interval for a proportion `p` observed over `n` trials.
pub fn wilson_interval(p: f64, n: usize, confidence: f64) -> Result<(f64, f64), MmError> {
    if n == 0 || !(0.0..=1.0).contains(&p) || !(confidence > 0.0 && confidence < 1.0) {
        return Err(MmError::Invalid(format!(
            "proportion {p} over {n} trials at confidence {confidence}"
        )));
    }
    let z = standard_normal().inverse_cdf(0.5 + confidence / 2.0);
    let n = n as f64;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if p == 0.0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let high = if p == 1.0 {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    Ok((low, high))
}

pub fn binom_ci(successes: usize, trials: usize, confidence: f64) -> Result<(f64, f64), MmError> {
    if successes > trials {
        return Err(MmError::Invalid(format!(
            "{successes} successes in {trials} trials"
        )));
    }
    wilson_interval(successes as f64 / trials.max(1) as f64, trials, confidence)
}
