use std::collections::HashMap;

/// Smoothing numerator used in place of a zero n-gram match count.
pub const BLEU_EPSILON: f64 = 0.1;
pub const BLEU_MAX_ORDER: usize = 4;

fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

pub fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

/// 1 when the strings agree after trimming and lowercasing.
pub fn exact_match(reference: &str, prediction: &str) -> u8 {
    u8::from(normalize(reference) == normalize(prediction))
}

fn ngram_counts(toks: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for w in toks.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram matches and the number of prediction n-grams.
fn matches(reference: &[String], prediction: &[String], n: usize) -> (usize, usize) {
    let total = prediction.len().saturating_sub(n - 1);
    if total == 0 {
        return (0, 0);
    }
    let refs = ngram_counts(reference, n);
    let hits = ngram_counts(prediction, n)
        .into_iter()
        .map(|(g, c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (hits, total)
}

/// Sentence BLEU-4 on a 0-100 scale.
///
/// Orders above the prediction length are dropped. A prediction with no
/// unigram in common with the reference scores 0; any other zero match
/// count is replaced by [`BLEU_EPSILON`].
pub fn bleu4(reference: &str, prediction: &str) -> f64 {
    let r = tokens(reference);
    let p = tokens(prediction);
    if r.is_empty() && p.is_empty() {
        return 100.0;
    }
    if r.is_empty() || p.is_empty() {
        return 0.0;
    }
    let order = BLEU_MAX_ORDER.min(p.len());
    let mut log_sum = 0.0;
    for n in 1..=order {
        let (hits, total) = matches(&r, &p, n);
        if hits == 0 {
            if n == 1 {
                return 0.0;
            }
            log_sum += (BLEU_EPSILON / total as f64).ln();
        } else {
            log_sum += (hits as f64 / total as f64).ln();
        }
    }
    let brevity = if p.len() < r.len() {
        (1.0 - r.len() as f64 / p.len() as f64).exp()
    } else {
        1.0
    };
    100.0 * brevity * (log_sum / order as f64).exp()
}

/// Same words, possibly in another order.
pub fn same_bag(reference: &str, prediction: &str) -> bool {
    let mut a = tokens(reference);
    let mut b = tokens(prediction);
    a.sort_unstable();
    b.sort_unstable();
    a == b
}
