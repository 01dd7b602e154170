use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::corpus::Prompt;
use super::spec::{all_cells, Attribute, AttributeKind, PromptSpec, PromptTypeKey};
use super::Grammar;

/// Cells at or below this capacity are enumerated and shuffled instead of
/// rejection-sampled.
const ENUMERATE_LIMIT: u128 = 20_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("per_type must be at least 1")]
    EmptyRequest,
    #[error("cell {cell} holds {available} distinct prompts, {requested} requested")]
    Capacity {
        cell: PromptTypeKey,
        available: u128,
        requested: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateOptions {
    pub per_type: usize,
    pub seed: u64,
    /// Per-cell counts that replace `per_type`.
    pub overrides: BTreeMap<PromptTypeKey, usize>,
    /// Produce fewer prompts for cells that cannot supply the requested count
    /// instead of failing.
    pub clamp_to_capacity: bool,
}

impl GenerateOptions {
    pub fn new(per_type: usize, seed: u64) -> GenerateOptions {
        GenerateOptions {
            per_type,
            seed,
            overrides: BTreeMap::new(),
            clamp_to_capacity: false,
        }
    }
}

/// Requested and produced counts for one cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellPlan {
    pub cell: PromptTypeKey,
    pub capacity: u128,
    pub requested: usize,
    pub produced: usize,
}

/// Uniform integer in `0..n`, identical on every platform.
fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    rng.gen_range(0..n as u64) as usize
}

fn distinct(pick: &mut dyn FnMut(usize) -> usize, n: usize, used: &[usize]) -> usize {
    let mut i = pick(n - used.len());
    let mut sorted = used.to_vec();
    sorted.sort_unstable();
    for u in sorted {
        if i >= u {
            i += 1;
        }
    }
    i
}

impl Grammar {
    fn words(&self, kind: AttributeKind) -> &[String] {
        let v = self.vocab();
        match kind {
            AttributeKind::Adjective => &v.adjectives,
            AttributeKind::Spatial1Obj => &v.spatial_intransitive,
            AttributeKind::Spatial2Obj => &v.spatial_transitive,
            AttributeKind::Verb1Obj | AttributeKind::TemporalVerb1Obj => &v.intransitive_verbs,
            AttributeKind::Verb2Obj | AttributeKind::TemporalVerb2Obj => &v.transitive_verbs,
        }
    }

    /// Builds the spec of `cell` selected by a sequence of bounded choices.
    /// The sequence of bounds depends only on the cell, and distinct choice
    /// sequences give distinct specs.
    fn build(&self, cell: &PromptTypeKey, pick: &mut dyn FnMut(usize) -> usize) -> PromptSpec {
        let n = cell.section.n_objects();
        let vocab = self.vocab();
        let mut noun_ids = Vec::new();
        for _ in 0..n {
            let i = distinct(pick, vocab.nouns.len(), &noun_ids);
            noun_ids.push(i);
        }
        let multiples = cell.section.multiples().then(|| {
            let mut ids = Vec::new();
            for _ in 0..n {
                let i = distinct(pick, vocab.numerals.len(), &ids);
                ids.push(i);
            }
            ids.iter()
                .map(|&i| vocab.numerals[i].word.clone())
                .collect()
        });

        let mut attributes = Vec::new();
        let mut used: BTreeMap<AttributeKind, Vec<usize>> = BTreeMap::new();
        for &kind in &cell.kinds {
            let list = self.words(kind);
            let used_k = used.entry(kind).or_default();
            let occurrence = used_k.len();
            let w = distinct(pick, list.len(), used_k);
            used_k.push(w);
            let word = match kind {
                AttributeKind::TemporalVerb1Obj | AttributeKind::TemporalVerb2Obj => {
                    let t = pick(vocab.temporal.len());
                    format!("{} {}", vocab.temporal[t], list[w])
                }
                _ => list[w].clone(),
            };
            let same_kind = cell.kinds.iter().filter(|&&k| k == kind).count();
            let object = if n == 1 || kind.is_relation() {
                0
            } else if same_kind == 2 {
                occurrence
            } else {
                pick(2)
            };
            attributes.push(Attribute::new(kind, word, object));
        }
        let mut spec = PromptSpec {
            nouns: noun_ids
                .iter()
                .map(|&i| vocab.nouns[i].lemma.clone())
                .collect(),
            attributes,
            multiples,
            negation: cell.section.negation(),
        };
        spec.canonicalize();
        spec
    }

    fn radices(&self, cell: &PromptTypeKey) -> Vec<usize> {
        let mut radices = Vec::new();
        self.build(cell, &mut |r| {
            radices.push(r);
            0
        });
        radices
    }

    /// Number of distinct prompts the cell admits over this vocabulary.
    pub fn capacity(&self, cell: &PromptTypeKey) -> u128 {
        self.radices(cell)
            .iter()
            .fold(1u128, |acc, &r| acc.saturating_mul(r as u128))
    }

    /// Every spec of a cell, in a fixed order.
    pub fn enumerate_cell(&self, cell: &PromptTypeKey) -> Vec<PromptSpec> {
        let radices = self.radices(cell);
        let total = self.capacity(cell);
        assert!(total <= 10_000_000, "cell {cell} too large to enumerate");
        let mut digits = vec![0usize; radices.len()];
        let mut out = Vec::with_capacity(total as usize);
        for _ in 0..total {
            let mut k = 0;
            out.push(self.build(cell, &mut |_| {
                k += 1;
                digits[k - 1]
            }));
            for (d, &r) in digits.iter_mut().zip(&radices).rev() {
                *d += 1;
                if *d < r {
                    break;
                }
                *d = 0;
            }
        }
        out
    }

    pub fn sample_spec(&self, cell: &PromptTypeKey, rng: &mut ChaCha8Rng) -> PromptSpec {
        self.build(cell, &mut |r| below(rng, r))
    }

    pub fn make_prompt(&self, id: String, spec: PromptSpec) -> Prompt {
        let type_key = spec.type_key().expect("generated specs are valid");
        Prompt {
            id,
            text: self.realize(&spec),
            order_sensitive: spec.swap_variant().is_some(),
            spec,
            type_key,
        }
    }

    /// Generates the typed corpus: one block of distinct prompts per cell, in
    /// table order. Texts in `exclude` are never produced.
    pub fn generate_corpus(
        &self,
        opts: &GenerateOptions,
        exclude: &HashSet<String>,
    ) -> Result<(Vec<Prompt>, Vec<CellPlan>), GenerateError> {
        let mut corpus = Vec::new();
        let mut plans = Vec::new();
        for (index, cell) in all_cells().into_iter().enumerate() {
            let requested = opts.overrides.get(&cell).copied().unwrap_or(opts.per_type);
            if requested == 0 {
                return Err(GenerateError::EmptyRequest);
            }
            let capacity = self.capacity(&cell);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(index as u64);

            let specs = if capacity <= ENUMERATE_LIMIT {
                let mut pool: Vec<(String, PromptSpec)> = self
                    .enumerate_cell(&cell)
                    .into_iter()
                    .map(|s| (self.realize(&s), s))
                    .filter(|(t, _)| !exclude.contains(t))
                    .collect();
                let available = pool.len();
                let take = if opts.clamp_to_capacity {
                    requested.min(available)
                } else if requested > available {
                    return Err(GenerateError::Capacity {
                        cell,
                        available: available as u128,
                        requested,
                    });
                } else {
                    requested
                };
                for i in 0..take {
                    let j = i + below(&mut rng, available - i);
                    pool.swap(i, j);
                }
                pool.truncate(take);
                pool.into_iter().map(|(_, s)| s).collect()
            } else {
                if requested as u128 > capacity {
                    return Err(GenerateError::Capacity {
                        cell,
                        available: capacity,
                        requested,
                    });
                }
                let mut seen = HashSet::new();
                let mut specs = Vec::with_capacity(requested);
                let mut attempts = 0usize;
                while specs.len() < requested {
                    attempts += 1;
                    if attempts > 1_000 + 100 * requested {
                        return Err(GenerateError::Capacity {
                            cell,
                            available: specs.len() as u128,
                            requested,
                        });
                    }
                    let spec = self.sample_spec(&cell, &mut rng);
                    let text = self.realize(&spec);
                    if exclude.contains(&text) || !seen.insert(text) {
                        continue;
                    }
                    specs.push(spec);
                }
                specs
            };
            plans.push(CellPlan {
                cell: cell.clone(),
                capacity,
                requested,
                produced: specs.len(),
            });
            for (i, spec) in specs.into_iter().enumerate() {
                let id = format!("p{}-{:02}-{:04}", opts.seed, index, i);
                corpus.push(self.make_prompt(id, spec));
            }
        }
        Ok((corpus, plans))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_skips_used_indices() {
        let mut picks = vec![0usize, 1, 2].into_iter();
        let mut pick = |_| picks.next().unwrap();
        assert_eq!(distinct(&mut pick, 5, &[0]), 1);
        assert_eq!(distinct(&mut pick, 5, &[2, 0]), 3);
        assert_eq!(distinct(&mut pick, 5, &[1, 4]), 3);
    }

    #[test]
    fn enumeration_matches_capacity_and_is_distinct() {
        let g = Grammar::desk();
        for cell in all_cells() {
            if g.capacity(&cell) > 300_000 {
                continue;
            }
            let specs = g.enumerate_cell(&cell);
            assert_eq!(specs.len() as u128, g.capacity(&cell));
            let texts: HashSet<_> = specs.iter().map(|s| g.realize(s)).collect();
            assert_eq!(texts.len(), specs.len(), "{cell}");
        }
    }

    #[test]
    fn capacity_errors_name_the_cell() {
        let g = Grammar::desk();
        let err = g
            .generate_corpus(&GenerateOptions::new(500, 0), &HashSet::new())
            .unwrap_err();
        match err {
            GenerateError::Capacity { cell, .. } => assert_eq!(cell.to_string(), "1obj:none"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_vocabulary_supports_500_per_cell() {
        let g = Grammar::full();
        for cell in all_cells() {
            assert!(g.capacity(&cell) >= 500, "{cell}");
        }
    }
}
