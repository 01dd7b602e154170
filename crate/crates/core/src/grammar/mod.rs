//! Caption grammar: vocabulary, prompt structures, realization, parsing and
//! corpus generation.

mod corpus;
mod generate;
mod parse;
mod realize;
mod spec;
mod vocab;

use std::collections::{HashMap, HashSet};

pub use corpus::{read_corpus, write_corpus, CorpusError, Prompt};
pub use generate::{CellPlan, GenerateError, GenerateOptions};
pub use parse::ParseError;
pub use spec::{
    all_cells, Attribute, AttributeKind, PromptSpec, PromptTypeKey, Section, SpecError,
    TABLE1_COLUMNS,
};
pub use vocab::{
    default_article, default_plural, Category, Noun, Numeral, VocabError, Vocabulary,
    FUNCTION_WORDS,
};

/// A vocabulary plus the lookup tables realization and parsing need.
#[derive(Debug, Clone)]
pub struct Grammar {
    vocab: Vocabulary,
    noun_index: HashMap<String, usize>,
    plural_index: HashMap<String, usize>,
    numeral_index: HashMap<String, usize>,
    adjectives: HashSet<String>,
    intransitive: HashSet<String>,
    transitive: HashSet<String>,
    temporal: HashSet<String>,
    spatial_intransitive: Vec<Vec<String>>,
    spatial_transitive: Vec<Vec<String>>,
}

fn phrases(list: &[String]) -> Vec<Vec<String>> {
    list.iter()
        .map(|p| p.split(' ').map(str::to_string).collect())
        .collect()
}

impl Grammar {
    pub fn new(vocab: Vocabulary) -> Result<Grammar, VocabError> {
        vocab.validate()?;
        let index = |words: Vec<&String>| {
            words
                .into_iter()
                .enumerate()
                .map(|(i, w)| (w.clone(), i))
                .collect::<HashMap<_, _>>()
        };
        Ok(Grammar {
            noun_index: index(vocab.nouns.iter().map(|n| &n.lemma).collect()),
            plural_index: index(vocab.nouns.iter().map(|n| &n.plural).collect()),
            numeral_index: index(vocab.numerals.iter().map(|n| &n.word).collect()),
            adjectives: vocab.adjectives.iter().cloned().collect(),
            intransitive: vocab.intransitive_verbs.iter().cloned().collect(),
            transitive: vocab.transitive_verbs.iter().cloned().collect(),
            temporal: vocab.temporal.iter().cloned().collect(),
            spatial_intransitive: phrases(&vocab.spatial_intransitive),
            spatial_transitive: phrases(&vocab.spatial_transitive),
            vocab,
        })
    }

    /// Grammar over the bundled ~60-noun vocabulary.
    pub fn desk() -> Grammar {
        Grammar::new(Vocabulary::desk()).expect("bundled vocabulary is valid")
    }

    /// Grammar over the bundled 500-noun vocabulary.
    pub fn full() -> Grammar {
        Grammar::new(Vocabulary::full()).expect("bundled vocabulary is valid")
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub(crate) fn noun(&self, lemma: &str) -> Option<&Noun> {
        self.noun_index.get(lemma).map(|&i| &self.vocab.nouns[i])
    }

    pub(crate) fn is_numeral(&self, word: &str) -> bool {
        self.numeral_index.contains_key(word)
    }
}
