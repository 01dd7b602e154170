use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Words the templates use as glue. No vocabulary entry may reuse them.
pub const FUNCTION_WORDS: [&str; 6] = ["a", "an", "and", "that", "is", "not"];

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot read vocabulary {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("category `{0}` is empty")]
    EmptyCategory(Category),
    #[error("`{word}` appears in both `{first}` and `{second}`")]
    Duplicate {
        word: String,
        first: Category,
        second: Category,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Noun,
    Adjective,
    IntransitiveVerb,
    TransitiveVerb,
    SpatialIntransitive,
    SpatialTransitive,
    Temporal,
    Numeral,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Noun,
        Category::Adjective,
        Category::IntransitiveVerb,
        Category::TransitiveVerb,
        Category::SpatialIntransitive,
        Category::SpatialTransitive,
        Category::Temporal,
        Category::Numeral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Noun => "noun",
            Category::Adjective => "adjective",
            Category::IntransitiveVerb => "intransitive_verb",
            Category::TransitiveVerb => "transitive_verb",
            Category::SpatialIntransitive => "spatial_intransitive",
            Category::SpatialTransitive => "spatial_transitive",
            Category::Temporal => "temporal",
            Category::Numeral => "numeral",
        }
    }

    fn from_name(name: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.as_str() == name)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Noun {
    pub lemma: String,
    /// Indefinite article used before the bare noun ("a" or "an").
    pub article: String,
    pub plural: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Numeral {
    pub word: String,
    pub count: u32,
}

/// Closed lexicon the caption grammar draws from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub nouns: Vec<Noun>,
    pub adjectives: Vec<String>,
    pub intransitive_verbs: Vec<String>,
    pub transitive_verbs: Vec<String>,
    pub spatial_intransitive: Vec<String>,
    pub spatial_transitive: Vec<String>,
    pub temporal: Vec<String>,
    pub numerals: Vec<Numeral>,
    /// Article overrides for non-noun words (e.g. adjectives starting with a silent consonant).
    #[serde(default)]
    pub article_overrides: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
struct Entry {
    word: String,
    synonym_of: Option<String>,
    plural: Option<String>,
    article: Option<String>,
    count: Option<u32>,
}

/// `a`/`an` by the spelling of the following word.
pub fn default_article(word: &str) -> &'static str {
    match word.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// Regular English plural; irregular forms come from `plural=` annotations.
pub fn default_plural(lemma: &str) -> String {
    let consonant_y = lemma.ends_with('y')
        && lemma
            .chars()
            .rev()
            .nth(1)
            .is_some_and(|c| !"aeiou".contains(c));
    if consonant_y {
        format!("{}ies", &lemma[..lemma.len() - 1])
    } else if ["s", "x", "z", "ch", "sh"]
        .iter()
        .any(|s| lemma.ends_with(s))
    {
        format!("{lemma}es")
    } else {
        format!("{lemma}s")
    }
}

impl Vocabulary {
    pub fn load(path: impl AsRef<Path>) -> Result<Vocabulary, VocabError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| VocabError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Vocabulary::parse(&text)
    }

    /// The vocabulary shipped with the crate (~60 nouns).
    pub fn desk() -> Vocabulary {
        Vocabulary::parse(include_str!("../../data/desk_vocab.tsv"))
            .expect("bundled desk vocabulary is valid")
    }

    /// A larger bundled vocabulary (500+ nouns) able to fill 500 prompts in every cell.
    pub fn full() -> Vocabulary {
        Vocabulary::parse(include_str!("../../data/full_vocab.tsv"))
            .expect("bundled full vocabulary is valid")
    }

    pub fn parse(text: &str) -> Result<Vocabulary, VocabError> {
        let mut entries: BTreeMap<Category, Vec<Entry>> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let mut fields = trimmed.split('\t');
            let category_name = fields.next().unwrap_or_default().trim();
            let category =
                Category::from_name(category_name).ok_or_else(|| VocabError::Schema {
                    line,
                    message: format!("unknown category `{category_name}`"),
                })?;
            let word = fields
                .next()
                .map(|w| w.split_whitespace().collect::<Vec<_>>().join(" "))
                .unwrap_or_default();
            if word.is_empty() {
                return Err(VocabError::Schema {
                    line,
                    message: "expected `category<TAB>word`".into(),
                });
            }
            if !word
                .chars()
                .all(|c| c.is_ascii_lowercase() || c == ' ' || c == '-')
            {
                return Err(VocabError::Schema {
                    line,
                    message: format!("`{word}` must be lowercase ascii"),
                });
            }
            for token in word.split(' ') {
                if FUNCTION_WORDS.contains(&token) {
                    return Err(VocabError::Schema {
                        line,
                        message: format!("`{token}` is reserved by the templates"),
                    });
                }
            }
            let mut entry = Entry {
                word,
                synonym_of: None,
                plural: None,
                article: None,
                count: None,
            };
            for annotation in fields.map(str::trim).filter(|f| !f.is_empty()) {
                let (key, value) =
                    annotation
                        .split_once('=')
                        .ok_or_else(|| VocabError::Schema {
                            line,
                            message: format!("annotation `{annotation}` is not key=value"),
                        })?;
                let value = value.trim().to_string();
                match key.trim() {
                    "synonym_of" => entry.synonym_of = Some(value),
                    "plural" => entry.plural = Some(value),
                    "article" if value == "a" || value == "an" => entry.article = Some(value),
                    "article" => {
                        return Err(VocabError::Schema {
                            line,
                            message: format!("article must be `a` or `an`, got `{value}`"),
                        })
                    }
                    "count" => {
                        entry.count = Some(value.parse().map_err(|_| VocabError::Schema {
                            line,
                            message: format!("count `{value}` is not an integer"),
                        })?)
                    }
                    other => {
                        return Err(VocabError::Schema {
                            line,
                            message: format!("unknown annotation `{other}`"),
                        })
                    }
                }
            }
            if category == Category::Numeral && entry.count.is_none() {
                return Err(VocabError::Schema {
                    line,
                    message: "numerals need a count= annotation".into(),
                });
            }
            entries.entry(category).or_default().push(entry);
        }

        for list in entries.values_mut() {
            drop_synonyms(list);
        }

        let mut article_overrides = BTreeMap::new();
        let mut take = |category: Category| -> Vec<Entry> {
            let list = entries.remove(&category).unwrap_or_default();
            for e in &list {
                if let (Some(article), false) = (&e.article, category == Category::Noun) {
                    article_overrides.insert(e.word.clone(), article.clone());
                }
            }
            list
        };
        let words = |list: Vec<Entry>| list.into_iter().map(|e| e.word).collect::<Vec<_>>();

        let nouns = take(Category::Noun)
            .into_iter()
            .map(|e| Noun {
                article: e
                    .article
                    .unwrap_or_else(|| default_article(&e.word).to_string()),
                plural: e.plural.unwrap_or_else(|| default_plural(&e.word)),
                lemma: e.word,
            })
            .collect();
        let adjectives = words(take(Category::Adjective));
        let intransitive_verbs = words(take(Category::IntransitiveVerb));
        let transitive_verbs = words(take(Category::TransitiveVerb));
        let spatial_intransitive = words(take(Category::SpatialIntransitive));
        let spatial_transitive = words(take(Category::SpatialTransitive));
        let temporal = words(take(Category::Temporal));
        let numerals = take(Category::Numeral)
            .into_iter()
            .map(|e| Numeral {
                count: e.count.unwrap_or_default(),
                word: e.word,
            })
            .collect();

        let vocab = Vocabulary {
            nouns,
            adjectives,
            intransitive_verbs,
            transitive_verbs,
            spatial_intransitive,
            spatial_transitive,
            temporal,
            numerals,
            article_overrides,
        };
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn validate(&self) -> Result<(), VocabError> {
        for category in Category::ALL {
            if self.surface_forms(category).is_empty() {
                return Err(VocabError::EmptyCategory(category));
            }
        }
        let mut seen: BTreeMap<&str, Category> = BTreeMap::new();
        for category in Category::ALL {
            let mut own = BTreeSet::new();
            for form in self.surface_forms(category) {
                if !own.insert(form) {
                    return Err(VocabError::Duplicate {
                        word: form.to_string(),
                        first: category,
                        second: category,
                    });
                }
                if let Some(first) = seen.insert(form, category) {
                    return Err(VocabError::Duplicate {
                        word: form.to_string(),
                        first,
                        second: category,
                    });
                }
            }
        }
        Ok(())
    }

    fn surface_forms(&self, category: Category) -> Vec<&str> {
        match category {
            Category::Noun => {
                let mut forms: Vec<&str> = Vec::with_capacity(self.nouns.len() * 2);
                for noun in &self.nouns {
                    forms.push(&noun.lemma);
                    if noun.plural != noun.lemma {
                        forms.push(&noun.plural);
                    }
                }
                forms
            }
            Category::Adjective => self.adjectives.iter().map(String::as_str).collect(),
            Category::IntransitiveVerb => {
                self.intransitive_verbs.iter().map(String::as_str).collect()
            }
            Category::TransitiveVerb => self.transitive_verbs.iter().map(String::as_str).collect(),
            Category::SpatialIntransitive => self
                .spatial_intransitive
                .iter()
                .map(String::as_str)
                .collect(),
            Category::SpatialTransitive => {
                self.spatial_transitive.iter().map(String::as_str).collect()
            }
            Category::Temporal => self.temporal.iter().map(String::as_str).collect(),
            Category::Numeral => self.numerals.iter().map(|n| n.word.as_str()).collect(),
        }
    }

    pub fn noun(&self, lemma: &str) -> Option<&Noun> {
        self.nouns.iter().find(|n| n.lemma == lemma)
    }

    pub fn numeral(&self, word: &str) -> Option<&Numeral> {
        self.numerals.iter().find(|n| n.word == word)
    }

    /// Article for a word that opens a singular noun phrase.
    pub fn article_for(&self, word: &str) -> &str {
        if let Some(noun) = self.noun(word) {
            return &noun.article;
        }
        self.article_overrides
            .get(word)
            .map(String::as_str)
            .unwrap_or_else(|| default_article(word))
    }

    /// Every distinct token that can appear in a realized prompt, sorted.
    pub fn token_inventory(&self) -> Vec<String> {
        let mut set: BTreeSet<String> = FUNCTION_WORDS.iter().map(|w| w.to_string()).collect();
        for category in Category::ALL {
            for form in self.surface_forms(category) {
                set.extend(form.split(' ').map(str::to_string));
            }
        }
        set.into_iter().collect()
    }
}

fn drop_synonyms(list: &mut Vec<Entry>) {
    let mut kept: Vec<Entry> = Vec::with_capacity(list.len());
    for entry in list.drain(..) {
        let redundant = entry
            .synonym_of
            .as_ref()
            .is_some_and(|target| kept.iter().any(|k| &k.word == target));
        if !redundant {
            kept.push(entry);
        }
    }
    // A representative listed after its synonym replaces it.
    let mut out: Vec<Entry> = Vec::with_capacity(kept.len());
    for entry in kept {
        if let Some(pos) = out
            .iter()
            .position(|k| k.synonym_of.as_deref() == Some(entry.word.as_str()))
        {
            out.remove(pos);
        }
        out.push(entry);
    }
    *list = out;
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "noun\tcat\nnoun\tdog\nadjective\torange\nintransitive_verb\tyawning\n\
        transitive_verb\tchasing\nspatial_intransitive\ton the left\nspatial_transitive\tto the left of\n\
        temporal\tbefore\nnumeral\ttwo\tcount=2\n";

    #[test]
    fn loads_minimal_vocabulary() {
        let vocab = Vocabulary::parse(MINIMAL).unwrap();
        assert_eq!(vocab.nouns.len(), 2);
        assert_eq!(vocab.adjectives, vec!["orange"]);
        assert_eq!(vocab.nouns[0].plural, "cats");
        assert_eq!(vocab.article_for("orange"), "an");
        assert_eq!(vocab.article_for("cat"), "a");
    }

    #[test]
    fn synonym_pair_keeps_one_representative() {
        let text = format!("{MINIMAL}noun\trhino\nnoun\trhinoceros\tsynonym_of=rhino\n");
        let vocab = Vocabulary::parse(&text).unwrap();
        let lemmas: Vec<_> = vocab.nouns.iter().map(|n| n.lemma.as_str()).collect();
        assert!(lemmas.contains(&"rhino"));
        assert!(!lemmas.contains(&"rhinoceros"));

        let reversed = format!("{MINIMAL}noun\trhinoceros\tsynonym_of=rhino\nnoun\trhino\n");
        let vocab = Vocabulary::parse(&reversed).unwrap();
        let rhinos = vocab
            .nouns
            .iter()
            .filter(|n| n.lemma.starts_with("rhino"))
            .count();
        assert_eq!(rhinos, 1);
    }

    #[test]
    fn empty_category_is_rejected() {
        let text = MINIMAL.replace("transitive_verb\tchasing\n", "");
        match Vocabulary::parse(&text) {
            Err(VocabError::EmptyCategory(Category::TransitiveVerb)) => {}
            other => panic!("expected empty transitive_verb, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{MINIMAL}verb\tjumping\n");
        match Vocabulary::parse(&text) {
            Err(VocabError::Schema { line, .. }) => assert_eq!(line, 10),
            other => panic!("expected schema error, got {other:?}"),
        }
        let missing_word = "noun\n";
        assert!(matches!(
            Vocabulary::parse(missing_word),
            Err(VocabError::Schema { line: 1, .. })
        ));
    }

    #[test]
    fn cross_category_duplicates_are_rejected() {
        let text = format!("{MINIMAL}adjective\tcat\n");
        assert!(matches!(
            Vocabulary::parse(&text),
            Err(VocabError::Duplicate { .. })
        ));
    }

    #[test]
    fn reserved_words_are_rejected() {
        let text = format!("{MINIMAL}adjective\tnot\n");
        assert!(matches!(
            Vocabulary::parse(&text),
            Err(VocabError::Schema { .. })
        ));
    }

    #[test]
    fn plural_rules() {
        assert_eq!(default_plural("fox"), "foxes");
        assert_eq!(default_plural("puppy"), "puppies");
        assert_eq!(default_plural("monkey"), "monkeys");
        assert_eq!(default_plural("physician"), "physicians");
        assert_eq!(default_plural("coach"), "coaches");
    }

    #[test]
    fn bundled_vocabularies_are_valid() {
        let desk = Vocabulary::desk();
        assert_eq!(desk.nouns.len(), 60);
        assert!(desk.noun("rhinoceros").is_none());
        assert!(Vocabulary::full().nouns.len() >= 500);
    }
}
