use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("prompt must have 1 or 2 objects, got {0}")]
    ObjectCount(usize),
    #[error("multiples must name one numeral per object")]
    MultiplesArity,
    #[error("multiples and negation cannot be combined")]
    MultiplesWithNegation,
    #[error("negation requires exactly one attribute, got {0}")]
    NegationArity(usize),
    #[error("the two objects must be distinct nouns")]
    RepeatedNoun,
    #[error("the two numerals must differ")]
    RepeatedNumeral,
    #[error("attribute `{0}` is bound to a missing object")]
    DanglingBinding(String),
    #[error("attribute binding is not allowed for this cell: {0}")]
    Binding(String),
    #[error("attributes of the same kind must use different words")]
    RepeatedWord,
    #[error("no prompt type matches {0}")]
    NoCell(String),
    #[error("unknown prompt type key `{0}`")]
    UnknownKey(String),
}

/// What an attribute contributes to a caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttributeKind {
    #[serde(rename = "adjective")]
    Adjective,
    #[serde(rename = "spatial_1obj")]
    Spatial1Obj,
    #[serde(rename = "spatial_2obj")]
    Spatial2Obj,
    #[serde(rename = "verb_1obj")]
    Verb1Obj,
    #[serde(rename = "verb_2obj")]
    Verb2Obj,
    #[serde(rename = "temporal_verb_1obj")]
    TemporalVerb1Obj,
    #[serde(rename = "temporal_verb_2obj")]
    TemporalVerb2Obj,
}

impl AttributeKind {
    /// Relations link the first object (subject) to the second.
    pub fn is_relation(self) -> bool {
        matches!(
            self,
            AttributeKind::Spatial2Obj | AttributeKind::Verb2Obj | AttributeKind::TemporalVerb2Obj
        )
    }

    pub fn short_name(self) -> &'static str {
        match self {
            AttributeKind::Adjective => "adj",
            AttributeKind::Spatial1Obj => "spatial1",
            AttributeKind::Spatial2Obj => "spatial2",
            AttributeKind::Verb1Obj => "verb1",
            AttributeKind::Verb2Obj => "verb2",
            AttributeKind::TemporalVerb1Obj => "temporal-verb1",
            AttributeKind::TemporalVerb2Obj => "temporal-verb2",
        }
    }

    fn from_short_name(name: &str) -> Option<AttributeKind> {
        use AttributeKind::*;
        [
            Adjective,
            Spatial1Obj,
            Spatial2Obj,
            Verb1Obj,
            Verb2Obj,
            TemporalVerb1Obj,
            TemporalVerb2Obj,
        ]
        .into_iter()
        .find(|k| k.short_name() == name)
    }
}

/// One attribute with its lexical choice and the object it attaches to.
///
/// For temporal kinds `word` holds the whole phrase, e.g. `"before yawning"`.
/// For relations `object` is the subject and is always 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attribute {
    pub kind: AttributeKind,
    pub word: String,
    pub object: usize,
}

impl Attribute {
    pub fn new(kind: AttributeKind, word: impl Into<String>, object: usize) -> Attribute {
        Attribute {
            kind,
            word: word.into(),
            object,
        }
    }
}

/// The six row groups of the prompt-type tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Section {
    Single,
    Pair,
    SingleMultiples,
    PairMultiples,
    SingleNegation,
    PairNegation,
}

impl Section {
    pub const ALL: [Section; 6] = [
        Section::Single,
        Section::Pair,
        Section::SingleMultiples,
        Section::PairMultiples,
        Section::SingleNegation,
        Section::PairNegation,
    ];

    pub fn n_objects(self) -> usize {
        match self {
            Section::Single | Section::SingleMultiples | Section::SingleNegation => 1,
            _ => 2,
        }
    }

    pub fn multiples(self) -> bool {
        matches!(self, Section::SingleMultiples | Section::PairMultiples)
    }

    pub fn negation(self) -> bool {
        matches!(self, Section::SingleNegation | Section::PairNegation)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Section::Single => "1obj",
            Section::Pair => "2obj",
            Section::SingleMultiples => "1obj+mult",
            Section::PairMultiples => "2obj+mult",
            Section::SingleNegation => "1obj+neg",
            Section::PairNegation => "2obj+neg",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Section::Single => "1 unique object",
            Section::Pair => "2 unique objects",
            Section::SingleMultiples => "1 unique object + multiples",
            Section::PairMultiples => "2 unique objects + multiples",
            Section::SingleNegation => "1 unique object + negation",
            Section::PairNegation => "2 unique objects + negation",
        }
    }

    fn from_parts(n_objects: usize, multiples: bool, negation: bool) -> Option<Section> {
        Section::ALL.into_iter().find(|s| {
            s.n_objects() == n_objects && s.multiples() == multiples && s.negation() == negation
        })
    }
}

/// Identifier of one populated prompt-type cell, e.g. `2obj:adj+verb2`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PromptTypeKey {
    pub section: Section,
    /// Attribute kinds, sorted.
    pub kinds: Vec<AttributeKind>,
}

use AttributeKind::{
    Adjective as ADJ, Spatial1Obj as SP1, Spatial2Obj as SP2, TemporalVerb1Obj as TV1,
    TemporalVerb2Obj as TV2, Verb1Obj as V1, Verb2Obj as V2,
};

const CELLS: &[(Section, &[AttributeKind])] = &[
    (Section::Single, &[]),
    (Section::Single, &[ADJ]),
    (Section::Single, &[SP1]),
    (Section::Single, &[V1]),
    (Section::Single, &[ADJ, ADJ]),
    (Section::Single, &[ADJ, SP1]),
    (Section::Single, &[ADJ, V1]),
    (Section::Single, &[SP1, V1]),
    (Section::Single, &[TV1]),
    (Section::Pair, &[]),
    (Section::Pair, &[ADJ]),
    (Section::Pair, &[SP2]),
    (Section::Pair, &[V1]),
    (Section::Pair, &[V2]),
    (Section::Pair, &[ADJ, ADJ]),
    (Section::Pair, &[ADJ, SP2]),
    (Section::Pair, &[ADJ, V1]),
    (Section::Pair, &[ADJ, V2]),
    (Section::Pair, &[SP2, V1]),
    (Section::Pair, &[SP1, V2]),
    (Section::Pair, &[SP1, SP1]),
    (Section::Pair, &[TV1]),
    (Section::Pair, &[TV2]),
    (Section::Pair, &[V1, V1]),
    (Section::SingleMultiples, &[]),
    (Section::SingleMultiples, &[ADJ]),
    (Section::SingleMultiples, &[SP1]),
    (Section::SingleMultiples, &[V1]),
    (Section::PairMultiples, &[]),
    (Section::PairMultiples, &[SP2]),
    (Section::PairMultiples, &[V2]),
    (Section::SingleNegation, &[ADJ]),
    (Section::SingleNegation, &[SP1]),
    (Section::SingleNegation, &[V1]),
    (Section::PairNegation, &[SP2]),
    (Section::PairNegation, &[V2]),
];

/// Every populated cell, in table order.
pub fn all_cells() -> Vec<PromptTypeKey> {
    CELLS
        .iter()
        .map(|(section, kinds)| PromptTypeKey {
            section: *section,
            kinds: kinds.to_vec(),
        })
        .collect()
}

impl PromptTypeKey {
    pub fn index(&self) -> Option<usize> {
        CELLS
            .iter()
            .position(|(s, k)| *s == self.section && *k == self.kinds.as_slice())
    }

    pub fn is_known(&self) -> bool {
        self.index().is_some()
    }

    /// Number of attributes as the tables count them (a temporal word and its verb count twice).
    pub fn attribute_count(&self) -> usize {
        self.kinds
            .iter()
            .map(|k| match k {
                TV1 | TV2 => 2,
                _ => 1,
            })
            .sum()
    }

    /// Column header of the tables this cell sits under.
    pub fn column(&self) -> &'static str {
        match self.kinds.as_slice() {
            [] => "0 attributes",
            [ADJ] => "1 adj.",
            [SP1] | [SP2] => "1 spatial",
            [V1] => "1 1-obj verb",
            [V2] => "1 2-obj verb",
            [ADJ, ADJ] => "2 adj.",
            [ADJ, SP1] | [ADJ, SP2] => "1 adj + 1 spatial",
            [ADJ, V1] => "1 adj + 1 1-obj verb",
            [ADJ, V2] => "1 adj + 1 2-obj verb",
            [SP1, V1] | [SP2, V1] => "1 spatial + 1 1-obj verb",
            [SP1, V2] => "1 spatial + 1 2-obj verb",
            [SP1, SP1] => "2 spatial",
            [TV1] => "1 temp. + 1 1-obj verb",
            [TV2] => "1 temp. + 1 2-obj verb",
            [V1, V1] => "2 verbs",
            _ => "other",
        }
    }

    /// Cells reported apart from the headline average.
    pub fn is_multiples_or_negation(&self) -> bool {
        self.section.multiples() || self.section.negation()
    }
}

pub const TABLE1_COLUMNS: [&str; 15] = [
    "0 attributes",
    "1 adj.",
    "1 spatial",
    "1 1-obj verb",
    "1 2-obj verb",
    "2 adj.",
    "1 adj + 1 spatial",
    "1 adj + 1 1-obj verb",
    "1 adj + 1 2-obj verb",
    "1 spatial + 1 1-obj verb",
    "1 spatial + 1 2-obj verb",
    "2 spatial",
    "1 temp. + 1 1-obj verb",
    "1 temp. + 1 2-obj verb",
    "2 verbs",
];

impl fmt::Display for PromptTypeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.section.as_str())?;
        if self.kinds.is_empty() {
            return f.write_str("none");
        }
        let names: Vec<_> = self.kinds.iter().map(|k| k.short_name()).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for PromptTypeKey {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || SpecError::UnknownKey(s.to_string());
        let (section, kinds) = s.split_once(':').ok_or_else(unknown)?;
        let section = Section::ALL
            .into_iter()
            .find(|sec| sec.as_str() == section)
            .ok_or_else(unknown)?;
        let mut parsed = Vec::new();
        if kinds != "none" {
            for name in kinds.split('+') {
                parsed.push(AttributeKind::from_short_name(name).ok_or_else(unknown)?);
            }
        }
        parsed.sort();
        let key = PromptTypeKey {
            section,
            kinds: parsed,
        };
        if key.is_known() {
            Ok(key)
        } else {
            Err(unknown())
        }
    }
}

impl From<PromptTypeKey> for String {
    fn from(key: PromptTypeKey) -> String {
        key.to_string()
    }
}

impl TryFrom<String> for PromptTypeKey {
    type Error = SpecError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

/// Structured description of a caption, independent of its surface text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSpec {
    pub nouns: Vec<String>,
    pub attributes: Vec<Attribute>,
    /// One numeral word per object when the prompt counts its objects.
    pub multiples: Option<Vec<String>>,
    pub negation: bool,
}

impl PromptSpec {
    pub fn n_objects(&self) -> usize {
        self.nouns.len()
    }

    /// Puts attributes in canonical order: by object, then kind. Same-kind
    /// attributes on one object keep their surface order.
    pub fn canonicalize(&mut self) {
        self.attributes.sort_by_key(|a| (a.object, a.kind));
    }

    pub fn is_canonical(&self) -> bool {
        self.attributes
            .windows(2)
            .all(|w| (w[0].object, w[0].kind) <= (w[1].object, w[1].kind))
    }

    /// Checks every structural invariant and returns the cell this spec belongs to.
    pub fn type_key(&self) -> Result<PromptTypeKey, SpecError> {
        let n = self.n_objects();
        if n != 1 && n != 2 {
            return Err(SpecError::ObjectCount(n));
        }
        if n == 2 && self.nouns[0] == self.nouns[1] {
            return Err(SpecError::RepeatedNoun);
        }
        if let Some(numerals) = &self.multiples {
            if numerals.len() != n {
                return Err(SpecError::MultiplesArity);
            }
            if self.negation {
                return Err(SpecError::MultiplesWithNegation);
            }
            if n == 2 && numerals[0] == numerals[1] {
                return Err(SpecError::RepeatedNumeral);
            }
        }
        if self.negation && self.attributes.len() != 1 {
            return Err(SpecError::NegationArity(self.attributes.len()));
        }
        for attr in &self.attributes {
            if attr.object >= n {
                return Err(SpecError::DanglingBinding(attr.word.clone()));
            }
            if attr.kind.is_relation() && (n != 2 || attr.object != 0) {
                return Err(SpecError::Binding(format!(
                    "relation `{}` needs two objects with the subject first",
                    attr.word
                )));
            }
        }
        for (i, a) in self.attributes.iter().enumerate() {
            for b in &self.attributes[i + 1..] {
                if a.kind == b.kind {
                    if a.word == b.word {
                        return Err(SpecError::RepeatedWord);
                    }
                    // Paired attributes of one kind go one per object in two-object prompts.
                    if n == 2 && a.object == b.object {
                        return Err(SpecError::Binding(format!(
                            "two `{}` attributes on one object",
                            a.kind.short_name()
                        )));
                    }
                }
            }
        }
        let section = Section::from_parts(n, self.multiples.is_some(), self.negation)
            .ok_or_else(|| SpecError::NoCell(format!("{self:?}")))?;
        let mut kinds: Vec<_> = self.attributes.iter().map(|a| a.kind).collect();
        kinds.sort();
        let key = PromptTypeKey { section, kinds };
        if key.is_known() {
            Ok(key)
        } else {
            Err(SpecError::NoCell(key.to_string()))
        }
    }

    /// The companion prompt with its two objects' roles exchanged, if that
    /// changes the prompt.
    ///
    /// With a relation the nouns trade places (subject and object swap).
    /// Without one, every attribute and numeral moves to the other noun.
    pub fn swap_variant(&self) -> Option<PromptSpec> {
        if self.n_objects() != 2 {
            return None;
        }
        let mut swapped = self.clone();
        if self.attributes.iter().any(|a| a.kind.is_relation()) {
            swapped.nouns.reverse();
        } else {
            for attr in &mut swapped.attributes {
                attr.object = 1 - attr.object;
            }
            if let Some(numerals) = &mut swapped.multiples {
                numerals.reverse();
            }
            swapped.canonicalize();
        }
        (swapped != *self).then_some(swapped)
    }
}
