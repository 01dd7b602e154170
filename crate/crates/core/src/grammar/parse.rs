use thiserror::Error;

use super::spec::{Attribute, AttributeKind, PromptSpec};
use super::Grammar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no parse: stopped at token {position} ({found})")]
    NoParse { position: usize, found: String },
    #[error("text matches the grammar shape but is not a valid prompt: {0}")]
    Invalid(String),
    #[error("text has {count} distinct parses")]
    Ambiguous { count: usize },
}

#[derive(Debug, Clone)]
struct NounPhrase {
    numeral: Option<String>,
    noun: String,
    adjectives: Vec<String>,
    /// Spatial, verb and temporal phrases after the noun.
    trailing: Vec<(AttributeKind, String)>,
}

struct Cursor<'a> {
    tokens: Vec<&'a str>,
    furthest: usize,
}

impl<'a> Cursor<'a> {
    fn at(&self, pos: usize) -> Option<&'a str> {
        self.tokens.get(pos).copied()
    }

    fn reach(&mut self, pos: usize) {
        self.furthest = self.furthest.max(pos);
    }

    fn matches(&mut self, pos: usize, phrase: &[String]) -> bool {
        let ok = phrase
            .iter()
            .enumerate()
            .all(|(i, w)| self.at(pos + i) == Some(w.as_str()));
        if ok {
            self.reach(pos + phrase.len());
        }
        ok
    }
}

impl Grammar {
    /// Recovers the unique spec whose realization is exactly `text`.
    pub fn parse(&self, text: &str) -> Result<PromptSpec, ParseError> {
        let mut cur = Cursor {
            tokens: text.split_whitespace().collect(),
            furthest: 0,
        };
        let end = cur.tokens.len();
        let mut shapes: Vec<PromptSpec> = Vec::new();

        for (np0, p) in self.noun_phrases(&mut cur, 0) {
            if p == end {
                shapes.extend(assemble(&np0, None, None, false));
                continue;
            }
            if cur.at(p) == Some("and") {
                cur.reach(p + 1);
                for (np1, q) in self.noun_phrases(&mut cur, p + 1) {
                    if q == end {
                        shapes.extend(assemble(&np0, Some(&np1), None, false));
                    }
                }
                continue;
            }
            if cur.matches(p, &["that".into(), "is".into(), "not".into()]) {
                for (attr, q) in self.predicates(&mut cur, p + 3) {
                    if attr.0.is_relation() {
                        for (np1, r) in self.noun_phrases(&mut cur, q) {
                            if r == end {
                                shapes.extend(assemble(&np0, Some(&np1), Some(&attr), true));
                            }
                        }
                    } else if q == end {
                        let mut bare = np0.clone();
                        bare.trailing.push(attr);
                        shapes.extend(assemble(&bare, None, None, true));
                    }
                }
                continue;
            }
            for (rel, q) in self.relations(&mut cur, p) {
                for (np1, r) in self.noun_phrases(&mut cur, q) {
                    if r == end {
                        shapes.extend(assemble(&np0, Some(&np1), Some(&rel), false));
                    }
                }
            }
        }

        if shapes.is_empty() {
            let position = cur.furthest;
            let found = cur.at(position).unwrap_or("end of text").to_string();
            return Err(ParseError::NoParse { position, found });
        }
        let mut valid: Vec<PromptSpec> = Vec::new();
        let mut last_error = None;
        for mut spec in shapes {
            spec.canonicalize();
            match spec.type_key() {
                Ok(_) if self.realize(&spec) == text => {
                    if !valid.contains(&spec) {
                        valid.push(spec);
                    }
                }
                Ok(_) => {
                    last_error = Some(format!("`{}` is not in canonical form", text));
                }
                Err(e) => last_error = Some(e.to_string()),
            }
        }
        match valid.len() {
            0 => Err(ParseError::Invalid(last_error.unwrap_or_default())),
            1 => Ok(valid.pop().expect("one parse")),
            count => Err(ParseError::Ambiguous { count }),
        }
    }

    fn noun_phrases(&self, cur: &mut Cursor, pos: usize) -> Vec<(NounPhrase, usize)> {
        let Some(det) = cur.at(pos) else {
            return Vec::new();
        };
        let numeral = if det == "a" || det == "an" {
            None
        } else if self.is_numeral(det) {
            Some(det.to_string())
        } else {
            return Vec::new();
        };
        let mut p = pos + 1;
        cur.reach(p);
        let mut adjectives = Vec::new();
        while let Some(word) = cur.at(p).filter(|w| self.adjectives.contains(*w)) {
            adjectives.push(word.to_string());
            p += 1;
            cur.reach(p);
            let more = cur.at(p) == Some("and")
                && cur.at(p + 1).is_some_and(|w| self.adjectives.contains(w));
            if !more {
                break;
            }
            p += 1;
        }
        let Some(word) = cur.at(p) else {
            return Vec::new();
        };
        let noun = match numeral {
            None => self.noun_index.get(word).map(|_| word.to_string()),
            Some(_) => self
                .plural_index
                .get(word)
                .map(|&i| self.vocab().nouns[i].lemma.clone()),
        };
        let Some(noun) = noun else {
            return Vec::new();
        };
        p += 1;
        cur.reach(p);
        let head = NounPhrase {
            numeral,
            noun,
            adjectives,
            trailing: Vec::new(),
        };

        let mut out = vec![(head.clone(), p)];
        let mut after_spatial = vec![(head, p)];
        for phrase in &self.spatial_intransitive {
            if cur.matches(p, phrase) {
                let mut np = after_spatial[0].0.clone();
                np.trailing
                    .push((AttributeKind::Spatial1Obj, phrase.join(" ")));
                after_spatial.push((np.clone(), p + phrase.len()));
                out.push((np, p + phrase.len()));
            }
        }
        for (np, q) in after_spatial {
            for (verb, r) in self.intransitive_predicates(cur, q) {
                let mut np = np.clone();
                np.trailing.push(verb);
                out.push((np, r));
            }
        }
        out
    }

    /// Plain or temporal intransitive verb at `pos`.
    fn intransitive_predicates(
        &self,
        cur: &mut Cursor,
        pos: usize,
    ) -> Vec<((AttributeKind, String), usize)> {
        let mut out = Vec::new();
        match cur.at(pos) {
            Some(w) if self.intransitive.contains(w) => {
                cur.reach(pos + 1);
                out.push(((AttributeKind::Verb1Obj, w.to_string()), pos + 1));
            }
            Some(t) if self.temporal.contains(t) => {
                cur.reach(pos + 1);
                if let Some(v) = cur.at(pos + 1).filter(|v| self.intransitive.contains(*v)) {
                    cur.reach(pos + 2);
                    out.push((
                        (AttributeKind::TemporalVerb1Obj, format!("{t} {v}")),
                        pos + 2,
                    ));
                }
            }
            _ => {}
        }
        out
    }

    /// Relation phrase at `pos`: spatial, transitive verb, or temporal + transitive verb.
    fn relations(&self, cur: &mut Cursor, pos: usize) -> Vec<((AttributeKind, String), usize)> {
        let mut out = Vec::new();
        for phrase in &self.spatial_transitive {
            if cur.matches(pos, phrase) {
                out.push((
                    (AttributeKind::Spatial2Obj, phrase.join(" ")),
                    pos + phrase.len(),
                ));
            }
        }
        match cur.at(pos) {
            Some(w) if self.transitive.contains(w) => {
                cur.reach(pos + 1);
                out.push(((AttributeKind::Verb2Obj, w.to_string()), pos + 1));
            }
            Some(t) if self.temporal.contains(t) => {
                if let Some(v) = cur.at(pos + 1).filter(|v| self.transitive.contains(*v)) {
                    cur.reach(pos + 2);
                    out.push((
                        (AttributeKind::TemporalVerb2Obj, format!("{t} {v}")),
                        pos + 2,
                    ));
                }
            }
            _ => {}
        }
        out
    }

    /// Anything that can follow "that is not".
    fn predicates(&self, cur: &mut Cursor, pos: usize) -> Vec<((AttributeKind, String), usize)> {
        let mut out = Vec::new();
        if let Some(w) = cur.at(pos).filter(|w| self.adjectives.contains(*w)) {
            cur.reach(pos + 1);
            out.push(((AttributeKind::Adjective, w.to_string()), pos + 1));
        }
        for phrase in &self.spatial_intransitive {
            if cur.matches(pos, phrase) {
                out.push((
                    (AttributeKind::Spatial1Obj, phrase.join(" ")),
                    pos + phrase.len(),
                ));
            }
        }
        out.extend(self.intransitive_predicates(cur, pos));
        out.extend(self.relations(cur, pos));
        out
    }
}

/// Builds a spec from parsed pieces. Returns nothing when numerals are mixed
/// with articles, which no template produces.
fn assemble(
    np0: &NounPhrase,
    np1: Option<&NounPhrase>,
    relation: Option<&(AttributeKind, String)>,
    negation: bool,
) -> Option<PromptSpec> {
    let nps: Vec<&NounPhrase> = std::iter::once(np0).chain(np1).collect();
    let numerals: Vec<_> = nps.iter().map(|np| np.numeral.clone()).collect();
    let multiples = if numerals.iter().all(Option::is_some) {
        Some(numerals.into_iter().map(Option::unwrap).collect())
    } else if numerals.iter().all(Option::is_none) {
        None
    } else {
        return None;
    };
    let mut attributes = Vec::new();
    for (object, np) in nps.iter().enumerate() {
        for adj in &np.adjectives {
            attributes.push(Attribute::new(
                AttributeKind::Adjective,
                adj.clone(),
                object,
            ));
        }
        for (kind, word) in &np.trailing {
            attributes.push(Attribute::new(*kind, word.clone(), object));
        }
    }
    if let Some((kind, word)) = relation {
        attributes.push(Attribute::new(*kind, word.clone(), 0));
    }
    Some(PromptSpec {
        nouns: nps.iter().map(|np| np.noun.clone()).collect(),
        attributes,
        multiples,
        negation,
    })
}
