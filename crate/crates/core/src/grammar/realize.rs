use super::spec::{AttributeKind, PromptSpec};
use super::Grammar;

impl Grammar {
    /// Surface text of a spec. The spec should be valid; unknown nouns are
    /// realized with default morphology.
    pub fn realize(&self, spec: &PromptSpec) -> String {
        let relation = spec.attributes.iter().find(|a| a.kind.is_relation());
        if spec.negation {
            let mut out = self.noun_phrase(spec, 0, false);
            out.push_str(" that is not ");
            let attr = &spec.attributes[0];
            out.push_str(&attr.word);
            if attr.kind.is_relation() {
                out.push(' ');
                out.push_str(&self.noun_phrase(spec, 1, false));
            }
            return out;
        }
        let mut out = self.noun_phrase(spec, 0, true);
        if spec.n_objects() == 2 {
            match relation {
                Some(rel) => {
                    out.push(' ');
                    out.push_str(&rel.word);
                }
                None => out.push_str(" and"),
            }
            out.push(' ');
            out.push_str(&self.noun_phrase(spec, 1, true));
        }
        out
    }

    /// `[det] [adj (and adj)] noun [spatial] [verb | temporal verb]`
    fn noun_phrase(&self, spec: &PromptSpec, object: usize, with_attributes: bool) -> String {
        let attrs: Vec<_> = spec
            .attributes
            .iter()
            .filter(|a| with_attributes && a.object == object && !a.kind.is_relation())
            .collect();
        let of_kind = |kind: AttributeKind| attrs.iter().filter(move |a| a.kind == kind);

        let numeral = spec.multiples.as_ref().map(|m| m[object].as_str());
        let lemma = spec.nouns[object].as_str();
        let noun = match (numeral, self.noun(lemma)) {
            (Some(_), Some(n)) => n.plural.clone(),
            (Some(_), None) => super::default_plural(lemma),
            (None, _) => lemma.to_string(),
        };

        let adjectives: Vec<&str> = of_kind(AttributeKind::Adjective)
            .map(|a| a.word.as_str())
            .collect();
        let mut body = adjectives.join(" and ");
        if !body.is_empty() {
            body.push(' ');
        }
        body.push_str(&noun);

        let determiner = match numeral {
            Some(word) => word,
            None => match adjectives.first() {
                Some(adj) => self.vocab().article_for(adj),
                None => self.vocab().article_for(lemma),
            },
        };

        let mut out = format!("{determiner} {body}");
        for kind in [
            AttributeKind::Spatial1Obj,
            AttributeKind::Verb1Obj,
            AttributeKind::TemporalVerb1Obj,
        ] {
            for attr in of_kind(kind) {
                out.push(' ');
                out.push_str(&attr.word);
            }
        }
        out
    }
}
