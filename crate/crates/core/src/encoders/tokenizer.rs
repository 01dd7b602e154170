use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::grammar::Vocabulary;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Closed word-level vocabulary: four special ids, then sorted words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Tokenizer {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Tokenizer {
    pub fn new(mut words: Vec<String>) -> Tokenizer {
        words.retain(|w| !SPECIALS.contains(&w.as_str()));
        words.sort();
        words.dedup();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i + SPECIALS.len()))
            .collect();
        Tokenizer { words, index }
    }

    pub fn from_vocab(vocab: &Vocabulary) -> Tokenizer {
        Tokenizer::new(vocab.token_inventory())
    }

    pub fn len(&self) -> usize {
        self.words.len() + SPECIALS.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        match id {
            i if i < SPECIALS.len() => SPECIALS[i],
            i => self
                .words
                .get(i - SPECIALS.len())
                .map_or("<unk>", String::as_str),
        }
    }

    /// Word ids, without BOS/EOS.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    /// Words up to the first EOS; PAD and BOS are dropped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i != PAD && i != BOS)
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl From<Vec<String>> for Tokenizer {
    fn from(words: Vec<String>) -> Self {
        Tokenizer::new(words)
    }
}

impl From<Tokenizer> for Vec<String> {
    fn from(t: Tokenizer) -> Self {
        t.words
    }
}
