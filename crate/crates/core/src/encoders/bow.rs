use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fnv1a, Caption, EncoderError, TextEncoder};

/// Fixed random vector for a word, uniform in `[-1, 1]^dim`.
fn word_vector(seed: u64, dim: usize, word: &str) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(word.as_bytes()));
    (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
}

/// The indefinite article is one token type for bag encoders, so that
/// re-attaching an adjective never changes the bag.
fn bag_token(word: &str) -> &str {
    if word == "an" {
        "a"
    } else {
        word
    }
}

/// Mean of seeded random word vectors. Blind to word order by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BowEncoder {
    seed: u64,
    dim: usize,
}

impl BowEncoder {
    /// # Panics
    /// If `dim < 8`.
    pub fn new(seed: u64, dim: usize) -> BowEncoder {
        assert!(dim >= 8, "bag-of-words dimension must be at least 8");
        BowEncoder { seed, dim }
    }
}

impl TextEncoder for BowEncoder {
    fn name(&self) -> String {
        format!("bow-{}-{}", self.dim, self.seed)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, caption: &Caption) -> Result<Vec<f32>, EncoderError> {
        let mut tokens: Vec<&str> = caption.text.split_whitespace().map(bag_token).collect();
        if tokens.is_empty() {
            return Ok(vec![0.0; self.dim]);
        }
        // A fixed summation order makes the result bitwise independent of word order.
        tokens.sort_unstable();
        let mut sum = vec![0.0f64; self.dim];
        for t in &tokens {
            for (s, v) in sum.iter_mut().zip(word_vector(self.seed, self.dim, t)) {
                *s += v;
            }
        }
        let n = tokens.len() as f64;
        Ok(sum.into_iter().map(|s| (s / n) as f32).collect())
    }
}

/// Mean of word vectors cyclically rotated by their position: order is
/// present in the vector but entangled with content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionalBowEncoder {
    seed: u64,
    dim: usize,
}

impl PositionalBowEncoder {
    /// # Panics
    /// If `dim < 8`.
    pub fn new(seed: u64, dim: usize) -> PositionalBowEncoder {
        assert!(dim >= 8, "bag-of-words dimension must be at least 8");
        PositionalBowEncoder { seed, dim }
    }
}

impl TextEncoder for PositionalBowEncoder {
    fn name(&self) -> String {
        format!("posbow-{}-{}", self.dim, self.seed)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, caption: &Caption) -> Result<Vec<f32>, EncoderError> {
        let tokens: Vec<&str> = caption.text.split_whitespace().collect();
        if tokens.is_empty() {
            return Ok(vec![0.0; self.dim]);
        }
        let mut sum = vec![0.0f64; self.dim];
        for (pos, t) in tokens.iter().enumerate() {
            let v = word_vector(self.seed, self.dim, t);
            for (i, x) in v.into_iter().enumerate() {
                sum[(i + pos) % self.dim] += x;
            }
        }
        let n = tokens.len() as f64;
        Ok(sum.into_iter().map(|s| (s / n) as f32).collect())
    }
}
