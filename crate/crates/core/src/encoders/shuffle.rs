use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Caption, EncoderError, TextEncoder};

/// Seeded uniform permutation of `0..n` (Fisher-Yates).
pub fn permutation(seed: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i as u64) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Applies one fixed permutation to the dimensions of every output:
/// `out[i] = inner[perm[i]]`.
#[derive(Debug, Clone)]
pub struct ShuffledEncoder<E> {
    inner: E,
    perm: Vec<usize>,
    label: String,
}

impl<E: TextEncoder> ShuffledEncoder<E> {
    pub fn new(inner: E, seed: u64) -> ShuffledEncoder<E> {
        let perm = permutation(seed, inner.dim());
        ShuffledEncoder {
            label: format!("shuffle{seed}"),
            inner,
            perm,
        }
    }

    pub fn with_permutation(inner: E, perm: Vec<usize>) -> ShuffledEncoder<E> {
        assert_eq!(perm.len(), inner.dim(), "permutation length");
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            assert!(!std::mem::replace(&mut seen[p], true), "not a permutation");
        }
        ShuffledEncoder {
            label: "shuffle".into(),
            inner,
            perm,
        }
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// The permutation that undoes this one.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        inv
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn apply(&self, v: &[f32]) -> Vec<f32> {
        self.perm.iter().map(|&p| v[p]).collect()
    }
}

impl<E: TextEncoder> TextEncoder for ShuffledEncoder<E> {
    fn name(&self) -> String {
        format!("{}+{}", self.inner.name(), self.label)
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn encode(&self, caption: &Caption) -> Result<Vec<f32>, EncoderError> {
        Ok(self.apply(&self.inner.encode(caption)?))
    }

    fn encode_all(&self, captions: &[Caption]) -> Result<Vec<Vec<f32>>, EncoderError> {
        Ok(self
            .inner
            .encode_all(captions)?
            .iter()
            .map(|v| self.apply(v))
            .collect())
    }
}
