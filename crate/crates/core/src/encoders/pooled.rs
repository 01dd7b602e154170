use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Caption, EncoderError, TextEncoder, Tokenizer, PAD};
use crate::numerics::layers::{Embedding, GruCache, GruCell, Linear};
use crate::numerics::{HasParams, NumericError, Parameter, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PooledConfig {
    pub dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub seed: u64,
}

impl Default for PooledConfig {
    fn default() -> Self {
        PooledConfig {
            dim: 256,
            hidden: 256,
            layers: 1,
            seed: 0,
        }
    }
}

/// Token embeddings, stacked GRUs, mean pool over real positions, and a
/// projection to `dim` when `dim != hidden`.
#[derive(Debug, Clone)]
pub struct PooledEncoder<T = f32> {
    config: PooledConfig,
    tokenizer: Tokenizer,
    pub embedding: Embedding<T>,
    pub grus: Vec<GruCell<T>>,
    pub projection: Option<Linear<T>>,
}

/// Activations kept for the backward pass. Time-major.
#[derive(Debug, Clone)]
pub struct PooledCache<T> {
    rows: usize,
    lengths: Vec<usize>,
    ids: Vec<Vec<usize>>,
    /// `inputs[l][t]`: input to layer `l` at step `t`.
    inputs: Vec<Vec<Vec<T>>>,
    /// `states[l][t]`: output of layer `l` at step `t`.
    states: Vec<Vec<Vec<T>>>,
    caches: Vec<Vec<GruCache<T>>>,
    pooled: Vec<T>,
}

impl<T: Scalar> PooledEncoder<T> {
    /// # Panics
    /// If any size in `config` is zero.
    pub fn new(config: PooledConfig, tokenizer: Tokenizer) -> PooledEncoder<T> {
        assert!(
            config.dim > 0 && config.hidden > 0 && config.layers > 0,
            "pooled encoder sizes must be positive"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden;
        let embedding = Embedding::new("encoder.embedding", tokenizer.len(), h, &mut rng);
        let grus = (0..config.layers)
            .map(|l| GruCell::new(&format!("encoder.gru{l}"), h, h, &mut rng))
            .collect();
        let projection =
            (config.dim != h).then(|| Linear::new("encoder.projection", h, config.dim, &mut rng));
        PooledEncoder {
            config,
            tokenizer,
            embedding,
            grus,
            projection,
        }
    }

    pub fn config(&self) -> &PooledConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn cast<U: Scalar>(&self) -> PooledEncoder<U> {
        let mut out = PooledEncoder::<U>::new(self.config, self.tokenizer.clone());
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        out
    }

    /// Encodes a batch of token-id sequences to `[rows, dim]`. An empty
    /// sequence pools to zero.
    pub fn forward(&self, batch: &[Vec<usize>]) -> Result<(Vec<T>, PooledCache<T>), NumericError> {
        let rows = batch.len();
        let h = self.config.hidden;
        let steps = batch.iter().map(Vec::len).max().unwrap_or(0);
        let lengths: Vec<usize> = batch.iter().map(Vec::len).collect();
        let ids: Vec<Vec<usize>> = (0..steps)
            .map(|t| {
                batch
                    .iter()
                    .map(|s| s.get(t).copied().unwrap_or(PAD))
                    .collect()
            })
            .collect();

        let mut layer_in = ids
            .iter()
            .map(|step| self.embedding.forward(step))
            .collect::<Result<Vec<_>, _>>()?;
        let mut inputs = Vec::with_capacity(self.grus.len());
        let mut states = Vec::with_capacity(self.grus.len());
        let mut caches = Vec::with_capacity(self.grus.len());
        for gru in &self.grus {
            let mut hs = Vec::with_capacity(steps);
            let mut cs = Vec::with_capacity(steps);
            let mut prev = vec![T::zero(); rows * h];
            for x in &layer_in {
                let (next, cache) = gru.forward(x, &prev, rows)?;
                hs.push(next.clone());
                cs.push(cache);
                prev = next;
            }
            inputs.push(std::mem::replace(&mut layer_in, hs.clone()));
            states.push(hs);
            caches.push(cs);
        }

        let mut pooled = vec![T::zero(); rows * h];
        if let Some(top) = states.last() {
            for (t, state) in top.iter().enumerate() {
                for (b, &len) in lengths.iter().enumerate() {
                    if t < len {
                        let scale = T::lit(1.0 / len as f64);
                        for j in 0..h {
                            pooled[b * h + j] += state[b * h + j] * scale;
                        }
                    }
                }
            }
        }
        let out = match &self.projection {
            Some(p) => p.forward(&pooled, rows)?,
            None => pooled.clone(),
        };
        Ok((
            out,
            PooledCache {
                rows,
                lengths,
                ids,
                inputs,
                states,
                caches,
                pooled,
            },
        ))
    }

    /// Accumulates parameter gradients for upstream gradient `dy`.
    pub fn backward(&mut self, cache: &PooledCache<T>, dy: &[T]) {
        let rows = cache.rows;
        let h = self.config.hidden;
        let steps = cache.ids.len();
        let mut dpooled = vec![T::zero(); rows * h];
        match &mut self.projection {
            Some(p) => p.backward(&cache.pooled, dy, rows, Some(&mut dpooled)),
            None => dpooled.copy_from_slice(dy),
        }

        let mut dstates: Vec<Vec<T>> = (0..steps)
            .map(|t| {
                let mut d = vec![T::zero(); rows * h];
                for (b, &len) in cache.lengths.iter().enumerate() {
                    if t < len {
                        let scale = T::lit(1.0 / len as f64);
                        for j in 0..h {
                            d[b * h + j] = dpooled[b * h + j] * scale;
                        }
                    }
                }
                d
            })
            .collect();

        let zeros = vec![T::zero(); rows * h];
        for (l, gru) in self.grus.iter_mut().enumerate().rev() {
            let mut dinputs = vec![vec![T::zero(); rows * h]; steps];
            let mut carry = vec![T::zero(); rows * h];
            for t in (0..steps).rev() {
                let dh: Vec<T> = dstates[t]
                    .iter()
                    .zip(&carry)
                    .map(|(&a, &b)| a + b)
                    .collect();
                let prev = if t == 0 {
                    &zeros
                } else {
                    &cache.states[l][t - 1]
                };
                let mut dprev = vec![T::zero(); rows * h];
                gru.backward(
                    &cache.caches[l][t],
                    &cache.inputs[l][t],
                    prev,
                    &dh,
                    rows,
                    Some(&mut dinputs[t]),
                    &mut dprev,
                );
                carry = dprev;
            }
            dstates = dinputs;
        }
        for (step, d) in cache.ids.iter().zip(&dstates) {
            self.embedding.backward(step, d);
        }
    }

    pub fn encode_ids(&self, batch: &[Vec<usize>]) -> Result<Vec<T>, NumericError> {
        Ok(self.forward(batch)?.0)
    }
}

impl<T: Scalar> HasParams<T> for PooledEncoder<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let mut ps = vec![&self.embedding.table];
        for g in &self.grus {
            ps.extend(g.params());
        }
        if let Some(p) = &self.projection {
            ps.extend(p.params());
        }
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut ps = vec![&mut self.embedding.table];
        for g in &mut self.grus {
            ps.extend(g.params_mut());
        }
        if let Some(p) = &mut self.projection {
            ps.extend(p.params_mut());
        }
        ps
    }
}

const ENCODE_CHUNK: usize = 128;

impl TextEncoder for PooledEncoder<f32> {
    fn name(&self) -> String {
        format!(
            "pooled-gru{}x{}-{}",
            self.config.layers, self.config.hidden, self.config.dim
        )
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn encode(&self, caption: &Caption) -> Result<Vec<f32>, EncoderError> {
        Ok(self.encode_ids(&[self.tokenizer.encode(caption.text)])?)
    }

    fn encode_all(&self, captions: &[Caption]) -> Result<Vec<Vec<f32>>, EncoderError> {
        let chunks = captions
            .par_chunks(ENCODE_CHUNK)
            .map(|chunk| {
                let ids: Vec<Vec<usize>> = chunk
                    .iter()
                    .map(|c| self.tokenizer.encode(c.text))
                    .collect();
                self.encode_ids(&ids)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let d = self.config.dim;
        Ok(chunks
            .iter()
            .flat_map(|flat| flat.chunks(d).map(<[f32]>::to_vec))
            .collect())
    }
}
