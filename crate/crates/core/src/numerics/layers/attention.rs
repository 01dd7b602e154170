use rand::Rng;

use super::Linear;
use crate::numerics::{shape_error, HasParams, NumericError, Parameter, Scalar};

/// Single-head scaled dot-product attention from each query row to its own
/// memory of `m` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttention<T> {
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub output: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Attention weights, `[rows, m]`.
    pub weights: Vec<T>,
    ctx: Vec<T>,
    slots: usize,
}

impl<T: Scalar> CrossAttention<T> {
    pub fn new(name: &str, dim: usize, memory_dim: usize, rng: &mut impl Rng) -> Self {
        CrossAttention {
            query: Linear::new(&format!("{name}.query"), dim, dim, rng),
            key: Linear::new(&format!("{name}.key"), memory_dim, dim, rng),
            value: Linear::new(&format!("{name}.value"), memory_dim, dim, rng),
            output: Linear::new(&format!("{name}.output"), dim, dim, rng),
        }
    }

    fn dim(&self) -> usize {
        self.query.out_dim()
    }

    /// `x` is `[rows, dim]`, `memory` is `[rows, slots, memory_dim]`.
    pub fn forward(
        &self,
        x: &[T],
        memory: &[T],
        rows: usize,
        slots: usize,
    ) -> Result<(Vec<T>, AttentionCache<T>), NumericError> {
        let d = self.dim();
        if slots == 0 || memory.len() != rows * slots * self.key.in_dim() {
            return Err(shape_error(
                "attention.memory",
                format!("{rows} x {slots} x {}", self.key.in_dim()),
                format!("{} values", memory.len()),
            ));
        }
        let q = self.query.forward(x, rows)?;
        let k = self.key.forward(memory, rows * slots)?;
        let v = self.value.forward(memory, rows * slots)?;
        let scale = T::one() / T::lit(d as f64).sqrt();
        let mut weights = vec![T::zero(); rows * slots];
        let mut ctx = vec![T::zero(); rows * d];
        for r in 0..rows {
            let qr = &q[r * d..(r + 1) * d];
            let w = &mut weights[r * slots..(r + 1) * slots];
            for (s, ws) in w.iter_mut().enumerate() {
                let ks = &k[(r * slots + s) * d..(r * slots + s + 1) * d];
                *ws = qr.iter().zip(ks).map(|(&a, &b)| a * b).sum::<T>() * scale;
            }
            let max = w.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for ws in w.iter_mut() {
                *ws = (*ws - max).exp();
                total += *ws;
            }
            for ws in w.iter_mut() {
                *ws /= total;
            }
            let c = &mut ctx[r * d..(r + 1) * d];
            for (s, &ws) in w.iter().enumerate() {
                let vs = &v[(r * slots + s) * d..(r * slots + s + 1) * d];
                for (ci, &vi) in c.iter_mut().zip(vs) {
                    *ci += ws * vi;
                }
            }
        }
        let out = self.output.forward(&ctx, rows)?;
        Ok((
            out,
            AttentionCache {
                q,
                k,
                v,
                weights,
                ctx,
                slots,
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: &AttentionCache<T>,
        x: &[T],
        memory: &[T],
        dout: &[T],
        rows: usize,
        dx: &mut [T],
        dmemory: Option<&mut [T]>,
    ) {
        let d = self.dim();
        let slots = cache.slots;
        let scale = T::one() / T::lit(d as f64).sqrt();
        let mut dctx = vec![T::zero(); rows * d];
        self.output
            .backward(&cache.ctx, dout, rows, Some(&mut dctx));

        let mut dq = vec![T::zero(); rows * d];
        let mut dk = vec![T::zero(); rows * slots * d];
        let mut dv = vec![T::zero(); rows * slots * d];
        for r in 0..rows {
            let dc = &dctx[r * d..(r + 1) * d];
            let w = &cache.weights[r * slots..(r + 1) * slots];
            let mut dw = vec![T::zero(); slots];
            for s in 0..slots {
                let off = (r * slots + s) * d;
                dw[s] = dc
                    .iter()
                    .zip(&cache.v[off..off + d])
                    .map(|(&a, &b)| a * b)
                    .sum();
                for (g, &c) in dv[off..off + d].iter_mut().zip(dc) {
                    *g += w[s] * c;
                }
            }
            let dot: T = w.iter().zip(&dw).map(|(&a, &b)| a * b).sum();
            for s in 0..slots {
                let ds = w[s] * (dw[s] - dot) * scale;
                if ds == T::zero() {
                    continue;
                }
                let off = (r * slots + s) * d;
                for j in 0..d {
                    dq[r * d + j] += ds * cache.k[off + j];
                    dk[off + j] += ds * cache.q[r * d + j];
                }
            }
        }
        self.query.backward(x, &dq, rows, Some(dx));
        match dmemory {
            Some(dm) => {
                self.key.backward(memory, &dk, rows * slots, Some(&mut *dm));
                self.value.backward(memory, &dv, rows * slots, Some(dm));
            }
            None => {
                self.key.backward(memory, &dk, rows * slots, None);
                self.value.backward(memory, &dv, rows * slots, None);
            }
        }
    }
}

impl<T: Scalar> HasParams<T> for CrossAttention<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let mut out = self.query.params();
        out.extend(self.key.params());
        out.extend(self.value.params());
        out.extend(self.output.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = self.query.params_mut();
        out.extend(self.key.params_mut());
        out.extend(self.value.params_mut());
        out.extend(self.output.params_mut());
        out
    }
}
