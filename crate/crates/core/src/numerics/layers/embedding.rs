use rand::Rng;

use crate::numerics::{HasParams, NumericError, Parameter, Scalar, Tensor};

/// Lookup table `[vocab, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub table: Parameter<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(name: &str, vocab: usize, dim: usize, rng: &mut impl Rng) -> Embedding<T> {
        Embedding {
            table: Parameter::new(
                format!("{name}.table"),
                Tensor::uniform(&[vocab, dim], 1.0, rng),
            ),
        }
    }

    pub fn vocab(&self) -> usize {
        self.table.value.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.value.shape()[1]
    }

    pub fn forward(&self, ids: &[usize]) -> Result<Vec<T>, NumericError> {
        let (v, d) = (self.vocab(), self.dim());
        let table = self.table.value.data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(NumericError::TokenRange { id, vocab: v });
            }
            out.extend_from_slice(&table[id * d..(id + 1) * d]);
        }
        Ok(out)
    }

    pub fn backward(&mut self, ids: &[usize], dy: &[T]) {
        let d = self.dim();
        let grad = self.table.grad.data_mut();
        for (&id, row) in ids.iter().zip(dy.chunks_exact(d)) {
            for (g, x) in grad[id * d..(id + 1) * d].iter_mut().zip(row) {
                *g += *x;
            }
        }
    }
}

impl<T: Scalar> HasParams<T> for Embedding<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.table]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.table]
    }
}
