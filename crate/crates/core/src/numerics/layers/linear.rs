use rand::Rng;

use crate::numerics::{matmul, shape_error, HasParams, NumericError, Parameter, Scalar, Tensor};

/// `y = x W + b` with `W` stored as `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Linear<T> {
        let scale = 1.0 / (in_dim as f64).sqrt();
        Linear {
            weight: Parameter::new(
                format!("{name}.weight"),
                Tensor::uniform(&[in_dim, out_dim], scale, rng),
            ),
            bias: Parameter::new(
                format!("{name}.bias"),
                Tensor::uniform(&[out_dim], scale, rng),
            ),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&self, x: &[T], rows: usize) -> Result<Vec<T>, NumericError> {
        let (i, o) = (self.in_dim(), self.out_dim());
        if x.len() != rows * i {
            return Err(shape_error(
                &self.weight.name,
                format!("{rows} x {i}"),
                format!("{} values", x.len()),
            ));
        }
        let mut y: Vec<T> = Vec::with_capacity(rows * o);
        for _ in 0..rows {
            y.extend_from_slice(self.bias.value.data());
        }
        matmul(
            x,
            false,
            self.weight.value.data(),
            false,
            &mut y,
            rows,
            i,
            o,
            T::one(),
        );
        Ok(y)
    }

    /// Accumulates parameter gradients and, if given, `dx += dy W^T`.
    pub fn backward(&mut self, x: &[T], dy: &[T], rows: usize, dx: Option<&mut [T]>) {
        let (i, o) = (self.in_dim(), self.out_dim());
        debug_assert_eq!(dy.len(), rows * o);
        matmul(
            x,
            true,
            dy,
            false,
            self.weight.grad.data_mut(),
            i,
            rows,
            o,
            T::one(),
        );
        let db = self.bias.grad.data_mut();
        for row in dy.chunks_exact(o) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += *d;
            }
        }
        if let Some(dx) = dx {
            matmul(
                dy,
                false,
                self.weight.value.data(),
                true,
                dx,
                rows,
                o,
                i,
                T::one(),
            );
        }
    }
}

impl<T: Scalar> HasParams<T> for Linear<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
