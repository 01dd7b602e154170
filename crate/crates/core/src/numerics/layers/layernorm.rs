use crate::numerics::{shape_error, HasParams, NumericError, Parameter, Scalar, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-row normalization with learned scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    /// Normalized input before the affine map.
    pub xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(name: &str, dim: usize) -> LayerNorm<T> {
        let mut gamma = Tensor::zeros(&[dim]);
        gamma.fill(T::one());
        LayerNorm {
            gamma: Parameter::new(format!("{name}.gamma"), gamma),
            beta: Parameter::new(format!("{name}.beta"), Tensor::zeros(&[dim])),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn forward(
        &self,
        x: &[T],
        rows: usize,
    ) -> Result<(Vec<T>, LayerNormCache<T>), NumericError> {
        let d = self.dim();
        if x.len() != rows * d {
            return Err(shape_error(
                &self.gamma.name,
                format!("{rows} x {d}"),
                format!("{} values", x.len()),
            ));
        }
        let n = T::lit(d as f64);
        let eps = T::lit(LAYER_NORM_EPS);
        let (gamma, beta) = (self.gamma.value.data(), self.beta.value.data());
        let mut y = Vec::with_capacity(x.len());
        let mut xhat = Vec::with_capacity(x.len());
        let mut inv_std = Vec::with_capacity(rows);
        for row in x.chunks_exact(d) {
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * inv;
                xhat.push(h);
                y.push(h * gamma[j] + beta[j]);
            }
        }
        Ok((y, LayerNormCache { xhat, inv_std }))
    }

    pub fn backward(&mut self, cache: &LayerNormCache<T>, dy: &[T], dx: &mut [T]) {
        let d = self.dim();
        let n = T::lit(d as f64);
        let gamma = self.gamma.value.data().to_vec();
        let dgamma = self.gamma.grad.data_mut();
        for (row_dy, row_h) in dy.chunks_exact(d).zip(cache.xhat.chunks_exact(d)) {
            for j in 0..d {
                dgamma[j] += row_dy[j] * row_h[j];
            }
        }
        let dbeta = self.beta.grad.data_mut();
        for row_dy in dy.chunks_exact(d) {
            for j in 0..d {
                dbeta[j] += row_dy[j];
            }
        }
        for (r, inv) in cache.inv_std.iter().enumerate() {
            let span = r * d..(r + 1) * d;
            let h = &cache.xhat[span.clone()];
            let g: Vec<T> = dy[span.clone()]
                .iter()
                .zip(&gamma)
                .map(|(&a, &b)| a * b)
                .collect();
            let mean_g = g.iter().copied().sum::<T>() / n;
            let mean_gh = g.iter().zip(h).map(|(&a, &b)| a * b).sum::<T>() / n;
            for (j, out) in dx[span].iter_mut().enumerate() {
                *out += *inv * (g[j] - mean_g - h[j] * mean_gh);
            }
        }
    }
}

impl<T: Scalar> HasParams<T> for LayerNorm<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
