use rand::Rng;

use crate::numerics::{matmul, shape_error, HasParams, NumericError, Parameter, Scalar, Tensor};

/// Gated recurrent unit, gates ordered reset, update, candidate:
///
/// ```text
/// r  = sigmoid(x W_r + b_ir + h U_r + b_hr)
/// z  = sigmoid(x W_z + b_iz + h U_z + b_hz)
/// n  = tanh(x W_n + b_in + r * (h U_n + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell<T> {
    pub w_ih: Parameter<T>,
    pub w_hh: Parameter<T>,
    pub b_ih: Parameter<T>,
    pub b_hh: Parameter<T>,
}

#[derive(Debug, Clone)]
pub struct GruCache<T> {
    gh_n: Vec<T>,
    r: Vec<T>,
    z: Vec<T>,
    n: Vec<T>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Scalar> GruCell<T> {
    pub fn new(name: &str, in_dim: usize, hidden: usize, rng: &mut impl Rng) -> GruCell<T> {
        let scale = 1.0 / (hidden as f64).sqrt();
        GruCell {
            w_ih: Parameter::new(
                format!("{name}.w_ih"),
                Tensor::uniform(&[in_dim, 3 * hidden], scale, rng),
            ),
            w_hh: Parameter::new(
                format!("{name}.w_hh"),
                Tensor::uniform(&[hidden, 3 * hidden], scale, rng),
            ),
            b_ih: Parameter::new(
                format!("{name}.b_ih"),
                Tensor::uniform(&[3 * hidden], scale, rng),
            ),
            b_hh: Parameter::new(
                format!("{name}.b_hh"),
                Tensor::uniform(&[3 * hidden], scale, rng),
            ),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w_ih.value.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.value.shape()[0]
    }

    pub fn forward(
        &self,
        x: &[T],
        h: &[T],
        rows: usize,
    ) -> Result<(Vec<T>, GruCache<T>), NumericError> {
        let (i, hd) = (self.in_dim(), self.hidden());
        if x.len() != rows * i || h.len() != rows * hd {
            return Err(shape_error(
                &self.w_ih.name,
                format!("x {rows} x {i}, h {rows} x {hd}"),
                format!("x {} values, h {} values", x.len(), h.len()),
            ));
        }
        let g = 3 * hd;
        let mut gi = Vec::with_capacity(rows * g);
        let mut gh = Vec::with_capacity(rows * g);
        for _ in 0..rows {
            gi.extend_from_slice(self.b_ih.value.data());
            gh.extend_from_slice(self.b_hh.value.data());
        }
        matmul(
            x,
            false,
            self.w_ih.value.data(),
            false,
            &mut gi,
            rows,
            i,
            g,
            T::one(),
        );
        matmul(
            h,
            false,
            self.w_hh.value.data(),
            false,
            &mut gh,
            rows,
            hd,
            g,
            T::one(),
        );

        let mut out = Vec::with_capacity(rows * hd);
        let mut cache = GruCache {
            gh_n: Vec::with_capacity(rows * hd),
            r: Vec::with_capacity(rows * hd),
            z: Vec::with_capacity(rows * hd),
            n: Vec::with_capacity(rows * hd),
        };
        for row in 0..rows {
            let (gi, gh) = (&gi[row * g..(row + 1) * g], &gh[row * g..(row + 1) * g]);
            for j in 0..hd {
                let r = sigmoid(gi[j] + gh[j]);
                let z = sigmoid(gi[hd + j] + gh[hd + j]);
                let n = (gi[2 * hd + j] + r * gh[2 * hd + j]).tanh();
                out.push((T::one() - z) * n + z * h[row * hd + j]);
                cache.gh_n.push(gh[2 * hd + j]);
                cache.r.push(r);
                cache.z.push(z);
                cache.n.push(n);
            }
        }
        Ok((out, cache))
    }

    /// Accumulates parameter gradients, `dx` (if given) and `dh_prev`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &mut self,
        cache: &GruCache<T>,
        x: &[T],
        h: &[T],
        dh_out: &[T],
        rows: usize,
        dx: Option<&mut [T]>,
        dh_prev: &mut [T],
    ) {
        let (i, hd) = (self.in_dim(), self.hidden());
        let g = 3 * hd;
        let mut dgi = vec![T::zero(); rows * g];
        let mut dgh = vec![T::zero(); rows * g];
        for row in 0..rows {
            for j in 0..hd {
                let k = row * hd + j;
                let (r, z, n) = (cache.r[k], cache.z[k], cache.n[k]);
                let d = dh_out[k];
                dh_prev[k] += d * z;
                let dn = d * (T::one() - z) * (T::one() - n * n);
                let dz = d * (h[k] - n) * z * (T::one() - z);
                let dr = dn * cache.gh_n[k] * r * (T::one() - r);
                let base = row * g;
                dgi[base + j] = dr;
                dgh[base + j] = dr;
                dgi[base + hd + j] = dz;
                dgh[base + hd + j] = dz;
                dgi[base + 2 * hd + j] = dn;
                dgh[base + 2 * hd + j] = dn * r;
            }
        }
        matmul(
            x,
            true,
            &dgi,
            false,
            self.w_ih.grad.data_mut(),
            i,
            rows,
            g,
            T::one(),
        );
        matmul(
            h,
            true,
            &dgh,
            false,
            self.w_hh.grad.data_mut(),
            hd,
            rows,
            g,
            T::one(),
        );
        for (dst, src) in [(&mut self.b_ih, &dgi), (&mut self.b_hh, &dgh)] {
            let grad = dst.grad.data_mut();
            for chunk in src.chunks_exact(g) {
                for (a, b) in grad.iter_mut().zip(chunk) {
                    *a += *b;
                }
            }
        }
        if let Some(dx) = dx {
            matmul(
                &dgi,
                false,
                self.w_ih.value.data(),
                true,
                dx,
                rows,
                g,
                i,
                T::one(),
            );
        }
        matmul(
            &dgh,
            false,
            self.w_hh.value.data(),
            true,
            dh_prev,
            rows,
            g,
            hd,
            T::one(),
        );
    }
}

impl<T: Scalar> HasParams<T> for GruCell<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.w_ih, &self.w_hh, &self.b_ih, &self.b_hh]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![
            &mut self.w_ih,
            &mut self.w_hh,
            &mut self.b_ih,
            &mut self.b_hh,
        ]
    }
}
