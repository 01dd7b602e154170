use serde::{Deserialize, Serialize};

use super::{NumericError, Parameter, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    AdafactorLite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> OptimizerConfig {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Adafactor without momentum. `beta1` and `beta2` are unused; the
    /// second-moment decay follows `1 - t^-0.8`.
    pub fn adafactor(lr: f64) -> OptimizerConfig {
        OptimizerConfig {
            kind: OptimizerKind::AdafactorLite,
            lr,
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e-30,
        }
    }
}

const ADAFACTOR_DECAY: f64 = 0.8;
const ADAFACTOR_CLIP: f64 = 1.0;
const ADAFACTOR_MIN_SCALE: f64 = 1e-3;

#[derive(Debug, Clone)]
enum Slot {
    Adam { m: Vec<f64>, v: Vec<f64> },
    Factored { rows: Vec<f64>, cols: Vec<f64> },
    Full { v: Vec<f64> },
}

/// Optimizer state for a fixed list of parameters.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    step: u64,
    shapes: Vec<Vec<usize>>,
    slots: Option<Vec<Slot>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Optimizer {
        Optimizer {
            config,
            step: 0,
            shapes: Vec::new(),
            slots: None,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Allocates accumulators matching `params`.
    pub fn init<T: Scalar>(&mut self, params: &[&Parameter<T>]) {
        self.shapes = params.iter().map(|p| p.value.shape().to_vec()).collect();
        self.step = 0;
        let slots = params
            .iter()
            .map(|p| {
                let n = p.value.len();
                match (self.config.kind, p.value.shape()) {
                    (OptimizerKind::Adam, _) => Slot::Adam {
                        m: vec![0.0; n],
                        v: vec![0.0; n],
                    },
                    (OptimizerKind::AdafactorLite, &[r, c]) => Slot::Factored {
                        rows: vec![0.0; r],
                        cols: vec![0.0; c],
                    },
                    (OptimizerKind::AdafactorLite, _) => Slot::Full { v: vec![0.0; n] },
                }
            })
            .collect();
        self.slots = Some(slots);
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step<T: Scalar>(
        &mut self,
        params: &mut [&mut Parameter<T>],
    ) -> Result<(), NumericError> {
        let Some(slots) = self.slots.as_mut() else {
            return Err(NumericError::Usage("step before init".into()));
        };
        if params.len() != self.shapes.len()
            || params
                .iter()
                .zip(&self.shapes)
                .any(|(p, s)| p.value.shape() != s.as_slice())
        {
            return Err(NumericError::Usage(
                "parameters differ from those the optimizer was initialized with".into(),
            ));
        }
        self.step += 1;
        let t = self.step as f64;
        let cfg = self.config;
        for (p, slot) in params.iter_mut().zip(slots.iter_mut()) {
            match slot {
                Slot::Adam { m, v } => {
                    let c1 = 1.0 - cfg.beta1.powf(t);
                    let c2 = 1.0 - cfg.beta2.powf(t);
                    let grads = p.grad.data().to_vec();
                    for (((w, g), m), v) in p
                        .value
                        .data_mut()
                        .iter_mut()
                        .zip(grads)
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        let g = g.as_f64();
                        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                        let update = cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
                        *w = T::lit(w.as_f64() - update);
                    }
                }
                Slot::Factored { rows, cols } => {
                    let beta = 1.0 - t.powf(-ADAFACTOR_DECAY);
                    let (r, c) = (rows.len(), cols.len());
                    let sq: Vec<f64> = p
                        .grad
                        .data()
                        .iter()
                        .map(|g| g.as_f64() * g.as_f64() + cfg.eps)
                        .collect();
                    for i in 0..r {
                        let mean = sq[i * c..(i + 1) * c].iter().sum::<f64>() / c as f64;
                        rows[i] = beta * rows[i] + (1.0 - beta) * mean;
                    }
                    for j in 0..c {
                        let mean = (0..r).map(|i| sq[i * c + j]).sum::<f64>() / r as f64;
                        cols[j] = beta * cols[j] + (1.0 - beta) * mean;
                    }
                    let row_mean = rows.iter().sum::<f64>() / r as f64;
                    let u: Vec<f64> = p
                        .grad
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(k, g)| {
                            let vhat = rows[k / c] * cols[k % c] / row_mean;
                            g.as_f64() / vhat.sqrt()
                        })
                        .collect();
                    apply_relative(p, &u, cfg.lr);
                }
                Slot::Full { v } => {
                    let beta = 1.0 - t.powf(-ADAFACTOR_DECAY);
                    let u: Vec<f64> = p
                        .grad
                        .data()
                        .iter()
                        .zip(v.iter_mut())
                        .map(|(g, v)| {
                            let g = g.as_f64();
                            *v = beta * *v + (1.0 - beta) * (g * g + cfg.eps);
                            g / v.sqrt()
                        })
                        .collect();
                    apply_relative(p, &u, cfg.lr);
                }
            }
            p.zero_grad();
        }
        Ok(())
    }
}

/// Clips the update to unit RMS and scales the step by the parameter RMS.
fn apply_relative<T: Scalar>(p: &mut Parameter<T>, u: &[f64], lr: f64) {
    let n = u.len().max(1) as f64;
    let rms_u = (u.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let clip = (rms_u / ADAFACTOR_CLIP).max(1.0);
    let rms_w = (p
        .value
        .data()
        .iter()
        .map(|w| w.as_f64().powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let alpha = lr * rms_w.max(ADAFACTOR_MIN_SCALE);
    for (w, x) in p.value.data_mut().iter_mut().zip(u) {
        *w = T::lit(w.as_f64() - alpha * x / clip);
    }
}
