use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{BOS, EOS, PAD};
use crate::numerics::layers::{
    log_softmax_row, softmax_cross_entropy, AttentionCache, CrossAttention, Embedding, GruCache,
    GruCell, LayerNorm, LayerNormCache, Linear,
};
use crate::numerics::{shape_error, HasParams, NumericError, Parameter, Scalar};

/// How each decoder layer sees the conditioning vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Cross-attention over a memory of one slot.
    Attention,
    /// A learned projection of the vector added to every step's output.
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub conditioning: Conditioning,
    pub seed: u64,
}

impl ProbeConfig {
    pub fn new(input_dim: usize) -> ProbeConfig {
        ProbeConfig {
            input_dim,
            hidden: 256,
            layers: 2,
            conditioning: Conditioning::Attention,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Conditioner<T> {
    Attention(CrossAttention<T>),
    Additive(Linear<T>),
}

#[derive(Debug, Clone)]
pub struct DecoderLayer<T> {
    pub gru: GruCell<T>,
    pub conditioner: Conditioner<T>,
}

/// Conditional decoder `P(x | y)`: `c = LayerNorm(W y + b)` starts every
/// layer's recurrent state and conditions every step; the output head
/// reads the top layer.
#[derive(Debug, Clone)]
pub struct ProbeModel<T = f32> {
    config: ProbeConfig,
    vocab: usize,
    pub input: Linear<T>,
    pub norm: LayerNorm<T>,
    pub embedding: Embedding<T>,
    pub layers: Vec<DecoderLayer<T>>,
    pub head: Linear<T>,
}

/// Teacher-forcing loss over a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    /// Summed token cross-entropy.
    pub total: f64,
    pub tokens: usize,
}

impl BatchLoss {
    pub fn mean(&self) -> f64 {
        self.total / self.tokens.max(1) as f64
    }
}

struct LayerCache<T> {
    states: Vec<Vec<T>>,
    grus: Vec<GruCache<T>>,
    attention: Vec<AttentionCache<T>>,
}

struct Pass<T> {
    rows: usize,
    steps: usize,
    tokens: usize,
    step_inputs: Vec<Vec<usize>>,
    c: Vec<T>,
    norm_cache: LayerNormCache<T>,
    layer_inputs: Vec<Vec<Vec<T>>>,
    caches: Vec<LayerCache<T>>,
    top: Vec<T>,
    dlogits: Vec<T>,
}

/// Incremental decoding state for `rows` hypotheses.
#[derive(Debug, Clone)]
pub struct DecodeState<T> {
    rows: usize,
    c: Vec<T>,
    hidden: Vec<Vec<T>>,
    additive: Vec<Vec<T>>,
}

impl<T: Scalar> DecodeState<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Keeps rows `keep` (with repetition) in that order.
    pub fn select(&self, keep: &[usize]) -> DecodeState<T> {
        let h = self.c.len() / self.rows.max(1);
        let pick = |v: &Vec<T>| -> Vec<T> {
            if v.is_empty() {
                return Vec::new();
            }
            keep.iter()
                .flat_map(|&r| v[r * h..(r + 1) * h].iter().copied())
                .collect()
        };
        DecodeState {
            rows: keep.len(),
            c: pick(&self.c),
            hidden: self.hidden.iter().map(pick).collect(),
            additive: self.additive.iter().map(pick).collect(),
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<T: Scalar> ProbeModel<T> {
    /// # Panics
    /// If any size in `config` is zero or `vocab < 4`.
    pub fn new(config: ProbeConfig, vocab: usize) -> ProbeModel<T> {
        assert!(
            config.input_dim > 0 && config.hidden > 0 && config.layers > 0 && vocab >= 4,
            "probe sizes must be positive"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden;
        let input = Linear::new("probe.input", config.input_dim, h, &mut rng);
        let norm = LayerNorm::new("probe.norm", h);
        let embedding = Embedding::new("probe.embedding", vocab, h, &mut rng);
        let layers = (0..config.layers)
            .map(|l| {
                let gru = GruCell::new(&format!("probe.layer{l}.gru"), h, h, &mut rng);
                let name = format!("probe.layer{l}.cond");
                let conditioner = match config.conditioning {
                    Conditioning::Attention => {
                        Conditioner::Attention(CrossAttention::new(&name, h, h, &mut rng))
                    }
                    Conditioning::Additive => {
                        Conditioner::Additive(Linear::new(&name, h, h, &mut rng))
                    }
                };
                DecoderLayer { gru, conditioner }
            })
            .collect();
        let head = Linear::new("probe.head", h, vocab, &mut rng);
        ProbeModel {
            config,
            vocab,
            input,
            norm,
            embedding,
            layers,
            head,
        }
    }

    pub fn config(&self) -> &ProbeConfig {
        &self.config
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn cast<U: Scalar>(&self) -> ProbeModel<U> {
        let mut out = ProbeModel::<U>::new(self.config, self.vocab);
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        out
    }

    fn check_input(&self, embeddings: &[T], rows: usize) -> Result<(), NumericError> {
        if embeddings.len() != rows * self.config.input_dim {
            return Err(shape_error(
                "probe.input",
                format!("{rows} x {}", self.config.input_dim),
                format!("{} values", embeddings.len()),
            ));
        }
        Ok(())
    }

    /// Teacher-forced loss for `seqs` (word ids without BOS/EOS) given one
    /// embedding per sequence. Accumulates parameter gradients of the mean
    /// token loss; returns the loss and, if asked, its gradient with
    /// respect to the embeddings.
    pub fn train_batch(
        &mut self,
        embeddings: &[T],
        seqs: &[Vec<usize>],
        want_input_grad: bool,
    ) -> Result<(BatchLoss, Option<Vec<T>>), NumericError> {
        let (loss, pass) = self.forward(embeddings, seqs)?;
        let grad = self.backward(pass, embeddings, want_input_grad);
        Ok((loss, grad))
    }

    /// Teacher-forced loss without gradients.
    pub fn loss(&self, embeddings: &[T], seqs: &[Vec<usize>]) -> Result<BatchLoss, NumericError> {
        Ok(self.forward(embeddings, seqs)?.0)
    }

    fn forward(
        &self,
        embeddings: &[T],
        seqs: &[Vec<usize>],
    ) -> Result<(BatchLoss, Pass<T>), NumericError> {
        let rows = seqs.len();
        self.check_input(embeddings, rows)?;
        let steps = seqs.iter().map(Vec::len).max().unwrap_or(0) + 1;

        let mut step_inputs = Vec::with_capacity(steps);
        let mut targets = Vec::with_capacity(steps * rows);
        let mut weights = Vec::with_capacity(steps * rows);
        for t in 0..steps {
            step_inputs.push(
                seqs.iter()
                    .map(|s| match t {
                        0 => BOS,
                        _ => s.get(t - 1).copied().unwrap_or(PAD),
                    })
                    .collect::<Vec<_>>(),
            );
            for s in seqs {
                let (target, w) = match t.cmp(&s.len()) {
                    std::cmp::Ordering::Less => (s[t], T::one()),
                    std::cmp::Ordering::Equal => (EOS, T::one()),
                    std::cmp::Ordering::Greater => (PAD, T::zero()),
                };
                targets.push(target);
                weights.push(w);
            }
        }
        let tokens: usize = seqs.iter().map(|s| s.len() + 1).sum();

        let projected = self.input.forward(embeddings, rows)?;
        let (c, norm_cache) = self.norm.forward(&projected, rows)?;
        let mut xs = step_inputs
            .iter()
            .map(|ids| self.embedding.forward(ids))
            .collect::<Result<Vec<_>, _>>()?;

        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let additive = match &layer.conditioner {
                Conditioner::Additive(lin) => Some(lin.forward(&c, rows)?),
                Conditioner::Attention(_) => None,
            };
            let mut cache = LayerCache {
                states: Vec::with_capacity(steps),
                grus: Vec::with_capacity(steps),
                attention: Vec::new(),
            };
            let mut outs = Vec::with_capacity(steps);
            for (t, x) in xs.iter().enumerate() {
                let prev = if t == 0 { &c } else { &cache.states[t - 1] };
                let (g, gc) = layer.gru.forward(x, prev, rows)?;
                let mut o = g.clone();
                match (&layer.conditioner, &additive) {
                    (Conditioner::Attention(att), _) => {
                        let (a, ac) = att.forward(&g, &c, rows, 1)?;
                        add_into(&mut o, &a);
                        cache.attention.push(ac);
                    }
                    (Conditioner::Additive(_), Some(a)) => add_into(&mut o, a),
                    (Conditioner::Additive(_), None) => unreachable!(),
                }
                cache.states.push(g);
                cache.grus.push(gc);
                outs.push(o);
            }
            layer_inputs.push(std::mem::replace(&mut xs, outs));
            caches.push(cache);
        }

        let top: Vec<T> = xs.concat();
        let logits = self.head.forward(&top, steps * rows)?;
        let (total, dlogits) = softmax_cross_entropy(&logits, self.vocab, &targets, &weights)?;
        let loss = BatchLoss {
            total: total.as_f64(),
            tokens,
        };
        Ok((
            loss,
            Pass {
                rows,
                steps,
                tokens,
                step_inputs,
                c,
                norm_cache,
                layer_inputs,
                caches,
                top,
                dlogits,
            },
        ))
    }

    fn backward(
        &mut self,
        pass: Pass<T>,
        embeddings: &[T],
        want_input_grad: bool,
    ) -> Option<Vec<T>> {
        let Pass {
            rows,
            steps,
            tokens,
            step_inputs,
            c,
            norm_cache,
            layer_inputs,
            caches,
            top,
            mut dlogits,
        } = pass;
        let h = self.config.hidden;
        let scale = T::lit(1.0 / tokens.max(1) as f64);
        for g in &mut dlogits {
            *g *= scale;
        }
        let mut dtop = vec![T::zero(); steps * rows * h];
        self.head
            .backward(&top, &dlogits, steps * rows, Some(&mut dtop));
        let mut douts: Vec<Vec<T>> = dtop.chunks(rows * h).map(<[T]>::to_vec).collect();

        let mut dc = vec![T::zero(); rows * h];
        for (l, layer) in self.layers.iter_mut().enumerate().rev() {
            let cache = &caches[l];
            let inputs = &layer_inputs[l];
            let mut dinputs = vec![vec![T::zero(); rows * h]; steps];
            let mut carry = vec![T::zero(); rows * h];
            let mut dadditive = vec![T::zero(); rows * h];
            for t in (0..steps).rev() {
                let dout = &douts[t];
                let mut dg: Vec<T> = dout.iter().zip(&carry).map(|(&a, &b)| a + b).collect();
                match &mut layer.conditioner {
                    Conditioner::Attention(att) => att.backward(
                        &cache.attention[t],
                        &cache.states[t],
                        &c,
                        dout,
                        rows,
                        &mut dg,
                        Some(&mut dc),
                    ),
                    Conditioner::Additive(_) => add_into(&mut dadditive, dout),
                }
                let prev = if t == 0 { &c } else { &cache.states[t - 1] };
                let mut dprev = vec![T::zero(); rows * h];
                layer.gru.backward(
                    &cache.grus[t],
                    &inputs[t],
                    prev,
                    &dg,
                    rows,
                    Some(&mut dinputs[t]),
                    &mut dprev,
                );
                if t == 0 {
                    add_into(&mut dc, &dprev);
                } else {
                    carry = dprev;
                }
            }
            if let Conditioner::Additive(lin) = &mut layer.conditioner {
                lin.backward(&c, &dadditive, rows, Some(&mut dc));
            }
            douts = dinputs;
        }
        for (ids, d) in step_inputs.iter().zip(&douts) {
            self.embedding.backward(ids, d);
        }
        let mut dprojected = vec![T::zero(); rows * h];
        self.norm.backward(&norm_cache, &dc, &mut dprojected);
        if want_input_grad {
            let mut dembeddings = vec![T::zero(); embeddings.len()];
            self.input
                .backward(embeddings, &dprojected, rows, Some(&mut dembeddings));
            Some(dembeddings)
        } else {
            self.input.backward(embeddings, &dprojected, rows, None);
            None
        }
    }

    pub fn start(&self, embeddings: &[T], rows: usize) -> Result<DecodeState<T>, NumericError> {
        self.check_input(embeddings, rows)?;
        let projected = self.input.forward(embeddings, rows)?;
        let (c, _) = self.norm.forward(&projected, rows)?;
        let additive = self
            .layers
            .iter()
            .map(|layer| match &layer.conditioner {
                Conditioner::Additive(lin) => lin.forward(&c, rows),
                Conditioner::Attention(_) => Ok(Vec::new()),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DecodeState {
            rows,
            hidden: vec![c.clone(); self.layers.len()],
            c,
            additive,
        })
    }

    /// Feeds one token per row; returns `[rows, vocab]` log-probabilities of
    /// the next token and the advanced state.
    pub fn step(
        &self,
        state: &DecodeState<T>,
        tokens: &[usize],
    ) -> Result<(Vec<T>, DecodeState<T>), NumericError> {
        let rows = state.rows;
        if tokens.len() != rows {
            return Err(shape_error(
                "probe.step",
                format!("{rows} tokens"),
                format!("{} tokens", tokens.len()),
            ));
        }
        let mut x = self.embedding.forward(tokens)?;
        let mut hidden = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let (g, _) = layer.gru.forward(&x, &state.hidden[l], rows)?;
            let mut o = g.clone();
            match &layer.conditioner {
                Conditioner::Attention(att) => {
                    add_into(&mut o, &att.forward(&g, &state.c, rows, 1)?.0)
                }
                Conditioner::Additive(_) => add_into(&mut o, &state.additive[l]),
            }
            hidden.push(g);
            x = o;
        }
        let logits = self.head.forward(&x, rows)?;
        let logp = logits
            .chunks(self.vocab)
            .flat_map(log_softmax_row)
            .collect();
        Ok((
            logp,
            DecodeState {
                rows,
                c: state.c.clone(),
                hidden,
                additive: state.additive.clone(),
            },
        ))
    }

    /// Log-probability of `seq` followed by EOS.
    pub fn sequence_logprob(&self, embedding: &[T], seq: &[usize]) -> Result<f64, NumericError> {
        let mut state = self.start(embedding, 1)?;
        let mut prev = BOS;
        let mut total = 0.0;
        for &tok in seq.iter().chain(std::iter::once(&EOS)) {
            let (logp, next) = self.step(&state, &[prev])?;
            total += logp[tok].as_f64();
            state = next;
            prev = tok;
        }
        Ok(total)
    }
}

impl<T: Scalar> HasParams<T> for ProbeModel<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let mut ps = self.input.params();
        ps.extend(self.norm.params());
        ps.push(&self.embedding.table);
        for layer in &self.layers {
            ps.extend(layer.gru.params());
            match &layer.conditioner {
                Conditioner::Attention(a) => ps.extend(a.params()),
                Conditioner::Additive(l) => ps.extend(l.params()),
            }
        }
        ps.extend(self.head.params());
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut ps = self.input.params_mut();
        ps.extend(self.norm.params_mut());
        ps.push(&mut self.embedding.table);
        for layer in &mut self.layers {
            ps.extend(layer.gru.params_mut());
            match &mut layer.conditioner {
                Conditioner::Attention(a) => ps.extend(a.params_mut()),
                Conditioner::Additive(l) => ps.extend(l.params_mut()),
            }
        }
        ps.extend(self.head.params_mut());
        ps
    }
}
