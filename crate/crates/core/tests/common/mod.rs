//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use bottleneck::encoders::{BOS, EOS};
use bottleneck::numerics::layers::{
    softmax_cross_entropy, CrossAttention, Embedding, GruCell, LayerNorm, Linear,
};
use bottleneck::numerics::{pack_grads, pack_values, unpack_values, HasParams, Scalar};
use bottleneck::probe::{Conditioning, DecodeState, ProbeConfig, ProbeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ROWS: usize = 3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randvec(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect()
}

pub fn cast<T: Scalar>(x: &[f64]) -> Vec<T> {
    x.iter().map(|&v| T::lit(v)).collect()
}

pub fn to_f64<T: Scalar>(x: &[T]) -> Vec<f64> {
    x.iter().map(|v| v.as_f64()).collect()
}

/// Loss `sum(c * y)` for fixed random coefficients, so `dL/dy = c`.
pub fn probe_loss<T: Scalar>(y: &[T], c: &[f64]) -> f64 {
    y.iter().zip(c).map(|(a, b)| a.as_f64() * b).sum()
}

pub type Closure = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>)>;

pub fn linear_case<T: Scalar>() -> (Vec<f64>, Closure) {
    let (i, o) = (4, 5);
    let layer: Linear<T> = Linear::new("lin", i, o, &mut rng(1));
    let n_params = layer.param_count();
    let mut theta = to_f64(&pack_values(&layer.params()));
    theta.extend(randvec(ROWS * i, 2));
    let c = randvec(ROWS * o, 3);
    let f = move |x: &[f64]| {
        let mut l = layer.clone();
        unpack_values(&mut l.params_mut(), &cast::<T>(&x[..n_params]));
        let input: Vec<T> = cast(&x[n_params..]);
        let y = l.forward(&input, ROWS).unwrap();
        let mut dx = vec![T::zero(); input.len()];
        l.backward(&input, &cast::<T>(&c), ROWS, Some(&mut dx));
        let mut grads = to_f64(&pack_grads(&l.params()));
        grads.extend(to_f64(&dx));
        (probe_loss(&y, &c), grads)
    };
    (theta, Box::new(f))
}

pub fn embedding_case<T: Scalar>() -> (Vec<f64>, Closure) {
    let layer: Embedding<T> = Embedding::new("emb", 6, 4, &mut rng(4));
    let ids = vec![0usize, 5, 2, 5];
    let theta = to_f64(&pack_values(&layer.params()));
    let c = randvec(ids.len() * 4, 5);
    let f = move |x: &[f64]| {
        let mut l = layer.clone();
        unpack_values(&mut l.params_mut(), &cast::<T>(x));
        let y = l.forward(&ids).unwrap();
        l.backward(&ids, &cast::<T>(&c));
        (probe_loss(&y, &c), to_f64(&pack_grads(&l.params())))
    };
    (theta, Box::new(f))
}

pub fn layernorm_case<T: Scalar>() -> (Vec<f64>, Closure) {
    let d = 6;
    let layer: LayerNorm<T> = LayerNorm::new("ln", d);
    let n_params = layer.param_count();
    let mut theta = randvec(n_params, 6);
    theta.extend(randvec(ROWS * d, 7).iter().map(|v| v * 3.0));
    let c = randvec(ROWS * d, 8);
    let f = move |x: &[f64]| {
        let mut l = layer.clone();
        unpack_values(&mut l.params_mut(), &cast::<T>(&x[..n_params]));
        let input: Vec<T> = cast(&x[n_params..]);
        let (y, cache) = l.forward(&input, ROWS).unwrap();
        let mut dx = vec![T::zero(); input.len()];
        l.backward(&cache, &cast::<T>(&c), &mut dx);
        let mut grads = to_f64(&pack_grads(&l.params()));
        grads.extend(to_f64(&dx));
        (probe_loss(&y, &c), grads)
    };
    (theta, Box::new(f))
}

pub fn attention_case<T: Scalar>() -> (Vec<f64>, Closure) {
    let (d, md, slots) = (4, 3, 3);
    let layer: CrossAttention<T> = CrossAttention::new("att", d, md, &mut rng(9));
    let n_params = layer.param_count();
    let mut theta = to_f64(&pack_values(&layer.params()));
    theta.extend(randvec(ROWS * d, 10));
    theta.extend(randvec(ROWS * slots * md, 11));
    let c = randvec(ROWS * d, 12);
    let f = move |x: &[f64]| {
        let mut l = layer.clone();
        unpack_values(&mut l.params_mut(), &cast::<T>(&x[..n_params]));
        let input: Vec<T> = cast(&x[n_params..n_params + ROWS * d]);
        let memory: Vec<T> = cast(&x[n_params + ROWS * d..]);
        let (y, cache) = l.forward(&input, &memory, ROWS, slots).unwrap();
        let mut dx = vec![T::zero(); input.len()];
        let mut dm = vec![T::zero(); memory.len()];
        l.backward(
            &cache,
            &input,
            &memory,
            &cast::<T>(&c),
            ROWS,
            &mut dx,
            Some(&mut dm),
        );
        let mut grads = to_f64(&pack_grads(&l.params()));
        grads.extend(to_f64(&dx));
        grads.extend(to_f64(&dm));
        (probe_loss(&y, &c), grads)
    };
    (theta, Box::new(f))
}

pub fn gru_case<T: Scalar>() -> (Vec<f64>, Closure) {
    let (i, h) = (3, 4);
    let layer: GruCell<T> = GruCell::new("gru", i, h, &mut rng(13));
    let n_params = layer.param_count();
    let mut theta = to_f64(&pack_values(&layer.params()));
    theta.extend(randvec(ROWS * i, 14));
    theta.extend(randvec(ROWS * h, 15));
    let c = randvec(ROWS * h, 16);
    let f = move |x: &[f64]| {
        let mut l = layer.clone();
        unpack_values(&mut l.params_mut(), &cast::<T>(&x[..n_params]));
        let input: Vec<T> = cast(&x[n_params..n_params + ROWS * i]);
        let hidden: Vec<T> = cast(&x[n_params + ROWS * i..]);
        let (y, cache) = l.forward(&input, &hidden, ROWS).unwrap();
        let mut dx = vec![T::zero(); input.len()];
        let mut dh = vec![T::zero(); hidden.len()];
        l.backward(
            &cache,
            &input,
            &hidden,
            &cast::<T>(&c),
            ROWS,
            Some(&mut dx),
            &mut dh,
        );
        let mut grads = to_f64(&pack_grads(&l.params()));
        grads.extend(to_f64(&dx));
        grads.extend(to_f64(&dh));
        (probe_loss(&y, &c), grads)
    };
    (theta, Box::new(f))
}

pub fn cross_entropy_case<T: Scalar>() -> (Vec<f64>, Closure) {
    let classes = 5;
    let targets = vec![1usize, 4, 0, 2];
    let weights = [0.25, 0.25, 0.0, 0.5];
    let theta: Vec<f64> = randvec(targets.len() * classes, 17)
        .iter()
        .map(|v| v * 4.0)
        .collect();
    let f = move |x: &[f64]| {
        let (loss, grad) =
            softmax_cross_entropy(&cast::<T>(x), classes, &targets, &cast::<T>(&weights)).unwrap();
        (loss.as_f64(), to_f64(&grad))
    };
    (theta, Box::new(f))
}

/// Two GRU steps through shared weights: gradients flow through time.
pub fn unrolled_gru_case<T: Scalar>() -> (Vec<f64>, Closure) {
    let (i, h) = (2, 3);
    let layer: GruCell<T> = GruCell::new("gru", i, h, &mut rng(18));
    let n_params = layer.param_count();
    let mut theta = to_f64(&pack_values(&layer.params()));
    theta.extend(randvec(2 * ROWS * i, 19));
    let c = randvec(ROWS * h, 20);
    let f = move |x: &[f64]| {
        let mut l = layer.clone();
        unpack_values(&mut l.params_mut(), &cast::<T>(&x[..n_params]));
        let x0: Vec<T> = cast(&x[n_params..n_params + ROWS * i]);
        let x1: Vec<T> = cast(&x[n_params + ROWS * i..]);
        let h0 = vec![T::zero(); ROWS * h];
        let (h1, c1) = l.forward(&x0, &h0, ROWS).unwrap();
        let (h2, c2) = l.forward(&x1, &h1, ROWS).unwrap();
        let mut dh1 = vec![T::zero(); ROWS * h];
        let mut dx1 = vec![T::zero(); ROWS * i];
        l.backward(
            &c2,
            &x1,
            &h1,
            &cast::<T>(&c),
            ROWS,
            Some(&mut dx1),
            &mut dh1,
        );
        let mut dh0 = vec![T::zero(); ROWS * h];
        let mut dx0 = vec![T::zero(); ROWS * i];
        l.backward(&c1, &x0, &h0, &dh1, ROWS, Some(&mut dx0), &mut dh0);
        let mut grads = to_f64(&pack_grads(&l.params()));
        grads.extend(to_f64(&dx0));
        grads.extend(to_f64(&dx1));
        (probe_loss(&h2, &c), grads)
    };
    (theta, Box::new(f))
}

/// Every layer case, by name.
pub fn layer_cases<T: Scalar>() -> Vec<(&'static str, (Vec<f64>, Closure))> {
    vec![
        ("linear", linear_case::<T>()),
        ("embedding", embedding_case::<T>()),
        ("layernorm", layernorm_case::<T>()),
        ("cross-attention", attention_case::<T>()),
        ("gru", gru_case::<T>()),
        ("softmax-cross-entropy", cross_entropy_case::<T>()),
        ("gru-through-time", unrolled_gru_case::<T>()),
    ]
}

/// Small probe with a sharpened output layer so hypotheses separate.
pub fn toy_model(seed: u64, vocab: usize, conditioning: Conditioning) -> ProbeModel<f64> {
    let cfg = ProbeConfig {
        input_dim: 3,
        hidden: 4,
        layers: 2,
        conditioning,
        seed,
    };
    let mut m: ProbeModel<f64> = ProbeModel::new(cfg, vocab);
    for w in m.head.weight.value.data_mut() {
        *w *= 4.0;
    }
    m
}

pub fn random_vec(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Every complete hypothesis of at most `max_len` emitted tokens, scored
/// one token at a time on a single-row state.
pub fn exhaustive_best(
    m: &ProbeModel<f64>,
    emb: &[f64],
    max_len: usize,
    length_norm: bool,
) -> (Vec<usize>, f64) {
    fn walk(
        m: &ProbeModel<f64>,
        state: &DecodeState<f64>,
        prefix: &mut Vec<usize>,
        logprob: f64,
        max_len: usize,
        length_norm: bool,
        best: &mut Option<(f64, Vec<usize>, f64)>,
    ) {
        let mut offer = |tokens: &Vec<usize>, lp: f64, emitted: usize| {
            let score = if length_norm {
                lp / emitted.max(1) as f64
            } else {
                lp
            };
            let wins = match best {
                None => true,
                Some((s, t, _)) => score > *s || (score == *s && tokens < t),
            };
            if wins {
                *best = Some((score, tokens.clone(), lp));
            }
        };
        if prefix.len() == max_len {
            offer(prefix, logprob, prefix.len());
            return;
        }
        let last = prefix.last().copied().unwrap_or(BOS);
        let (logp, next) = m.step(state, &[last]).unwrap();
        offer(prefix, logprob + logp[EOS], prefix.len() + 1);
        for tok in EOS + 1..m.vocab() {
            prefix.push(tok);
            walk(
                m,
                &next,
                prefix,
                logprob + logp[tok],
                max_len,
                length_norm,
                best,
            );
            prefix.pop();
        }
    }
    let state = m.start(emb, 1).unwrap();
    let mut best = None;
    walk(
        m,
        &state,
        &mut Vec::new(),
        0.0,
        max_len,
        length_norm,
        &mut best,
    );
    let (_, tokens, lp) = best.unwrap();
    (tokens, lp)
}

/// Two-sided p-value by enumerating every sign assignment.
pub fn enumeration_p(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let rank = |i: usize| {
        let below = abs.iter().filter(|a| **a < abs[i]).count() as f64;
        let equal = abs.iter().filter(|a| **a == abs[i]).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let ranks: Vec<f64> = (0..n).map(rank).collect();
    let mean = ranks.iter().sum::<f64>() / 2.0;
    let w = |mask: u32| {
        (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum::<f64>()
    };
    let observed = (0..n).filter(|&i| d[i] > 0.0).fold(0u32, |m, i| m | 1 << i);
    let dev = (w(observed) - mean).abs();
    let hits = (0..1u32 << n)
        .filter(|&m| (w(m) - mean).abs() >= dev - 1e-9)
        .count();
    hits as f64 / (1u64 << n) as f64
}
