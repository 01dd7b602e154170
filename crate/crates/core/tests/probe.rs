use std::collections::HashSet;

use bottleneck::encoders::{
    BowEncoder, Caption, PooledConfig, PooledEncoder, ShuffledEncoder, TextEncoder, Tokenizer,
};
use bottleneck::grammar::{GenerateOptions, Grammar, Prompt};
use bottleneck::numerics::gradcheck::check_gradient;
use bottleneck::numerics::{pack_grads, pack_values, unpack_values, HasParams, Parameter};
use bottleneck::probe::*;

mod common;
use common::{exhaustive_best, random_vec, toy_model};

#[test]
fn probe_gradients_match_finite_differences() {
    for conditioning in [Conditioning::Attention, Conditioning::Additive] {
        let base = toy_model(3, 9, conditioning);
        let seqs = vec![vec![4, 5, 6], vec![7], vec![], vec![8, 4]];
        let emb = random_vec(11, 4 * 3);
        let n_params = base.param_count();
        let mut theta = pack_values(&base.params());
        theta.extend(&emb);
        let report = check_gradient(&theta, |th| {
            let mut m = base.clone();
            unpack_values(&mut m.params_mut(), &th[..n_params]);
            m.zero_grad();
            let (loss, demb) = m.train_batch(&th[n_params..], &seqs, true).unwrap();
            let mut g = pack_grads(&m.params());
            g.extend(demb.unwrap());
            (loss.mean(), g)
        });
        println!("{conditioning:?}: max rel err {:.2e}", report.max_rel_error);
        assert!(report.max_rel_error < 1e-4, "{conditioning:?}: {report:?}");
    }
}

#[test]
fn teacher_forced_loss_matches_stepwise_decoding() {
    let m = toy_model(5, 8, Conditioning::Attention);
    let emb = random_vec(2, 3);
    let seq = vec![4, 6, 5];
    let batch = m.loss(&emb, std::slice::from_ref(&seq)).unwrap();
    assert_eq!(batch.tokens, 4);
    let stepwise = m.sequence_logprob(&emb, &seq).unwrap();
    assert!(
        (batch.total + stepwise).abs() < 1e-10,
        "{} vs {}",
        batch.total,
        stepwise
    );
}

#[test]
fn wide_beam_equals_exhaustive_argmax() {
    let mut checked = 0;
    for seed in 0..12u64 {
        let vocab = 6 + (seed as usize % 5);
        let conditioning = if seed % 2 == 0 {
            Conditioning::Attention
        } else {
            Conditioning::Additive
        };
        let m = toy_model(seed, vocab, conditioning);
        for max_len in 1..=4 {
            for length_norm in [false, true] {
                let emb = random_vec(seed * 31 + max_len as u64, 3);
                let (tokens, lp) = exhaustive_best(&m, &emb, max_len, length_norm);
                let cfg = BeamConfig {
                    beam: vocab.pow(max_len as u32),
                    max_len,
                    length_norm,
                };
                let hyp = beam_search(&m, &emb, &cfg).unwrap();
                assert_eq!(
                    hyp.tokens, tokens,
                    "seed {seed} len {max_len} norm {length_norm}"
                );
                assert!((hyp.logprob - lp).abs() < 1e-12);
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 96);
}

#[test]
fn beam_one_is_greedy() {
    for seed in 0..20u64 {
        let m = toy_model(seed, 10, Conditioning::Attention);
        let emb = random_vec(seed + 100, 3);
        let cfg = BeamConfig {
            beam: 1,
            max_len: 6,
            length_norm: true,
        };
        let b = beam_search(&m, &emb, &cfg).unwrap();
        let g = greedy(&m, &emb, 6).unwrap();
        assert_eq!(b.tokens, g.tokens);
        assert_eq!(b.logprob.to_bits(), g.logprob.to_bits());
        assert_eq!(b.ended, g.ended);
    }
}

#[test]
fn beam_rejects_zero_width_and_wrong_dims() {
    let m = toy_model(0, 6, Conditioning::Attention);
    let cfg = BeamConfig {
        beam: 0,
        ..Default::default()
    };
    assert!(beam_search(&m, &[0.0; 3], &cfg).is_err());
    assert!(beam_search(&m, &[0.0; 4], &BeamConfig::default()).is_err());
}

fn small_corpus(per_type: usize, seed: u64, exclude: &HashSet<String>) -> Vec<Prompt> {
    let mut opts = GenerateOptions::new(per_type, seed);
    opts.clamp_to_capacity = true;
    Grammar::desk().generate_corpus(&opts, exclude).unwrap().0
}

fn texts(corpus: &[Prompt]) -> Vec<&str> {
    corpus.iter().map(|p| p.text.as_str()).collect()
}

fn embed<E: TextEncoder>(e: &E, corpus: &[Prompt]) -> Vec<f32> {
    let caps: Vec<Caption> = corpus
        .iter()
        .map(|p| Caption::new(&p.id, &p.text))
        .collect();
    e.encode_all(&caps).unwrap().concat()
}

fn small_probe(dim: usize) -> ProbeConfig {
    ProbeConfig {
        input_dim: dim,
        hidden: 32,
        layers: 1,
        conditioning: Conditioning::Attention,
        seed: 4,
    }
}

fn small_train() -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        epochs: 4,
        lr: 3e-3,
        seed: 9,
        ..Default::default()
    }
}

fn bits(params: &[&Parameter<f32>]) -> Vec<u32> {
    pack_values(params).iter().map(|x| x.to_bits()).collect()
}

#[test]
fn probe_training_beats_uniform_and_is_deterministic() {
    let corpus = small_corpus(6, 1, &HashSet::new());
    assert!(corpus.len() >= 100);
    let tok = Tokenizer::from_vocab(Grammar::desk().vocab());
    let enc = BowEncoder::new(2, 32);
    let emb = embed(&enc, &corpus);
    let info = EncoderInfo {
        name: enc.name(),
        dim: 32,
    };
    let run = || {
        train_probe(
            &emb,
            info.clone(),
            &texts(&corpus),
            &tok,
            small_probe(32),
            &small_train(),
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(
        bits(&a.checkpoint.model.params()),
        bits(&b.checkpoint.model.params())
    );
    assert_eq!(a.history, b.history);

    let uniform = (tok.len() as f64).ln();
    assert!(
        a.checkpoint.val_loss < uniform,
        "{} vs ln V {uniform}",
        a.checkpoint.val_loss
    );
    assert!((a.initial_val_loss - uniform).abs() < 1.0);
    for e in &a.history {
        assert!(a.checkpoint.val_loss <= e.val_loss);
    }
    let best = a
        .history
        .iter()
        .find(|e| e.epoch == a.checkpoint.epoch)
        .unwrap();
    assert_eq!(best.val_loss, a.checkpoint.val_loss);
}

#[test]
fn checkpoint_round_trip_reproduces_loss_and_decodes() {
    let corpus = small_corpus(4, 2, &HashSet::new());
    let tok = Tokenizer::from_vocab(Grammar::desk().vocab());
    let enc = BowEncoder::new(3, 16);
    let emb = embed(&enc, &corpus);
    let info = EncoderInfo {
        name: enc.name(),
        dim: 16,
    };
    let mut cfg = small_train();
    cfg.epochs = 2;
    let run = train_probe(&emb, info, &texts(&corpus), &tok, small_probe(16), &cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probe.ckpt");
    run.checkpoint.save(&path).unwrap();
    let loaded = ProbeCheckpoint::load(&path).unwrap();
    assert_eq!(loaded.epoch, run.checkpoint.epoch);
    assert_eq!(loaded.encoder, run.checkpoint.encoder);
    assert_eq!(loaded.train, cfg);
    assert_eq!(
        bits(&loaded.model.params()),
        bits(&run.checkpoint.model.params())
    );

    let seqs: Vec<Vec<usize>> = corpus.iter().map(|p| tok.encode(&p.text)).collect();
    let obj = ProbeObjective {
        model: loaded.model.clone(),
        embeddings: &emb,
        seqs: &seqs,
    };
    let recomputed = mean_loss(&obj, &run.val_indices, 7).unwrap();
    assert!((recomputed - loaded.val_loss).abs() < 1e-5);

    let ids: Vec<&str> = corpus.iter().map(|p| p.id.as_str()).collect();
    let refs = texts(&corpus);
    let beam = BeamConfig::default();
    let before = decode_all(&run.checkpoint.model, &tok, &ids, &refs, &emb, &beam).unwrap();
    let after = decode_all(&loaded.model, &loaded.tokenizer, &ids, &refs, &emb, &beam).unwrap();
    assert_eq!(before, after);

    let mut buf = Vec::new();
    write_decodes(&mut buf, &before).unwrap();
    assert_eq!(read_decodes(&buf[..]).unwrap(), before);
    let first: serde_json::Value =
        serde_json::from_str(std::str::from_utf8(&buf).unwrap().lines().next().unwrap()).unwrap();
    let keys: Vec<&str> = first
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    assert_eq!(keys, ["beam", "id", "logprob", "prediction", "reference"]);
}

#[test]
fn zero_embedding_collapses_every_decode() {
    let m = toy_model(8, 9, Conditioning::Attention).cast::<f32>();
    let tok = Tokenizer::new(["a", "b", "c", "d", "e"].map(String::from).to_vec());
    let ids = ["p0", "p1", "p2"];
    let refs = ["a b", "c", "d e"];
    let out = decode_all(&m, &tok, &ids, &refs, &[0.0; 9], &BeamConfig::default()).unwrap();
    assert!(out.iter().all(|o| o.prediction == out[0].prediction));
}

/// Probe objective that reports a NaN loss from a given epoch on.
#[derive(Clone)]
struct Poisoned<'a> {
    inner: ProbeObjective<'a>,
    steps: usize,
    poison_after: usize,
}

impl HasParams<f32> for Poisoned<'_> {
    fn params(&self) -> Vec<&Parameter<f32>> {
        self.inner.params()
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter<f32>> {
        self.inner.params_mut()
    }
}

impl Objective for Poisoned<'_> {
    fn train_step(
        &mut self,
        batch: &[usize],
    ) -> Result<BatchLoss, bottleneck::numerics::NumericError> {
        self.steps += 1;
        let mut loss = self.inner.train_step(batch)?;
        if self.steps > self.poison_after {
            loss.total = f64::NAN;
        }
        Ok(loss)
    }
    fn eval(&self, batch: &[usize]) -> Result<BatchLoss, bottleneck::numerics::NumericError> {
        self.inner.eval(batch)
    }
}

#[test]
fn non_finite_loss_aborts_with_last_good_parameters() {
    let corpus = small_corpus(4, 3, &HashSet::new());
    let tok = Tokenizer::from_vocab(Grammar::desk().vocab());
    let enc = BowEncoder::new(3, 16);
    let emb = embed(&enc, &corpus);
    let seqs: Vec<Vec<usize>> = corpus.iter().map(|p| tok.encode(&p.text)).collect();
    let cfg = small_train();
    let per_epoch = (corpus.len() - split(corpus.len(), 0.1, cfg.seed).1.len()).div_ceil(16);
    let obj = Poisoned {
        inner: ProbeObjective {
            model: ProbeModel::new(small_probe(16), tok.len()),
            embeddings: &emb,
            seqs: &seqs,
        },
        steps: 0,
        poison_after: per_epoch + 2,
    };
    match fit(obj, corpus.len(), &cfg) {
        Err(FitError::Diverged(d)) => {
            assert_eq!((d.epoch, d.batch), (2, 2));
            let (good, epoch, val) = d.last_good.expect("epoch 1 completed");
            assert_eq!(epoch, 1);
            assert!(val.is_finite());
            assert!(good.params().iter().all(|p| p.value.all_finite()));
        }
        _ => panic!("expected divergence"),
    }

    let mut bad = emb.clone();
    bad[0] = f32::NAN;
    let info = EncoderInfo {
        name: "bad".into(),
        dim: 16,
    };
    match train_probe(&bad, info, &texts(&corpus), &tok, small_probe(16), &cfg) {
        Err(ProbeError::NonFinite {
            epoch: 1,
            last_good: None,
            ..
        }) => {}
        other => panic!("expected non-finite error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn config_validation() {
    let ok = TrainConfig::default();
    assert!(ok.validate().is_ok());
    for bad in [
        TrainConfig {
            val_fraction: 0.0,
            ..ok
        },
        TrainConfig {
            val_fraction: 1.0,
            ..ok
        },
        TrainConfig { beam: 0, ..ok },
        TrainConfig {
            batch_size: 0,
            ..ok
        },
        TrainConfig { lr: f64::NAN, ..ok },
    ] {
        assert!(matches!(bad.validate(), Err(ProbeError::Config(_))));
    }
    let (train, val) = split(100, 0.1, 5);
    assert_eq!((train.len(), val.len()), (90, 10));
    let all: HashSet<usize> = train.iter().chain(&val).copied().collect();
    assert_eq!(all.len(), 100);
}

#[test]
fn autoencoder_separates_words_and_stays_frozen_under_probe_training() {
    let corpus = small_corpus(5, 4, &HashSet::new());
    let tok = Tokenizer::from_vocab(Grammar::desk().vocab());
    let pcfg = PooledConfig {
        dim: 24,
        hidden: 24,
        layers: 1,
        seed: 1,
    };
    let enc = PooledEncoder::new(pcfg, tok.clone());
    let mut cfg = small_train();
    cfg.epochs = 3;
    let ae = autoencode_train(enc, &texts(&corpus), small_probe(24), &cfg).unwrap();
    assert!(ae.best_val_loss < ae.initial_val_loss);

    let frozen = ae.encoder;
    let cat = frozen.encode(&Caption::new("a", "a cat")).unwrap();
    let dog = frozen.encode(&Caption::new("b", "a dog")).unwrap();
    let dot: f32 = cat.iter().zip(&dog).map(|(a, b)| a * b).sum();
    let norm = |v: &[f32]| v.iter().map(|x| x * x).sum::<f32>().sqrt();
    let cosine = dot / (norm(&cat) * norm(&dog));
    assert!(cosine < 0.99, "cosine {cosine}");

    let before = bits(&frozen.params());
    let shuffled = ShuffledEncoder::new(frozen, 3);
    let emb = embed(&shuffled, &corpus);
    let info = EncoderInfo {
        name: shuffled.name(),
        dim: 24,
    };
    train_probe(&emb, info, &texts(&corpus), &tok, small_probe(24), &cfg).unwrap();
    assert_eq!(before, bits(&shuffled.inner().params()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("enc.ckpt");
    save_encoder(shuffled.inner(), ae.best_val_loss, ae.best_epoch, &path).unwrap();
    let loaded = load_encoder(&path).unwrap();
    assert_eq!(bits(&loaded.params()), before);
    assert!(ProbeCheckpoint::load(&path).is_err());
}
