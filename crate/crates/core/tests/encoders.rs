use bottleneck::encoders::{
    BowEncoder, Caption, EmbeddingTable, EncoderError, FileBackedEncoder, PooledConfig,
    PooledEncoder, PositionalBowEncoder, ShuffledEncoder, TableError, TextEncoder, Tokenizer,
};
use bottleneck::grammar::{GenerateOptions, Grammar, Vocabulary};
use bottleneck::numerics::gradcheck::check_gradient;
use bottleneck::numerics::{pack_grads, pack_values, unpack_values, HasParams};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

fn cap(text: &str) -> Caption<'_> {
    Caption::new("x", text)
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn tokenizer() -> Tokenizer {
    Tokenizer::from_vocab(&Vocabulary::desk())
}

fn encoders() -> Vec<Box<dyn TextEncoder>> {
    let mut cfg = PooledConfig {
        dim: 24,
        hidden: 16,
        layers: 2,
        seed: 3,
    };
    let projected: PooledEncoder = PooledEncoder::new(cfg, tokenizer());
    cfg.dim = 16;
    let square: PooledEncoder = PooledEncoder::new(cfg, tokenizer());
    vec![
        Box::new(BowEncoder::new(1, 64)),
        Box::new(PositionalBowEncoder::new(1, 64)),
        Box::new(ShuffledEncoder::new(BowEncoder::new(1, 64), 9)),
        Box::new(projected),
        Box::new(square),
    ]
}

#[test]
fn every_encoder_has_fixed_dim_finite_and_deterministic_output() {
    let texts = ["a cat", "an orange cat chasing a dog", "three wolves", ""];
    for e in encoders() {
        for t in texts {
            let a = e.encode(&cap(t)).unwrap();
            assert_eq!(a.len(), e.dim(), "{}", e.name());
            assert!(a.iter().all(|x| x.is_finite()), "{}", e.name());
            assert_eq!(bits(&a), bits(&e.encode(&cap(t)).unwrap()), "{}", e.name());
        }
        let caps: Vec<Caption> = texts.iter().map(|t| cap(t)).collect();
        let batched = e.encode_all(&caps).unwrap();
        for (row, t) in batched.iter().zip(texts) {
            let single = e.encode(&cap(t)).unwrap();
            for (x, y) in row.iter().zip(&single) {
                assert!(
                    (x - y).abs() < 1e-5,
                    "{} batch vs single on `{t}`",
                    e.name()
                );
            }
        }
    }
}

#[test]
fn bow_examples() {
    let e = BowEncoder::new(0, 256);
    let a = e.encode(&cap("a cat chasing a dog")).unwrap();
    let b = e.encode(&cap("a dog chasing a cat")).unwrap();
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(
        e.encode(&cap("a cat")).unwrap(),
        e.encode(&cap("a dog")).unwrap()
    );
    assert!(e.encode(&cap("")).unwrap().iter().all(|&x| x == 0.0));
    assert_eq!(
        bits(&e.encode(&cap("an orange cat and an ape")).unwrap()),
        bits(&e.encode(&cap("a cat and an orange ape")).unwrap())
    );
}

#[test]
fn bow_cannot_separate_any_swap_pair_in_the_corpus() {
    let g = Grammar::desk();
    let (corpus, _) = g
        .generate_corpus(&GenerateOptions::new(20, 11), &Default::default())
        .unwrap();
    let e = BowEncoder::new(5, 64);
    let p = PositionalBowEncoder::new(5, 64);
    let mut pairs = 0;
    let mut positional_differs = 0;
    for prompt in corpus.iter().filter(|p| p.order_sensitive) {
        let swapped = g.realize(&prompt.spec.swap_variant().unwrap());
        assert_eq!(
            bits(&e.encode(&cap(&prompt.text)).unwrap()),
            bits(&e.encode(&cap(&swapped)).unwrap()),
            "{} / {swapped}",
            prompt.text
        );
        pairs += 1;
        if p.encode(&cap(&prompt.text)).unwrap() != p.encode(&cap(&swapped)).unwrap() {
            positional_differs += 1;
        }
    }
    assert!(pairs > 100);
    assert_eq!(positional_differs, pairs);
}

proptest! {
    #[test]
    fn bow_is_bitwise_permutation_invariant(
        words in prop::collection::vec("[a-z]{1,6}", 0..12),
        seed in any::<u64>(),
    ) {
        let e = BowEncoder::new(seed % 1000, 32);
        let mut shuffled = words.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = e.encode(&cap(&words.join(" "))).unwrap();
        let b = e.encode(&cap(&shuffled.join(" "))).unwrap();
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn shuffle_preserves_values_and_norm(text in "[a-z]{1,5}( [a-z]{1,5}){0,6}", seed in any::<u64>()) {
        let inner = PositionalBowEncoder::new(2, 48);
        let wrapped = ShuffledEncoder::new(inner.clone(), seed);
        let a = inner.encode(&cap(&text)).unwrap();
        let b = wrapped.encode(&cap(&text)).unwrap();
        let mut sa = bits(&a);
        let mut sb = bits(&b);
        sa.sort_unstable();
        sb.sort_unstable();
        prop_assert_eq!(sa, sb);
        let norm = |v: &[f32]| {
            let mut sq: Vec<f64> = v.iter().map(|&x| (x as f64) * (x as f64)).collect();
            sq.sort_by(f64::total_cmp);
            sq.iter().sum::<f64>().sqrt()
        };
        prop_assert_eq!(norm(&a).to_bits(), norm(&b).to_bits());
        let inv = wrapped.inverse();
        let restored: Vec<f32> = inv.iter().map(|&i| b[i]).collect();
        prop_assert_eq!(bits(&restored), bits(&a));
    }

    #[test]
    fn table_round_trips_bit_exactly(
        rows in prop::collection::vec(prop::collection::vec(any::<u32>(), 5), 0..20),
    ) {
        let ids: Vec<String> = (0..rows.len()).map(|i| format!("p{i}")).collect();
        let data: Vec<f32> = rows.iter().flatten().map(|&b| f32::from_bits(b)).collect();
        let table = EmbeddingTable::new("enc", 5, ids.clone(), data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        table.save(&path).unwrap();
        let back = EmbeddingTable::load(&path).unwrap();
        prop_assert_eq!(back.ids(), &ids[..]);
        prop_assert_eq!(back.encoder_name(), "enc");
        prop_assert_eq!(back.dim(), 5);
        prop_assert_eq!(bits(back.data()), rows.concat());
    }
}

#[test]
fn shuffle_is_stable_and_not_self_inverse() {
    let inner = BowEncoder::new(4, 64);
    let w = ShuffledEncoder::new(inner.clone(), 17);
    assert_eq!(
        w.permutation(),
        ShuffledEncoder::new(inner.clone(), 17).permutation()
    );
    assert_ne!(
        w.permutation(),
        ShuffledEncoder::new(inner.clone(), 18).permutation()
    );
    let x = cap("a cat chasing a dog");
    assert_eq!(bits(&w.encode(&x).unwrap()), bits(&w.encode(&x).unwrap()));
    let twice = ShuffledEncoder::new(w.clone(), 17);
    assert_ne!(twice.encode(&x).unwrap(), inner.encode(&x).unwrap());
    let undo = ShuffledEncoder::with_permutation(w.clone(), w.inverse());
    assert_eq!(
        bits(&undo.encode(&x).unwrap()),
        bits(&inner.encode(&x).unwrap())
    );
}

#[test]
fn binary_layout_matches_hand_written_bytes() {
    let table = EmbeddingTable::new(
        "m",
        2,
        vec!["a".into(), "b".into()],
        vec![1.0, -2.0, 0.5, 0.0],
    )
    .unwrap();
    let mut bytes = Vec::new();
    table.write_binary(&mut bytes).unwrap();
    let mut expected = b"EMB1".to_vec();
    expected.extend([2, 0, 0, 0, 2, 0, 0, 0, 1]);
    expected.extend([0x00, 0x00, 0x80, 0x3f]);
    expected.extend([0x00, 0x00, 0x00, 0xc0]);
    expected.extend([0x00, 0x00, 0x00, 0x3f]);
    expected.extend([0x00, 0x00, 0x00, 0x00]);
    assert_eq!(bytes, expected);
    let (n, d, data) = EmbeddingTable::read_binary(&bytes[..]).unwrap();
    assert_eq!((n, d, data), (2, 2, vec![1.0, -2.0, 0.5, 0.0]));
}

#[test]
fn malformed_tables_are_rejected() {
    let ok = EmbeddingTable::new("m", 1, vec!["a".into()], vec![1.0]).unwrap();
    let mut bytes = Vec::new();
    ok.write_binary(&mut bytes).unwrap();

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(
        EmbeddingTable::read_binary(&bad[..]),
        Err(TableError::Magic)
    ));
    let mut bad = bytes.clone();
    bad[12] = 2;
    assert!(matches!(
        EmbeddingTable::read_binary(&bad[..]),
        Err(TableError::Dtype(2))
    ));
    assert!(matches!(
        EmbeddingTable::read_binary(&bytes[..bytes.len() - 1]),
        Err(TableError::Truncated { expected: 1 })
    ));
    assert!(matches!(
        EmbeddingTable::read_binary(&bytes[..3]),
        Err(TableError::Magic)
    ));

    assert!(matches!(
        EmbeddingTable::new("m", 1, vec!["a".into(), "a".into()], vec![1.0, 2.0]),
        Err(TableError::DuplicateId(id)) if id == "a"
    ));
    assert!(matches!(
        EmbeddingTable::new("m", 2, vec!["a".into()], vec![1.0]),
        Err(TableError::Mismatch(_))
    ));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bin");
    ok.save(&path).unwrap();
    std::fs::write(
        EmbeddingTable::sidecar_path(&path),
        r#"{"encoder_name":"m","ids":["a","b"]}"#,
    )
    .unwrap();
    assert!(matches!(
        EmbeddingTable::load(&path),
        Err(TableError::Mismatch(_))
    ));
}

#[test]
fn file_backed_encoder_looks_up_by_id() {
    let data: Vec<f32> = (0..3 * 512).map(|i| i as f32 / 7.0).collect();
    let ids = vec!["p0".to_string(), "p1".into(), "p2".into()];
    let enc =
        FileBackedEncoder::new(EmbeddingTable::new("clip-b32", 512, ids, data.clone()).unwrap());
    assert_eq!(enc.dim(), 512);
    assert_eq!(enc.name(), "clip-b32");
    let row = enc.encode(&Caption::new("p1", "any text at all")).unwrap();
    assert_eq!(row, &data[512..1024]);
    match enc.encode(&Caption::new("p9", "a cat")) {
        Err(EncoderError::MissingId(id)) => assert_eq!(id, "p9"),
        other => panic!("expected missing id, got {other:?}"),
    }
}

#[test]
fn table_from_encoder_matches_direct_encoding() {
    let e = BowEncoder::new(1, 16);
    let caps = [Caption::new("p0", "a cat"), Caption::new("p1", "a dog")];
    let t = EmbeddingTable::from_encoder(&e, &caps).unwrap();
    assert_eq!(t.encoder_name(), e.name());
    assert_eq!(t.get("p1").unwrap(), &e.encode(&caps[1]).unwrap()[..]);
    let dup = [Caption::new("p0", "a cat"), Caption::new("p0", "a dog")];
    assert!(matches!(
        EmbeddingTable::from_encoder(&e, &dup),
        Err(EncoderError::Table(TableError::DuplicateId(_)))
    ));
}

#[test]
fn pooled_encoder_separates_sentences_and_pools_single_tokens() {
    let cfg = PooledConfig {
        dim: 32,
        hidden: 32,
        layers: 1,
        seed: 8,
    };
    let e: PooledEncoder = PooledEncoder::new(cfg, tokenizer());
    assert!(e.projection.is_none());
    let a = e.encode(&cap("a cat chasing a dog")).unwrap();
    let b = e.encode(&cap("a dog chasing a cat")).unwrap();
    assert_ne!(a, b);

    let id = e.tokenizer().id("cat");
    let x = e.embedding.forward(&[id]).unwrap();
    let (state, _) = e.grus[0].forward(&x, &[0.0; 32], 1).unwrap();
    assert_eq!(e.encode(&cap("cat")).unwrap(), state);

    let names: BTreeSet<String> = e.params().iter().map(|p| p.name.clone()).collect();
    assert_eq!(names.len(), e.params().len());
}

#[test]
fn pooled_encoder_gradients_match_finite_differences() {
    let cfg = PooledConfig {
        dim: 5,
        hidden: 4,
        layers: 2,
        seed: 21,
    };
    let tok = Tokenizer::new(["a", "cat", "dog", "on"].map(String::from).to_vec());
    let base: PooledEncoder<f64> = PooledEncoder::new(cfg, tok);
    let batch = vec![vec![4, 5], vec![6, 7, 4], vec![], vec![5]];
    let coeff: Vec<f64> = (0..batch.len() * 5)
        .map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0)
        .collect();
    let theta = pack_values(&base.params());
    let report = check_gradient(&theta, |th| {
        let mut m = base.clone();
        unpack_values(&mut m.params_mut(), th);
        m.zero_grad();
        let (y, cache) = m.forward(&batch).unwrap();
        let loss = y.iter().zip(&coeff).map(|(a, b)| a * b).sum();
        m.backward(&cache, &coeff);
        (loss, pack_grads(&m.params()))
    });
    println!("pooled encoder: max rel err {:.2e}", report.max_rel_error);
    assert!(report.max_rel_error < 1e-4, "{report:?}");

    let f32_model: PooledEncoder<f32> = base.cast();
    let (y32, _) = f32_model.forward(&batch).unwrap();
    let (y64, _) = base.forward(&batch).unwrap();
    for (a, b) in y32.iter().zip(&y64) {
        assert!((*a as f64 - b).abs() < 1e-5);
    }
}

#[test]
fn padding_does_not_leak_into_gradients() {
    let cfg = PooledConfig {
        dim: 6,
        hidden: 6,
        layers: 1,
        seed: 2,
    };
    let mut e: PooledEncoder<f64> = PooledEncoder::new(cfg, tokenizer());
    let (y, cache) = e.forward(&[vec![9, 10, 11], vec![12]]).unwrap();
    e.backward(&cache, &vec![1.0; y.len()]);
    let table = &e.embedding.table;
    let d = table.value.shape()[1];
    assert!(
        table.grad.data()[..d].iter().all(|&g| g == 0.0),
        "PAD row has gradient"
    );
    assert!(table.grad.data()[12 * d..13 * d].iter().any(|&g| g != 0.0));
}
