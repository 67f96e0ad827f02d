use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::corpus::toy::{generate_treebank, WordOrder};
use crate::corpus::{build_paired_corpus, learn_bpe, PairMode, CLS, SEP};
use crate::encoder::EncoderConfig;
use crate::numerics::svd;
use crate::posenc::PosEncKind;

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn corpus(n: usize) -> PairedCorpus {
    let tb = generate_treebank(n, 11, &WordOrder::preset("en").unwrap());
    let text: Vec<String> = tb.iter().map(|s| s.text()).collect();
    let bpe = learn_bpe(&text.join("\n"), 120).unwrap();
    build_paired_corpus(&tb, &bpe, PairMode::Copy, 0, "en").unwrap()
}

fn model(kind: PosEncKind, vocab: usize) -> EncoderModel {
    let mut cfg = EncoderConfig::tiny(kind, vocab);
    cfg.max_seq_len = 64;
    cfg.posenc.max_positions = 64;
    EncoderModel::init(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
}

#[test]
fn ml_score_matches_known_rows() {
    let a = ml_score(37.43, 97.29, 77.03, 64.07);
    assert!((a - 68.955).abs() < 1e-9);
    assert_eq!(round_half_up(a, 2), 68.95);
    let b = ml_score(9.62, 52.51, 47.60, 19.36);
    assert!((b - 32.2725).abs() < 1e-9);
    assert_eq!(round_half_up(b, 2), 32.27);
    assert_eq!(ml_score(0.0, 0.0, 0.0, 0.0), 0.0);
}

#[test]
fn rounding_goes_up_on_exact_ties() {
    assert_eq!(round_half_up(0.125, 2), 0.13);
    assert_eq!(round_half_up(2.5, 0), 3.0);
    assert_eq!(round_half_up(-0.125, 2), -0.13);
    assert_eq!(round_half_up(9.995, 2), 9.99); // binary value is below the tie
    assert_eq!(round_half_up(99.996, 2), 100.0);
}

#[test]
fn identical_halves_retrieve_perfectly() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a: Vec<Vec<f64>> = (0..20).map(|_| gaussian(&mut rng, 8)).collect();
    assert_eq!(retrieval_accuracy_from(&a, &a).unwrap(), 100.0);
    assert!(retrieval_accuracy_from(&a[..1], &a[..1]).is_err());
}

#[test]
fn random_vectors_retrieve_at_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 10;
    let mut total = 0.0;
    for _ in 0..1000 {
        let a: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut rng, 8)).collect();
        let b: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut rng, 8)).collect();
        total += retrieval_accuracy_from(&a, &b).unwrap();
    }
    let mean = total / 1000.0;
    assert!((mean - 100.0 / n as f64).abs() < 1.0, "{mean}");
}

#[test]
fn zero_vectors_are_never_retrieved() {
    let q = vec![1.0, 0.0];
    assert_eq!(cosine(&q, &[0.0, 0.0]), f64::NEG_INFINITY);
    assert_eq!(nearest(&q, &[vec![0.0, 0.0], vec![-1.0, 0.0]]), Some(1));
    // ties go to the lowest index
    assert_eq!(nearest(&q, &[vec![2.0, 1.0], vec![4.0, 2.0]]), Some(0));
}

#[test]
fn accuracies_are_rotation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q = svd(&Matrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0))).unwrap().u;
    let rot = |v: &Vec<f64>| q.matmul(&Matrix::from_vec(8, 1, v.clone()).unwrap()).unwrap().into_vec();
    let a: Vec<Vec<f64>> = (0..30).map(|_| gaussian(&mut rng, 8)).collect();
    let b: Vec<Vec<f64>> = a
        .iter()
        .map(|v| v.iter().map(|x| x + 0.8 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect())
        .collect();
    let before = retrieval_accuracy_from(&a, &b).unwrap();
    let after = retrieval_accuracy_from(&a.iter().map(rot).collect::<Vec<_>>(), &b.iter().map(rot).collect::<Vec<_>>()).unwrap();
    assert_eq!(before, after);
    assert!(before > 0.0 && before < 100.0);

    let ta: BTreeMap<u32, Vec<f64>> = a.iter().enumerate().map(|(i, v)| (5 + i as u32, v.clone())).collect();
    let tb: BTreeMap<u32, Vec<f64>> = b.iter().enumerate().map(|(i, v)| (105 + i as u32, v.clone())).collect();
    let ra: BTreeMap<u32, Vec<f64>> = ta.iter().map(|(k, v)| (*k, rot(v))).collect();
    let rb: BTreeMap<u32, Vec<f64>> = tb.iter().map(|(k, v)| (*k, rot(v))).collect();
    assert_eq!(
        translation_accuracy_from(&ta, &tb, 100).unwrap(),
        translation_accuracy_from(&ra, &rb, 100).unwrap()
    );
}

#[test]
fn random_type_vectors_translate_at_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = 20;
    let mut total = 0.0;
    for _ in 0..500 {
        let a: BTreeMap<u32, Vec<f64>> = (0..t).map(|i| (5 + i, gaussian(&mut rng, 8))).collect();
        let b: BTreeMap<u32, Vec<f64>> = (0..t).map(|i| (5 + t + i, gaussian(&mut rng, 8))).collect();
        total += translation_accuracy_from(&a, &b, t).unwrap().0;
    }
    let mean = total / 500.0;
    assert!((mean - 100.0 / t as f64).abs() < 1.0, "{mean}");
}

#[test]
fn unmatched_types_are_excluded_and_counted() {
    let a: BTreeMap<u32, Vec<f64>> = [(5, vec![1.0, 0.0]), (6, vec![0.0, 1.0]), (7, vec![1.0, 1.0])].into();
    let b: BTreeMap<u32, Vec<f64>> = [(15, vec![1.0, 0.1]), (16, vec![0.1, 1.0]), (19, vec![-1.0, 0.0])].into();
    assert_eq!(translation_accuracy_from(&a, &b, 10).unwrap(), (100.0, 2));
}

#[test]
fn copied_embeddings_translate_perfectly_at_layer_zero() {
    let c = corpus(60);
    let mut m = model(PosEncKind::Absolute, c.total_vocab());
    let v = c.vocab_size;
    for id in 5..5 + v {
        let row = m.tok_emb.row(id).to_vec();
        m.tok_emb.row_mut(id + v).copy_from_slice(&row);
    }
    assert_eq!(translation_accuracy(&m, &c, 0).unwrap(), 100.0);
}

#[test]
fn sentence_representation_is_a_mean_of_exported_states() {
    let c = corpus(5);
    let m = model(PosEncKind::TupeAbsolute, c.total_vocab());
    let s = &c.pairs[0].0;
    let got = sentence_repr(&m, s, 2).unwrap();
    let framed: Vec<u32> = [CLS].into_iter().chain(s.iter().copied()).chain([SEP]).collect();
    let out = m.forward(&[framed]).unwrap();
    for k in 0..8 {
        let want = (1..=s.len()).map(|i| out.hidden[2].get(i, k)).sum::<f64>() / s.len() as f64;
        assert!((got[k] - want).abs() < 1e-12);
    }
    // a single token is its own representation
    let one = sentence_repr(&m, &s[..1], 1).unwrap();
    let h = m.forward(&[vec![CLS, s[0], SEP]]).unwrap();
    assert_eq!(one, h.hidden[1].row(1).to_vec());
    assert!(sentence_repr(&m, &[], 1).is_err());
}

#[test]
fn batched_representations_ignore_padding() {
    let c = corpus(12);
    let m = model(PosEncKind::RelativeKeyQuery, c.total_vocab());
    let batched = collect_representations(&m, &c, &[1], 5).unwrap();
    for (i, (a, _)) in c.pairs.iter().enumerate() {
        let single = sentence_repr(&m, a, 1).unwrap();
        let d = single.iter().zip(&batched.sentences[&1].0[i]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 1e-10);
    }
}

#[test]
fn evaluation_report_round_trips_and_fills_metadata() {
    let c = corpus(20);
    let m = model(PosEncKind::Sinusoidal, c.total_vocab());
    let settings = EvalSettings { layers: [0, 2], batch: 8, ppl_seed: 1 };
    let meta: BTreeMap<String, String> = [("model".to_string(), "sinusoidal".to_string())].into();
    let r = evaluate(&m, &c, &settings, &TrainConfig::default(), meta).unwrap();
    let accs = [r.retrieval_acc[&0], r.retrieval_acc[&2], r.translation_acc[&0], r.translation_acc[&2]];
    assert!(accs.iter().all(|a| (0.0..=100.0).contains(a)));
    assert!((r.ml_score - accs.iter().sum::<f64>() / 4.0).abs() < 1e-9);
    assert!(r.metadata.contains_key("layer0"));
    let mut buf = Vec::new();
    r.write_json(&mut buf).unwrap();
    let back: EvalReport = serde_json::from_slice(&buf).unwrap();
    assert_eq!(back, r);
    assert_eq!(r.csv_row().split(',').count(), REPORT_HEADER.split(',').count());
}
