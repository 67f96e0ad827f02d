use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use polypos_core::analysis::{position_table, procrustes_curve, word_position_correlation};
use polypos_core::corpus::toy::{generate_treebank, WordOrder};
use polypos_core::corpus::{build_paired_corpus, collect_order_stats, learn_bpe, DepSentence, PairMode};
use polypos_core::encoder::{EncoderConfig, EncoderModel};
use polypos_core::multieval::{evaluate, EvalSettings};
use polypos_core::posenc::PosEncKind;
use polypos_core::trainer::{train, TrainConfig};

fn small_config(kind: PosEncKind, vocab: usize) -> EncoderConfig {
    let mut cfg = EncoderConfig::tiny(kind, vocab);
    cfg.d_model = 16;
    cfg.posenc.d_model = 16;
    cfg.d_ff = 32;
    cfg.max_seq_len = 64;
    cfg.posenc.max_positions = if kind.is_relative() { 8 } else { 64 };
    cfg
}

#[test]
fn toy_corpus_to_report_for_every_kind() {
    let sentences = generate_treebank(120, 1, &WordOrder::preset("en").unwrap());
    let text: Vec<String> = sentences.iter().map(DepSentence::text).collect();
    let bpe = learn_bpe(&text.join("\n"), 150).unwrap();
    let order = collect_order_stats(&generate_treebank(200, 2, &WordOrder::preset("ja").unwrap())).unwrap();
    let train_set = build_paired_corpus(&sentences[..100], &bpe, PairMode::Reorder(&order), 0, "ja").unwrap();
    let eval_set = build_paired_corpus(&sentences[100..], &bpe, PairMode::Reorder(&order), 0, "ja").unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        pack: true,
        ..TrainConfig::default()
    };
    for kind in PosEncKind::ALL {
        let mut model =
            EncoderModel::init(small_config(kind, train_set.total_vocab()), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let log = train(&mut model, &train_set, &eval_set, &cfg, 0).unwrap();
        assert_eq!(log.len(), 2);
        assert!(log.iter().all(|e| e.train_loss.is_finite() && e.val_ppl_full > 1.0));
        let settings = EvalSettings {
            layers: [0, 2],
            batch: 8,
            ppl_seed: 1,
        };
        let report = evaluate(&model, &eval_set, &settings, &cfg, BTreeMap::new()).unwrap();
        assert!((0.0..=100.0).contains(&report.ml_score), "{kind}");
        assert_eq!(report.retrieval_acc.len(), 2);

        if !kind.is_relative() {
            let table = position_table(&model, 48).unwrap();
            let curve = procrustes_curve(&table, 1..=4, 5, 0).unwrap();
            assert!(curve.iter().all(|r| r.mean_loss.is_finite() && r.mean_loss >= 0.0));
        }
        if matches!(kind, PosEncKind::Absolute | PosEncKind::Sinusoidal) {
            let corr = word_position_correlation(&model, 10, &[5, 6, 7]).unwrap();
            assert_eq!(corr.word_query.shape(), (3, 10));
        }
    }
}
