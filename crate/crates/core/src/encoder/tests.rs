use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{CLS, PAD, SEP};
use crate::numerics::Matrix;
use crate::posenc::{sinusoidal_table, PosEncKind};

const VOCAB: usize = 12;

fn model(kind: PosEncKind, ablation: AblationFlags, seed: u64) -> EncoderModel {
    let mut cfg = EncoderConfig::tiny(kind, VOCAB);
    cfg.ablation = ablation;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = EncoderModel::init(cfg, &mut rng).unwrap();
    // push every parameter away from its structured init so no term vanishes
    use rand::Rng;
    for p in m.parameters_mut() {
        for x in p.data_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
    }
    m
}

fn seqs() -> Vec<Vec<u32>> {
    vec![vec![CLS, 5, 6, 7, 8, SEP], vec![CLS, 9, 10, SEP]]
}

fn targets() -> Vec<MaskedTarget> {
    vec![
        MaskedTarget { row: 1, id: 5 },
        MaskedTarget { row: 4, id: 8 },
        MaskedTarget { row: 7, id: 9 },
    ]
}

fn max_rel_grad_error(m: &EncoderModel) -> f64 {
    let (_, analytic) = m.loss_and_gradients(&seqs(), &targets(), None).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (pi, g) in analytic.iter().enumerate() {
        let mut fd = Matrix::zeros(g.rows(), g.cols());
        for e in 0..g.data().len() {
            let mut plus = m.clone();
            plus.parameters_mut()[pi].data_mut()[e] += h;
            let mut minus = m.clone();
            minus.parameters_mut()[pi].data_mut()[e] -= h;
            fd.data_mut()[e] = (plus.loss(&seqs(), &targets()).unwrap() - minus.loss(&seqs(), &targets()).unwrap()) / (2.0 * h);
        }
        let denom = fd.frobenius() + g.frobenius();
        if denom > 1e-8 {
            worst = worst.max(fd.sub(g).unwrap().frobenius() / denom);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_for_every_kind() {
    for kind in PosEncKind::ALL {
        let err = max_rel_grad_error(&model(kind, AblationFlags::default(), 1));
        assert!(err < 1e-4, "{kind}: {err}");
    }
}

#[test]
fn gradients_match_finite_differences_for_every_ablation() {
    for (name, ab) in AblationFlags::settings() {
        let err = max_rel_grad_error(&model(PosEncKind::Absolute, ab, 2));
        assert!(err < 1e-4, "{name}: {err}");
    }
}

#[test]
fn absolute_terms_sum_to_first_layer_logits() {
    let m = model(PosEncKind::Absolute, AblationFlags::default(), 3);
    let terms = m.absolute_terms(&seqs()).unwrap();
    let logits = m.attention_logits(&seqs(), 1).unwrap();
    let sum = terms.iter().skip(1).fold(terms[0].clone(), |acc, t| acc.add(t).unwrap());
    assert!(sum.max_abs_diff(&logits) < 1e-9);

    // each ablation removes exactly its term
    for (i, flags) in [(3, "pp"), (1, "wp"), (2, "pw")] {
        let mut ab = AblationFlags::default();
        match flags {
            "pp" => ab.drop_position_position = true,
            "wp" => ab.drop_position_word = true,
            _ => ab.drop_word_position = true,
        }
        let mut a = m.clone();
        a.config.ablation = ab;
        let got = a.attention_logits(&seqs(), 1).unwrap();
        assert!(sum.sub(&terms[i]).unwrap().max_abs_diff(&got) < 1e-9, "{flags}");
    }
}

#[test]
fn padding_does_not_change_real_positions() {
    for kind in PosEncKind::ALL {
        let m = model(kind, AblationFlags::default(), 4);
        let short = vec![CLS, 5, 6, SEP];
        let alone = m.forward(std::slice::from_ref(&short)).unwrap();
        let mut padded = short.clone();
        padded.extend([PAD, PAD, PAD]);
        let with_pad = m.forward(&[padded]).unwrap();
        for l in 0..alone.hidden.len() {
            let a = alone.hidden[l].slice_rows(0, 4);
            let b = with_pad.hidden[l].slice_rows(0, 4);
            assert!(a.max_abs_diff(&b) < 1e-10, "{kind} layer {l}");
        }
    }
}

#[test]
fn zeroed_positions_make_the_model_permutation_equivariant() {
    for kind in PosEncKind::ALL {
        let mut m = model(kind, AblationFlags::default(), 5);
        if kind == PosEncKind::Sinusoidal {
            continue; // fixed table cannot be zeroed
        }
        for (_, p) in m.pos.named_mut() {
            p.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let s = vec![CLS, 5, 6, 7, 8];
        let perm = [0usize, 3, 1, 4, 2];
        let ps: Vec<u32> = perm.iter().map(|&i| s[i]).collect();
        let a = m.forward(&[s]).unwrap();
        let b = m.forward(&[ps]).unwrap();
        let last = a.hidden.len() - 1;
        for (new, &old) in perm.iter().enumerate() {
            let ra = a.hidden[last].row(old);
            let rb = b.hidden[last].row(new);
            let d = ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(d < 1e-10, "{kind}: {d}");
        }
    }
}

#[test]
fn sinusoidal_layer_zero_is_scaled_embedding_plus_table() {
    let m = model(PosEncKind::Sinusoidal, AblationFlags::default(), 6);
    let s = vec![CLS, 5, 6, SEP];
    let out = m.forward(std::slice::from_ref(&s)).unwrap();
    let table = sinusoidal_table(4, 8).unwrap();
    let scale = 2.0 * 8f64.sqrt();
    for (i, &id) in s.iter().enumerate() {
        for c in 0..8 {
            let want = scale * m.tok_emb.get(id as usize, c) + table.get(i, c);
            assert!((out.hidden[0].get(i, c) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn relative_key_with_zero_offsets_matches_plain_attention() {
    let mut rel = model(PosEncKind::RelativeKey, AblationFlags::default(), 7);
    rel.pos.offsets.as_mut().unwrap().data_mut().iter_mut().for_each(|x| *x = 0.0);
    let mut plain = rel.clone();
    plain.config.posenc.kind = PosEncKind::RelativeKeyQuery;
    let a = rel.forward(&seqs()).unwrap();
    let b = plain.forward(&seqs()).unwrap();
    assert!(a.logits.max_abs_diff(&b.logits) < 1e-12);
}

#[test]
fn uniform_logits_give_log_vocab_loss() {
    let logits = Matrix::zeros(3, 4101);
    let loss = mlm_loss(&logits, &[Some(7), None, Some(4000)]).unwrap();
    assert!((loss - 4101f64.ln()).abs() < 1e-12);
    assert!(matches!(mlm_loss(&logits, &[None, None, None]), Err(crate::Error::NoMaskedPositions)));
}

#[test]
fn parameter_counts_follow_the_architecture() {
    let d = 64;
    let ff = 256;
    let v = 4101;
    let per_layer = 4 * (d * d + d) + 2 * d * ff + ff + d + 4 * d;
    let base = v * d + v + 12 * per_layer;
    let extra = |kind| match kind {
        PosEncKind::Sinusoidal | PosEncKind::RelativeKey | PosEncKind::RelativeKeyQuery => {
            if kind == PosEncKind::Sinusoidal {
                0
            } else {
                (2 * 512 - 1) * d
            }
        }
        PosEncKind::Absolute => 512 * d,
        PosEncKind::TupeAbsolute => 512 * d + 2 * d * d + 2,
        PosEncKind::TupeRelative => 128 * d + 2 * d * d + 32 + 2,
    };
    for kind in PosEncKind::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cfg = EncoderConfig::full_scale(kind, v);
        if kind.is_relative() {
            cfg.posenc.max_positions = 512;
        }
        let m = EncoderModel::init(cfg, &mut rng).unwrap();
        assert_eq!(m.num_parameters(), base + extra(kind), "{kind}");
    }
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let m = model(PosEncKind::TupeRelative, AblationFlags::default(), 8);
    let dir = tempfile::tempdir().unwrap();
    let meta = CheckpointMeta {
        seed: 8,
        epoch: 3,
        ..Default::default()
    };
    m.save(dir.path(), &meta).unwrap();
    let (back, meta_back) = EncoderModel::load(dir.path()).unwrap();
    assert_eq!(meta_back, meta);
    for ((n, a), (_, b)) in m.named_parameters().iter().zip(back.named_parameters()) {
        let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same, "{n}");
    }
}

#[test]
fn misconfigured_models_are_rejected() {
    let mut cfg = EncoderConfig::tiny(PosEncKind::Absolute, VOCAB);
    cfg.heads = 2;
    assert!(cfg.validate().is_err());
    let mut cfg = EncoderConfig::tiny(PosEncKind::Sinusoidal, VOCAB);
    cfg.ablation.drop_position_word = true;
    assert!(cfg.validate().is_err());
    let m = model(PosEncKind::Absolute, AblationFlags::default(), 9);
    assert!(m.forward(&[vec![CLS; 17]]).is_err());
    assert!(m.forward(&[vec![VOCAB as u32]]).is_err());
}
