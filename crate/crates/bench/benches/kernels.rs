use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polypos_core::analysis::compositionality_loss;
use polypos_core::corpus::toy::{generate_treebank, WordOrder};
use polypos_core::corpus::{learn_bpe, CLS, SEP};
use polypos_core::encoder::{EncoderConfig, EncoderModel, MaskedTarget};
use polypos_core::numerics::{svd, Matrix};
use polypos_core::posenc::{sinusoidal_table, PosEncKind};

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn linear_algebra(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (a, b) = (random(128, 32, &mut rng), random(32, 128, &mut rng));
    c.bench_function("matmul 128x32x128", |bch| bch.iter(|| black_box(a.matmul(&b).unwrap())));
    let m = random(32, 32, &mut rng);
    c.bench_function("svd 32x32", |bch| bch.iter(|| black_box(svd(&m).unwrap())));
    let table = sinusoidal_table(128, 32).unwrap();
    c.bench_function("procrustes offset 8, 10 runs", |bch| {
        bch.iter_batched(
            || ChaCha8Rng::seed_from_u64(1),
            |mut r| black_box(compositionality_loss(&table, 8, 10, &mut r).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

fn training_step(c: &mut Criterion) {
    let seqs: Vec<Vec<u32>> = (0..8)
        .map(|i| std::iter::once(CLS).chain((0..30).map(|j| 5 + ((i * 7 + j * 3) % 90) as u32)).chain([SEP]).collect())
        .collect();
    let targets: Vec<MaskedTarget> = (0..8).map(|b| MaskedTarget { row: b * 32 + 5, id: 9 }).collect();
    for kind in [PosEncKind::Absolute, PosEncKind::TupeRelative, PosEncKind::RelativeKeyQuery] {
        let mut cfg = EncoderConfig::tiny(kind, 100);
        cfg.d_model = 32;
        cfg.posenc.d_model = 32;
        cfg.d_ff = 128;
        cfg.max_seq_len = 64;
        cfg.posenc.max_positions = if kind.is_relative() { 16 } else { 64 };
        let model = EncoderModel::init(cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        c.bench_function(&format!("loss+gradients 2x32 {}", kind.slug()), |bch| {
            bch.iter(|| black_box(model.loss_and_gradients(&seqs, &targets, None).unwrap()))
        });
    }
}

fn tokenizer(c: &mut Criterion) {
    let text: Vec<String> = generate_treebank(500, 3, &WordOrder::preset("en").unwrap())
        .iter()
        .map(|s| s.text())
        .collect();
    let text = text.join("\n");
    c.bench_function("learn_bpe 500 sentences to 400", |bch| bch.iter(|| black_box(learn_bpe(&text, 400).unwrap())));
    let bpe = learn_bpe(&text, 400).unwrap();
    c.bench_function("bpe encode 500 sentences", |bch| bch.iter(|| black_box(bpe.encode(&text))));
}

criterion_group!(benches, linear_algebra, training_step, tokenizer);
criterion_main!(benches);
