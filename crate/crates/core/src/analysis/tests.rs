use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::encoder::{AblationFlags, EncoderConfig, EncoderModel};
use crate::posenc::PosEncKind;
use crate::numerics::svd;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    svd(&random_matrix(rng, d, d)).unwrap().u
}

fn orthogonality_error(t: &Matrix) -> f64 {
    t.t_matmul(t).unwrap().max_abs_diff(&Matrix::identity(t.rows()))
}

#[test]
fn procrustes_recovers_identity_and_isometries() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = random_matrix(&mut rng, 20, 6);
    let t = fit_orthogonal_procrustes(&a, &a).unwrap();
    assert!(procrustes_loss(&a, &a, &t).unwrap() < 1e-20);
    assert!(orthogonality_error(&t) < 1e-8);

    // rows bᵢ = Qᵀ aᵢ, so aᵢ = Q bᵢ
    let q = random_orthogonal(&mut rng, 6);
    let b = a.matmul(&q).unwrap();
    let t = fit_orthogonal_procrustes(&a, &b).unwrap();
    assert!(procrustes_loss(&a, &b, &t).unwrap() < 1e-8);
    assert!(t.max_abs_diff(&q) < 1e-8);
    assert!(fit_orthogonal_procrustes(&a, &a.slice_rows(0, 3)).is_err());
}

#[test]
fn fitted_maps_are_orthogonal_even_for_rank_deficient_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for rows in [2, 5, 40] {
        let a = random_matrix(&mut rng, rows, 8);
        let b = random_matrix(&mut rng, rows, 8);
        assert!(orthogonality_error(&fit_orthogonal_procrustes(&a, &b).unwrap()) < 1e-8);
    }
}

#[test]
fn sinusoids_compose_exactly_and_random_tables_do_not() {
    let table = crate::posenc::sinusoidal_table(512, 64).unwrap();
    for k in [1, 7, 32, 64] {
        let r = compositionality_loss(&table, k, 25, &mut ChaCha8Rng::seed_from_u64(k as u64)).unwrap();
        assert!(r.mean_loss < 1e-9, "k={k}: {}", r.mean_loss);
        assert!(r.losses.iter().all(|l| *l >= 0.0));
        assert!(r.chunk_sizes.iter().all(|c| CHUNK_RANGE.contains(c)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noise = random_matrix(&mut rng, 128, 32);
    let r = compositionality_loss(&noise, 1, 125, &mut rng).unwrap();
    assert!(r.mean_loss > 0.01, "{}", r.mean_loss);
    let zero = compositionality_loss(&noise, 0, 10, &mut rng).unwrap();
    assert_eq!(zero.mean_loss, 0.0);
    assert!(compositionality_loss(&noise, 100, 1, &mut rng).is_err());
}

#[test]
fn procrustes_loss_is_seeded_and_rotation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_matrix(&mut rng, 96, 16);
    let q = random_orthogonal(&mut rng, 16);
    let a = procrustes_curve(&p, 1..=4, 20, 9).unwrap();
    let b = procrustes_curve(&p, 1..=4, 20, 9).unwrap();
    assert_eq!(a, b);
    let rotated = procrustes_curve(&p.matmul(&q).unwrap(), 1..=4, 20, 9).unwrap();
    for (x, y) in a.iter().zip(&rotated) {
        assert!((x.mean_loss - y.mean_loss).abs() < 1e-8);
    }
}

#[test]
fn wilcoxon_matches_hand_computed_ranks() {
    // differences 1.5 −0.5 2 3 −1 0.5 4 −2 2.5 0: the zero is dropped, the
    // pairs |0.5| and |2| tie, so W+ = 4+5.5+8+1.5+9+7 = 35 and W− = 10.
    let x = [2.5, 1.0, 5.0, 3.0, 0.0, 1.5, 6.0, 1.0, 3.5, 7.0];
    let y = [1.0, 1.5, 3.0, 0.0, 1.0, 1.0, 2.0, 3.0, 1.0, 7.0];
    let r = wilcoxon_signed_rank(&x, &y).unwrap();
    assert_eq!((r.n, r.w_plus, r.w_minus), (9, 35.0, 10.0));
    // 41 of the 512 sign patterns give W+ ≤ 10
    assert!((r.p_value - 2.0 * 41.0 / 512.0).abs() < 1e-12);
    assert!(r.exact);
    assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    assert!(wilcoxon_signed_rank(&[1.0], &[1.0]).is_err());
}

#[test]
fn wilcoxon_normal_approximation_tracks_the_exact_tail() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 60;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| v - 0.15 + rng.random_range(-0.5..0.5)).collect();
    let r = wilcoxon_signed_rank(&x, &y).unwrap();
    assert!(!r.exact);
    // exact tail by subset-sum counting over integer ranks 1..n
    let mut counts = vec![0f64; n * (n + 1) / 2 + 1];
    counts[0] = 1.0;
    for rank in 1..=n {
        for s in (rank..counts.len()).rev() {
            counts[s] += counts[s - rank];
        }
    }
    let stat = r.w_plus.min(r.w_minus) as usize;
    let exact = 2.0 * counts[..=stat].iter().sum::<f64>() / 2f64.powi(n as i32);
    assert!((r.p_value - exact).abs() < 0.01, "{} vs {exact}", r.p_value);
    assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), Some(2.5));
}

fn tiny(kind: PosEncKind, seed: u64) -> EncoderModel {
    let mut cfg = EncoderConfig::tiny(kind, 40);
    cfg.d_model = 16;
    cfg.posenc = crate::posenc::PosEncSpec::new(kind, 16);
    cfg.posenc.max_positions = 40;
    EncoderModel::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn correlations_vanish_with_zero_embeddings_and_stay_small_at_init() {
    let words: Vec<u32> = (5..40).collect();
    let mut m = tiny(PosEncKind::Absolute, 0);
    m.tok_emb = Matrix::zeros(40, 16);
    let c = word_position_correlation(&m, 32, &words).unwrap();
    assert_eq!(c.word_query.max_abs(), 0.0);
    assert_eq!(banding_statistic(&c.word_query), 0.0);
    for seed in 0..5 {
        let c = word_position_correlation(&tiny(PosEncKind::Absolute, seed), 32, &words).unwrap();
        let mean_abs = c.word_query.data().iter().map(|x| x.abs()).sum::<f64>() / c.word_query.data().len() as f64;
        assert!(mean_abs < 0.01, "{mean_abs}");
        assert!(banding_statistic(&c.word_query) > 0.0);
        assert_eq!(c.word_query.shape(), (35, 32));
    }
    assert!(word_position_correlation(&tiny(PosEncKind::TupeAbsolute, 0), 8, &words).is_err());
}

#[test]
fn correlation_matches_a_direct_dot_product() {
    let mut cfg = EncoderConfig::tiny(PosEncKind::Absolute, 40);
    cfg.ablation = AblationFlags {
        untie_word_position_params: true,
        ..Default::default()
    };
    let m = EncoderModel::init(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let c = word_position_correlation(&m, 6, &[7, 9]).unwrap();
    let p = m.pos.table.as_ref().unwrap();
    let dot = |a: &[f64], w: &Matrix, b: &[f64], u: &Matrix| {
        let qa = Matrix::row_vector(a).matmul(w).unwrap();
        let kb = Matrix::row_vector(b).matmul(u).unwrap();
        qa.matmul_t(&kb).unwrap().as_scalar() / 8f64.sqrt()
    };
    let want = dot(m.tok_emb.row(9), &m.layers[0].wq, p.row(4), m.pos.u_key.as_ref().unwrap());
    assert!((c.word_query.get(1, 4) - want).abs() < 1e-15);
    let want = dot(p.row(4), m.pos.u_query.as_ref().unwrap(), m.tok_emb.row(9), &m.layers[0].wk);
    assert!((c.position_query.get(1, 4) - want).abs() < 1e-15);
    let z = z_scored(&c.word_query);
    assert!(z.sum().abs() < 1e-9 && (z.frobenius_sq() / 12.0 - 1.0).abs() < 1e-9);
}

#[test]
fn exported_dimensions_round_trip() {
    let s = tiny(PosEncKind::Sinusoidal, 0);
    let pts = export_encoding_dims(&s, &[0, 4, 8], 0..32).unwrap();
    assert_eq!(pts.len(), 3 * 32);
    for p in pts.iter().filter(|p| p.dim == 0) {
        assert!((p.value - (p.position as f64).sin()).abs() < 1e-15);
    }
    let a = tiny(PosEncKind::Absolute, 1);
    let pts = export_encoding_dims(&a, &[0, 4, 8, 15], 0..32).unwrap();
    let mut buf = Vec::new();
    write_points_csv(&mut buf, &pts).unwrap();
    assert_eq!(read_points_csv(buf.as_slice()).unwrap(), pts);
    assert!(export_encoding_dims(&a, &[16], 0..2).is_err());

    let r = tiny(PosEncKind::RelativeKey, 2);
    let pts = export_encoding_dims(&r, &[1], -16..16).unwrap();
    let k = r.config.posenc.max_positions as i64;
    let table = r.pos.offsets.as_ref().unwrap();
    assert_eq!(pts[0].value, table.get((-16 + k - 1) as usize, 1));
}

#[test]
fn position_tables_exist_only_for_absolute_style_kinds() {
    assert!(position_table(&tiny(PosEncKind::RelativeKeyQuery, 0), 8).is_err());
    let t = tiny(PosEncKind::TupeRelative, 0);
    let raw = position_table_view(&t, 8, TableView::Raw).unwrap();
    let proj = position_table_view(&t, 8, TableView::KeyProjected).unwrap();
    assert_eq!(proj, raw.matmul(t.pos.u_key.as_ref().unwrap()).unwrap());
}
