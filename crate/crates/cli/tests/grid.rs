use std::sync::atomic::{AtomicUsize, Ordering};

use polypos_cli::config::{ExperimentConfig, LanguageConfig};
use polypos_cli::evaluate::{aggregate, ResultRow};
use polypos_cli::grid::{enumerate_cells, matches_pattern, run_cells, select_cells, Cell, Variant};
use polypos_cli::stats::{mean, population_std};
use polypos_core::posenc::PosEncKind;

fn cfg() -> ExperimentConfig {
    let mut c = ExperimentConfig::desk("/tmp/unused");
    c.languages.push(LanguageConfig {
        tag: "fr".into(),
        superstrate: None,
    });
    c.ablations = true;
    c.monolingual_control = true;
    c
}

#[test]
fn desk_grid_has_expected_shape() {
    let c = cfg();
    let cells = enumerate_cells(&c);
    // per language and seed: 6 kinds + 4 ablations + 1 control
    assert_eq!(cells.len(), 2 * 2 * 11);
    let unique: std::collections::BTreeSet<_> = cells.iter().collect();
    assert_eq!(unique.len(), cells.len());
    assert_eq!(enumerate_cells(&c), cells);
}

#[test]
fn cell_ids_round_trip() {
    for cell in enumerate_cells(&cfg()) {
        let id = cell.to_string();
        assert_eq!(id.parse::<Cell>().unwrap(), cell, "{id}");
        assert!(!cell.dir_name().contains('/'));
    }
    let c: Cell = "toy/fr/absolute+drop_position_word/42".parse().unwrap();
    assert_eq!(c.kind, PosEncKind::Absolute);
    assert_eq!(c.variant, Variant::Ablation("drop_position_word".into()));
    assert!(c.ablation().drop_position_word && !c.ablation().drop_word_position);
    assert_eq!("toy/en/absolute+mono/0".parse::<Cell>().unwrap().variant, Variant::Monolingual);
    for bad in ["toy/en/absolute", "toy/en/nope/0", "toy/en/absolute+nope/0", "toy/en/absolute/x"] {
        assert!(bad.parse::<Cell>().is_err(), "{bad}");
    }
}

#[test]
fn patterns_select_cells() {
    let c = cfg();
    let cell: Cell = "toy/en/relative_key/42".parse().unwrap();
    assert!(matches_pattern(&cell, "toy/*/relative_key/*"));
    assert!(!matches_pattern(&cell, "toy/en/relative_key"));
    assert_eq!(select_cells(&c, Some("toy/fr/*/0")).unwrap().len(), 11);
    assert_eq!(select_cells(&c, Some("*/*/sinusoidal/*, */*/absolute+mono/*")).unwrap().len(), 8);
    assert!(select_cells(&c, Some("wiki/*/*/*")).is_err());
}

#[test]
fn failing_cells_are_isolated() {
    let cells = enumerate_cells(&cfg());
    let calls = AtomicUsize::new(0);
    let out = run_cells(&cells, 3, |c| {
        calls.fetch_add(1, Ordering::SeqCst);
        if c.kind == PosEncKind::TupeRelative {
            anyhow::bail!("boom");
        }
        Ok(c.seed)
    });
    assert_eq!(calls.load(Ordering::SeqCst), cells.len());
    for (o, c) in out.iter().zip(&cells) {
        assert_eq!(&o.cell, c);
        assert_eq!(o.result.is_err(), c.kind == PosEncKind::TupeRelative);
    }
}

#[test]
fn aggregate_uses_population_std() {
    assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
    // population variance of {1, 2, 6}: (4 + 1 + 9) / 3
    assert!((population_std(&[1.0, 2.0, 6.0]) - (14.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert_eq!(population_std(&[5.0]), 0.0);
    assert!(mean(&[]).is_nan());

    let row = |seed, ml: Option<f64>| ResultRow {
        corpus: "toy".into(),
        language: "en".into(),
        encoding: "absolute".into(),
        seed,
        status: if ml.is_some() { "ok" } else { "absent" }.into(),
        ppl_full: ml.map(|_| 10.0),
        ppl_l1: ml.map(|_| 12.0),
        retr_low: None,
        retr_high: None,
        trans_low: None,
        trans_high: None,
        ml_score: ml,
        config_hash: String::new(),
    };
    let agg = aggregate(&[row(0, Some(40.0)), row(42, Some(50.0)), row(100, None)]);
    assert_eq!(agg.len(), 1);
    assert_eq!(agg[0].seeds, 2);
    assert_eq!(agg[0].ml_score_mean, 45.0);
    assert_eq!(agg[0].ml_score_std, 5.0);
    assert_eq!(agg[0].ppl_full_std, 0.0);
}

#[test]
fn config_hash_ignores_output_dir_only() {
    let a = ExperimentConfig::desk("/a");
    let b = ExperimentConfig::desk("/b");
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.training_hash(), b.training_hash());
    let mut c = a.clone();
    c.analysis.procrustes_runs = 10;
    assert_ne!(a.hash(), c.hash());
    assert_eq!(a.training_hash(), c.training_hash());
    c.train.epochs = 3;
    assert_ne!(a.training_hash(), c.training_hash());
}

#[test]
fn shipped_config_matches_desk_defaults() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json");
    let shipped = ExperimentConfig::load(&path).unwrap();
    assert_eq!(shipped, ExperimentConfig::desk(shipped.output_dir.clone()));
}
