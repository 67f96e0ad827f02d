use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use polypos_core::multieval::{evaluate, round_half_up, EvalReport, EvalSettings};

use crate::config::ExperimentConfig;
use crate::grid::{enumerate_cells, Cell};
use crate::prepare::{load_split, Layout};
use crate::stats::{mean, population_std};
use crate::train::load_cell_model;

/// Evaluates one finished cell on the held-out split and stores the report.
pub fn eval_cell(cfg: &ExperimentConfig, cell: &Cell) -> Result<EvalReport> {
    let model = load_cell_model(cfg, cell)?;
    let corpus = load_split(cfg, &cell.language, "eval")?;
    let settings = EvalSettings {
        layers: cfg.eval.layers,
        batch: cfg.eval.batch,
        ppl_seed: cfg.eval.ppl_seed,
    };
    let mut meta = BTreeMap::new();
    meta.insert("model".to_string(), cell.encoding());
    meta.insert("seed".to_string(), cell.seed.to_string());
    meta.insert("language".to_string(), cell.language.clone());
    meta.insert("corpus".to_string(), cell.corpus.clone());
    meta.insert("config_hash".to_string(), cfg.hash());
    meta.insert("split".to_string(), "eval".to_string());
    let report = evaluate(&model, &corpus, &settings, &cfg.train, meta)?;
    let path = Layout::new(cfg).eval_path(cell);
    fs::create_dir_all(path.parent().expect("eval dir"))?;
    report.write_json(fs::File::create(&path)?)?;
    Ok(report)
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// One row of `results.csv`; metric fields are empty for absent cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub corpus: String,
    pub language: String,
    pub encoding: String,
    pub seed: u64,
    pub status: String,
    pub ppl_full: Option<f64>,
    #[serde(rename = "ppl_L1")]
    pub ppl_l1: Option<f64>,
    pub retr_low: Option<f64>,
    pub retr_high: Option<f64>,
    pub trans_low: Option<f64>,
    pub trans_high: Option<f64>,
    pub ml_score: Option<f64>,
    pub config_hash: String,
}

impl ResultRow {
    fn absent(cell: &Cell, hash: &str) -> Self {
        Self {
            corpus: cell.corpus.clone(),
            language: cell.language.clone(),
            encoding: cell.encoding(),
            seed: cell.seed,
            status: "absent".into(),
            ppl_full: None,
            ppl_l1: None,
            retr_low: None,
            retr_high: None,
            trans_low: None,
            trans_high: None,
            ml_score: None,
            config_hash: hash.into(),
        }
    }

    fn from_report(cell: &Cell, r: &EvalReport, layers: [usize; 2]) -> Self {
        let [lo, hi] = layers;
        Self {
            status: "ok".into(),
            ppl_full: Some(r.ppl_full),
            ppl_l1: Some(r.ppl_l1),
            retr_low: r.retrieval_acc.get(&lo).copied(),
            retr_high: r.retrieval_acc.get(&hi).copied(),
            trans_low: r.translation_acc.get(&lo).copied(),
            trans_high: r.translation_acc.get(&hi).copied(),
            ml_score: Some(round_half_up(r.ml_score, 2)),
            config_hash: r.metadata.get("config_hash").cloned().unwrap_or_default(),
            ..Self::absent(cell, "")
        }
    }
}

/// Rows for every configured cell, in grid order.
pub fn collect_results(cfg: &ExperimentConfig) -> Vec<ResultRow> {
    let layout = Layout::new(cfg);
    let hash = cfg.hash();
    enumerate_cells(cfg)
        .iter()
        .map(|cell| match read_report(&layout.eval_path(cell)) {
            Ok(r) if r.metadata.get("config_hash") == Some(&hash) => ResultRow::from_report(cell, &r, cfg.eval.layers),
            _ => ResultRow::absent(cell, &hash),
        })
        .collect()
}

/// Mean and population standard deviation over seeds of one encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub corpus: String,
    pub language: String,
    pub encoding: String,
    pub seeds: usize,
    pub ppl_full_mean: f64,
    pub ppl_full_std: f64,
    #[serde(rename = "ppl_L1_mean")]
    pub ppl_l1_mean: f64,
    #[serde(rename = "ppl_L1_std")]
    pub ppl_l1_std: f64,
    pub ml_score_mean: f64,
    pub ml_score_std: f64,
}

pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == "ok") {
        groups
            .entry((r.corpus.clone(), r.language.clone(), r.encoding.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((corpus, language, encoding), rs)| {
            let col = |f: fn(&ResultRow) -> Option<f64>| -> Vec<f64> { rs.iter().filter_map(|r| f(r)).collect() };
            let (pf, pl, ml) = (col(|r| r.ppl_full), col(|r| r.ppl_l1), col(|r| r.ml_score));
            AggregateRow {
                corpus,
                language,
                encoding,
                seeds: rs.len(),
                ppl_full_mean: mean(&pf),
                ppl_full_std: population_std(&pf),
                ppl_l1_mean: mean(&pl),
                ppl_l1_std: population_std(&pl),
                ml_score_mean: mean(&ml),
                ml_score_std: population_std(&ml),
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv` and `aggregate.csv` from whatever reports exist.
pub fn write_tables(cfg: &ExperimentConfig) -> Result<(Vec<ResultRow>, Vec<AggregateRow>)> {
    let rows = collect_results(cfg);
    let agg = aggregate(&rows);
    write_csv(&cfg.output_dir.join("results.csv"), &rows)?;
    write_csv(&cfg.output_dir.join("aggregate.csv"), &agg)?;
    Ok((rows, agg))
}
