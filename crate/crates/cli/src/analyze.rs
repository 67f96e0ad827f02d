use std::collections::{BTreeMap, HashMap};
use std::fs;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use polypos_core::analysis::{
    banding_statistic, export_encoding_dims, median, position_table, procrustes_curve, wilcoxon_signed_rank,
    word_position_correlation, write_points_csv, WilcoxonResult,
};
use polypos_core::corpus::{is_special, PairedCorpus};
use polypos_core::posenc::PosEncKind;

use crate::config::ExperimentConfig;
use crate::evaluate::{collect_results, write_csv};
use crate::grid::{enumerate_cells, Cell, Variant};
use crate::prepare::{load_split, Layout};
use crate::train::{is_done, load_cell_model};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcrustesRow {
    pub cell: String,
    pub encoding: String,
    pub seed: u64,
    pub offset: usize,
    pub mean_loss: f64,
}

/// Paired comparison of two encodings' per-offset losses (averaged over seeds).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcrustesComparison {
    pub language: String,
    pub first: String,
    pub second: String,
    pub offsets: Vec<usize>,
    pub first_losses: Vec<f64>,
    pub second_losses: Vec<f64>,
    pub first_median: f64,
    pub second_median: f64,
    pub wilcoxon: WilcoxonResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandingRow {
    pub cell: String,
    pub encoding: String,
    pub seed: u64,
    pub words: usize,
    pub positions: usize,
    pub banding_word_query: f64,
    pub banding_position_query: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub procrustes: Vec<ProcrustesRow>,
    pub comparisons: Vec<ProcrustesComparison>,
    pub banding: Vec<BandingRow>,
}

/// The `n` most frequent first-language token ids (ties by smaller id).
pub fn frequent_words(corpus: &PairedCorpus, n: usize) -> Vec<u32> {
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for (a, _) in &corpus.pairs {
        for &t in a.iter().filter(|&&t| !is_special(t)) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut v: Vec<(u32, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(n).map(|(t, _)| t).collect()
}

fn has_table(kind: PosEncKind) -> bool {
    matches!(
        kind,
        PosEncKind::Sinusoidal | PosEncKind::Absolute | PosEncKind::TupeAbsolute | PosEncKind::TupeRelative
    )
}

/// Per-offset Procrustes losses of every finished plain cell with an absolute table.
pub fn procrustes_rows(cfg: &ExperimentConfig, cells: &[Cell]) -> Result<Vec<ProcrustesRow>> {
    let a = &cfg.analysis;
    let mut rows = Vec::new();
    for cell in cells {
        if cell.variant != Variant::Plain || !has_table(cell.kind) || !is_done(cfg, cell) {
            continue;
        }
        let model = load_cell_model(cfg, cell)?;
        let table = position_table(&model, a.table_rows)?;
        for r in procrustes_curve(&table, 1..=a.max_offset, a.procrustes_runs, a.seed)? {
            rows.push(ProcrustesRow {
                cell: cell.to_string(),
                encoding: cell.encoding(),
                seed: cell.seed,
                offset: r.offset,
                mean_loss: r.mean_loss,
            });
        }
    }
    Ok(rows)
}

/// Wilcoxon signed-rank test over offsets of `first` against `second`, after
/// averaging each offset's loss over the seeds present for both.
pub fn compare_encodings(
    rows: &[ProcrustesRow],
    language: &str,
    first: PosEncKind,
    second: PosEncKind,
) -> Result<Option<ProcrustesComparison>> {
    let curve = |kind: PosEncKind| {
        let mut by_offset: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.encoding == kind.slug() && r.cell.split('/').nth(1) == Some(language)) {
            by_offset.entry(r.offset).or_default().push(r.mean_loss);
        }
        by_offset
            .into_iter()
            .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
            .collect::<BTreeMap<usize, f64>>()
    };
    let (a, b) = (curve(first), curve(second));
    let offsets: Vec<usize> = a.keys().filter(|k| b.contains_key(k)).copied().collect();
    if offsets.is_empty() {
        return Ok(None);
    }
    let xa: Vec<f64> = offsets.iter().map(|k| a[k]).collect();
    let xb: Vec<f64> = offsets.iter().map(|k| b[k]).collect();
    Ok(Some(ProcrustesComparison {
        language: language.to_string(),
        first: first.slug().into(),
        second: second.slug().into(),
        first_median: median(&xa).unwrap_or(f64::NAN),
        second_median: median(&xb).unwrap_or(f64::NAN),
        wilcoxon: wilcoxon_signed_rank(&xa, &xb)?,
        offsets,
        first_losses: xa,
        second_losses: xb,
    }))
}

/// Banding statistics of the first-layer word × position terms for
/// Absolute/Sinusoidal cells, including monolingual controls.
pub fn banding_rows(cfg: &ExperimentConfig, cells: &[Cell], dump_dir: Option<&std::path::Path>) -> Result<Vec<BandingRow>> {
    let a = &cfg.analysis;
    let mut words_by_lang: HashMap<String, Vec<u32>> = HashMap::new();
    let mut rows = Vec::new();
    for cell in cells {
        let eligible = matches!(cell.kind, PosEncKind::Absolute | PosEncKind::Sinusoidal)
            && matches!(cell.variant, Variant::Plain | Variant::Monolingual);
        if !eligible || !is_done(cfg, cell) {
            continue;
        }
        let words = match words_by_lang.get(&cell.language) {
            Some(w) => w.clone(),
            None => {
                let w = frequent_words(&load_split(cfg, &cell.language, "train")?, a.correlation_words);
                words_by_lang.insert(cell.language.clone(), w.clone());
                w
            }
        };
        let model = load_cell_model(cfg, cell)?;
        let corr = word_position_correlation(&model, a.correlation_positions, &words)?;
        if let Some(dir) = dump_dir {
            fs::create_dir_all(dir)?;
            let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", cell.dir_name())))?;
            w.write_record(["word", "position", "word_query", "position_query"])?;
            for (i, word) in words.iter().enumerate() {
                for t in 0..a.correlation_positions {
                    w.write_record([
                        word.to_string(),
                        t.to_string(),
                        corr.word_query.get(i, t).to_string(),
                        corr.position_query.get(i, t).to_string(),
                    ])?;
                }
            }
            w.flush()?;
        }
        rows.push(BandingRow {
            cell: cell.to_string(),
            encoding: cell.encoding(),
            seed: cell.seed,
            words: words.len(),
            positions: a.correlation_positions,
            banding_word_query: banding_statistic(&corr.word_query),
            banding_position_query: banding_statistic(&corr.position_query),
        });
    }
    Ok(rows)
}

/// Runs every analysis on the finished cells and writes the figure data
/// under `analysis/`.
pub fn analyze(cfg: &ExperimentConfig) -> Result<AnalysisSummary> {
    let cells = enumerate_cells(cfg);
    let out = Layout::new(cfg).analysis_dir();
    fs::create_dir_all(&out)?;

    // encoding dimensions against position
    let dims_dir = out.join("encoding_dims");
    fs::create_dir_all(&dims_dir)?;
    let span = cfg.analysis.export_positions as i64;
    for cell in cells.iter().filter(|c| c.variant == Variant::Plain && is_done(cfg, c)) {
        let model = load_cell_model(cfg, cell)?;
        let range = if cell.kind.is_relative() { -span..span + 1 } else { 0..span };
        let points = export_encoding_dims(&model, &cfg.analysis.export_dims, range)?;
        write_points_csv(fs::File::create(dims_dir.join(format!("{}.csv", cell.dir_name())))?, &points)?;
    }

    let procrustes = procrustes_rows(cfg, &cells)?;
    write_csv(&out.join("procrustes.csv"), &procrustes)?;
    let mut comparisons = Vec::new();
    for lang in &cfg.languages {
        if let Some(c) = compare_encodings(&procrustes, &lang.tag, PosEncKind::Absolute, PosEncKind::TupeAbsolute)? {
            comparisons.push(c);
        }
    }
    fs::write(out.join("procrustes_wilcoxon.json"), serde_json::to_string_pretty(&comparisons)?)?;

    let banding = banding_rows(cfg, &cells, Some(&out.join("correlations")))?;
    write_csv(&out.join("banding.csv"), &banding)?;

    // ablation scores come straight from the evaluation table
    let ablations: Vec<_> = collect_results(cfg)
        .into_iter()
        .filter(|r| r.encoding == "absolute" || r.encoding.starts_with("absolute+"))
        .collect();
    write_csv(&out.join("ablations.csv"), &ablations)?;

    Ok(AnalysisSummary {
        procrustes,
        comparisons,
        banding,
    })
}
