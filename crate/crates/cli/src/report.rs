use std::fmt::Write as _;
use std::fs;

use anyhow::Result;

use crate::analyze::{BandingRow, ProcrustesComparison};
use crate::config::ExperimentConfig;
use crate::evaluate::write_tables;
use crate::prepare::Layout;

fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Option<T> {
    serde_json::from_str(&fs::read_to_string(path).ok()?).ok()
}

/// Joins evaluation and analysis outputs into `summary.md`.
pub fn report(cfg: &ExperimentConfig) -> Result<String> {
    let (rows, agg) = write_tables(cfg)?;
    let out = Layout::new(cfg).analysis_dir();
    let mut s = String::new();
    writeln!(s, "# Results ({})\n", cfg.hash())?;
    let absent = rows.iter().filter(|r| r.status != "ok").count();
    writeln!(s, "{} of {} cells evaluated.\n", rows.len() - absent, rows.len())?;
    writeln!(s, "| corpus | language | encoding | seeds | ppl full | ppl L1 | ML score |")?;
    writeln!(s, "|---|---|---|---|---|---|---|")?;
    for a in &agg {
        writeln!(
            s,
            "| {} | {} | {} | {} | {:.2} ± {:.2} | {:.2} ± {:.2} | {:.2} ± {:.2} |",
            a.corpus,
            a.language,
            a.encoding,
            a.seeds,
            a.ppl_full_mean,
            a.ppl_full_std,
            a.ppl_l1_mean,
            a.ppl_l1_std,
            a.ml_score_mean,
            a.ml_score_std
        )?;
    }
    if let Some(cmp) = read_json::<Vec<ProcrustesComparison>>(&out.join("procrustes_wilcoxon.json")) {
        writeln!(s, "\n## Procrustes\n")?;
        for c in cmp {
            writeln!(
                s,
                "- {}: median loss {} {:.4e} vs {} {:.4e}, Wilcoxon p = {:.3e} (n = {})",
                c.language, c.first, c.first_median, c.second, c.second_median, c.wilcoxon.p_value, c.wilcoxon.n
            )?;
        }
    }
    if let Ok(mut r) = csv::Reader::from_path(out.join("banding.csv")) {
        writeln!(s, "\n## Word-position banding\n")?;
        for row in r.deserialize::<BandingRow>() {
            let row = row?;
            writeln!(s, "- {}: {:.4e} (position as query {:.4e})", row.cell, row.banding_word_query, row.banding_position_query)?;
        }
    }
    fs::write(cfg.output_dir.join("summary.md"), &s)?;
    Ok(s)
}
