//! Grid cells and a small worker pool that runs them in isolation.

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use anyhow::{anyhow, bail, Result};
use serde::Serialize;

use polypos_core::encoder::AblationFlags;
use polypos_core::posenc::PosEncKind;

use crate::config::ExperimentConfig;

/// What is trained in a cell besides the encoding kind.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Variant {
    Plain,
    /// One of the named Absolute ablation settings.
    Ablation(String),
    /// Trained on the first half of every pair only.
    Monolingual,
}

/// One model of the experiment grid: `(corpus, language, encoding, seed)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Cell {
    pub corpus: String,
    pub language: String,
    pub kind: PosEncKind,
    pub variant: Variant,
    pub seed: u64,
}

impl Cell {
    /// Encoding column as it appears in ids and CSVs, e.g. `absolute+mono`.
    pub fn encoding(&self) -> String {
        match &self.variant {
            Variant::Plain => self.kind.slug().to_string(),
            Variant::Ablation(name) => format!("{}+{name}", self.kind.slug()),
            Variant::Monolingual => format!("{}+mono", self.kind.slug()),
        }
    }

    pub fn ablation(&self) -> AblationFlags {
        match &self.variant {
            Variant::Ablation(name) => AblationFlags::settings()
                .into_iter()
                .find(|(n, _)| n == name)
                .map(|(_, f)| f)
                .unwrap_or_default(),
            _ => AblationFlags::default(),
        }
    }

    /// File-system friendly form of the id.
    pub fn dir_name(&self) -> String {
        self.to_string().replace('/', "__")
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.corpus, self.language, self.encoding(), self.seed)
    }
}

impl FromStr for Cell {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        let [corpus, language, encoding, seed] = parts[..] else {
            bail!("cell id {s:?} is not corpus/language/encoding/seed");
        };
        let (kind, variant) = match encoding.split_once('+') {
            None => (encoding, Variant::Plain),
            Some((k, "mono")) => (k, Variant::Monolingual),
            Some((k, ab)) => {
                if !AblationFlags::settings().iter().any(|(n, _)| *n == ab) {
                    bail!("unknown ablation {ab:?}");
                }
                (k, Variant::Ablation(ab.to_string()))
            }
        };
        Ok(Cell {
            corpus: corpus.to_string(),
            language: language.to_string(),
            kind: PosEncKind::from_slug(kind).ok_or_else(|| anyhow!("unknown encoding {kind:?}"))?,
            variant,
            seed: seed.parse()?,
        })
    }
}

/// Every cell the configuration describes, in a stable order.
pub fn enumerate_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for lang in &cfg.languages {
        for &seed in &cfg.seeds {
            let cell = |kind, variant| Cell {
                corpus: cfg.corpus.name.clone(),
                language: lang.tag.clone(),
                kind,
                variant,
                seed,
            };
            for &kind in &cfg.kinds {
                cells.push(cell(kind, Variant::Plain));
            }
            if cfg.ablations {
                for (name, flags) in AblationFlags::settings() {
                    if flags.any() {
                        cells.push(cell(PosEncKind::Absolute, Variant::Ablation(name.to_string())));
                    }
                }
            }
            if cfg.monolingual_control {
                cells.push(cell(PosEncKind::Absolute, Variant::Monolingual));
            }
        }
    }
    cells
}

/// `*` in a pattern component matches anything.
pub fn matches_pattern(cell: &Cell, pattern: &str) -> bool {
    let id = cell.to_string();
    let have: Vec<&str> = id.split('/').collect();
    let want: Vec<&str> = pattern.split('/').collect();
    want.len() == have.len() && want.iter().zip(&have).all(|(w, h)| *w == "*" || w == h)
}

/// Cells selected by a comma-separated list of patterns (all when `None`).
pub fn select_cells(cfg: &ExperimentConfig, filter: Option<&str>) -> Result<Vec<Cell>> {
    let all = enumerate_cells(cfg);
    let Some(filter) = filter else { return Ok(all) };
    let patterns: Vec<&str> = filter.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    let chosen: Vec<Cell> = all.into_iter().filter(|c| patterns.iter().any(|p| matches_pattern(c, p))).collect();
    if chosen.is_empty() {
        bail!("no grid cell matches {filter:?}");
    }
    Ok(chosen)
}

/// Outcome of one cell.
#[derive(Debug)]
pub struct CellOutcome<T> {
    pub cell: Cell,
    pub result: Result<T>,
}

/// Runs `job` on every cell with at most `workers` threads. A failing cell
/// does not stop the others; outcomes come back in input order.
pub fn run_cells<T, F>(cells: &[Cell], workers: usize, job: F) -> Vec<CellOutcome<T>>
where
    T: Send,
    F: Fn(&Cell) -> Result<T> + Sync,
{
    let next = Mutex::new(0usize);
    let slots: Vec<Mutex<Option<Result<T>>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.max(1).min(cells.len().max(1)) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("queue lock");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(cell) = cells.get(i) else { break };
                let r = job(cell);
                if let Err(e) = &r {
                    log::error!("cell {cell} failed: {e:#}");
                }
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    cells
        .iter()
        .zip(slots)
        .map(|(cell, slot)| CellOutcome {
            cell: cell.clone(),
            result: slot.into_inner().expect("slot lock").unwrap_or_else(|| Err(anyhow!("cell never ran"))),
        })
        .collect()
}
