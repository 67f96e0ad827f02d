use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{is_projective, is_special, reorder_sentence, sentence_rng, BpeModel, DepSentence, OrderModel};
use super::{NUM_SPECIAL, SPECIAL_TOKENS};
use crate::error::{Error, Result};

/// How the second half of each pair is produced.
#[derive(Clone, Copy, Debug)]
pub enum PairMode<'a> {
    Copy,
    Reorder(&'a OrderModel),
}

/// Sentence pairs over a joint vocabulary: English ids in `[5, 5+V)` and the
/// shifted copy in `[5+V, 5+2V)`, sharing the special ids `0..5`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedCorpus {
    pub pairs: Vec<(Vec<u32>, Vec<u32>)>,
    pub vocab_size: usize,
    pub language: String,
}

impl PairedCorpus {
    /// Full model vocabulary: specials plus both languages.
    pub fn total_vocab(&self) -> usize {
        NUM_SPECIAL as usize + 2 * self.vocab_size
    }

    pub fn shift(&self, id: u32) -> u32 {
        if is_special(id) {
            id
        } else {
            id + self.vocab_size as u32
        }
    }

    /// Maps an id of either language back to its English id.
    pub fn unshift(&self, id: u32) -> u32 {
        if id >= NUM_SPECIAL + self.vocab_size as u32 {
            id - self.vocab_size as u32
        } else {
            id
        }
    }

    pub fn is_l2(&self, id: u32) -> bool {
        id >= NUM_SPECIAL + self.vocab_size as u32
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Writes `<stem>.l1`, `<stem>.l2` (space-separated ids, one sentence per
    /// line) and `<stem>.json` (the manifest) into `dir`.
    pub fn write(&self, dir: &Path, stem: &str, manifest: &PairedManifest) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (half, ext) in [(0, "l1"), (1, "l2")] {
            let mut f = std::io::BufWriter::new(fs::File::create(dir.join(format!("{stem}.{ext}")))?);
            for p in &self.pairs {
                let ids = if half == 0 { &p.0 } else { &p.1 };
                let line: Vec<String> = ids.iter().map(u32::to_string).collect();
                writeln!(f, "{}", line.join(" "))?;
            }
            f.flush()?;
        }
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(manifest)?)?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<(Self, PairedManifest)> {
        let manifest: PairedManifest = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let read_ids = |ext: &str| -> Result<Vec<Vec<u32>>> {
            let f = BufReader::new(fs::File::open(dir.join(format!("{stem}.{ext}")))?);
            f.lines()
                .map(|l| {
                    l?.split_whitespace()
                        .map(|t| t.parse::<u32>().map_err(|_| Error::Format(format!("bad id {t:?}"))))
                        .collect()
                })
                .collect()
        };
        let (l1, l2) = (read_ids("l1")?, read_ids("l2")?);
        if l1.len() != l2.len() {
            return Err(Error::Format(format!("{} L1 lines but {} L2 lines", l1.len(), l2.len())));
        }
        let corpus = PairedCorpus {
            pairs: l1.into_iter().zip(l2).collect(),
            vocab_size: manifest.vocab_size,
            language: manifest.language.clone(),
        };
        Ok((corpus, manifest))
    }
}

/// JSON companion of the id files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedManifest {
    pub language: String,
    pub vocab_size: usize,
    pub pairs: usize,
    pub merges_path: String,
    pub special_tokens: Vec<String>,
    pub mode: String,
    pub seed: u64,
    /// Where the dependency trees (and, for reordering, the order statistics)
    /// came from.
    pub source: String,
    pub order_source: Option<String>,
}

impl PairedManifest {
    pub fn describe(corpus: &PairedCorpus, merges_path: &str, mode: &PairMode<'_>, seed: u64, source: &str) -> Self {
        Self {
            language: corpus.language.clone(),
            vocab_size: corpus.vocab_size,
            pairs: corpus.len(),
            merges_path: merges_path.to_string(),
            special_tokens: SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect(),
            mode: match mode {
                PairMode::Copy => "copy".into(),
                PairMode::Reorder(_) => "reorder".into(),
            },
            seed,
            source: source.to_string(),
            order_source: None,
        }
    }
}

/// Encodes each projective sentence as L1 and its (optionally reordered)
/// shifted copy as L2. Non-projective sentences are skipped with a warning.
pub fn build_paired_corpus(
    sentences: &[DepSentence],
    bpe: &BpeModel,
    mode: PairMode<'_>,
    seed: u64,
    language: &str,
) -> Result<PairedCorpus> {
    let v = bpe.vocab_size() as u32;
    let mut pairs = Vec::with_capacity(sentences.len());
    for (i, s) in sentences.iter().enumerate() {
        if !is_projective(s) {
            log::warn!("skipping non-projective sentence {i}");
            continue;
        }
        let l1 = bpe.encode(&s.text());
        let source = match mode {
            PairMode::Copy => l1.clone(),
            PairMode::Reorder(m) => bpe.encode(&reorder_sentence(s, m, &mut sentence_rng(seed, i))?.text()),
        };
        let l2 = source.into_iter().map(|id| if is_special(id) { id } else { id + v }).collect();
        pairs.push((l1, l2));
    }
    Ok(PairedCorpus {
        pairs,
        vocab_size: v as usize,
        language: language.to_string(),
    })
}
