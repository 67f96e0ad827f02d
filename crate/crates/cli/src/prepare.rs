use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use polypos_core::corpus::toy::{generate_treebank, WordOrder};
use polypos_core::corpus::{
    build_paired_corpus, collect_order_stats, ingest_conllu, is_projective, learn_bpe, BpeModel, DepSentence, OrderModel,
    PairMode, PairedCorpus, PairedManifest,
};

use crate::config::{CorpusSource, ExperimentConfig, LanguageConfig};

pub const SPLITS: [&str; 3] = ["train", "val", "eval"];

/// Paths inside the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            root: cfg.output_dir.clone(),
        }
    }

    pub fn corpus_dir(&self, corpus: &str) -> PathBuf {
        self.root.join("corpus").join(corpus)
    }

    pub fn bpe_path(&self, corpus: &str) -> PathBuf {
        self.corpus_dir(corpus).join("bpe.json")
    }

    pub fn language_dir(&self, corpus: &str, language: &str) -> PathBuf {
        self.corpus_dir(corpus).join(language)
    }

    pub fn model_dir(&self, cell: &crate::grid::Cell) -> PathBuf {
        self.root.join("models").join(cell.dir_name())
    }

    pub fn eval_path(&self, cell: &crate::grid::Cell) -> PathBuf {
        self.root.join("eval").join(format!("{}.json", cell.dir_name()))
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.root.join("analysis")
    }
}

/// Sentence counts kept by the projectivity filter, per language and split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub config_hash: String,
    pub bpe_vocab: usize,
    /// `(language, split, input sentences, pairs kept)`.
    pub retention: Vec<(String, String, usize, usize)>,
}

fn read_treebank(path: &Path) -> Result<Vec<DepSentence>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let ing = ingest_conllu(BufReader::new(f))?;
    if !ing.rejected.is_empty() {
        log::warn!("{}: {} malformed sentences skipped", path.display(), ing.rejected.len());
    }
    Ok(ing.sentences)
}

fn base_sentences(cfg: &ExperimentConfig) -> Result<Vec<DepSentence>> {
    let c = &cfg.corpus;
    let needed = c.train_pairs + c.val_pairs + c.eval_pairs;
    match &c.source {
        CorpusSource::Toy { seed } => Ok(generate_treebank(needed, *seed, &WordOrder::preset("en").expect("en preset"))),
        CorpusSource::Conllu { path } => {
            let mut s = read_treebank(path)?;
            if s.len() < needed {
                log::warn!("{} holds {} sentences, fewer than the {needed} requested", path.display(), s.len());
            }
            s.truncate(needed);
            Ok(s)
        }
    }
}

fn order_model(lang: &LanguageConfig, cfg: &ExperimentConfig) -> Result<Option<(OrderModel, String)>> {
    if lang.tag == "en" && lang.superstrate.is_none() {
        return Ok(None);
    }
    let (treebank, source) = match &lang.superstrate {
        Some(p) => (read_treebank(p)?, p.display().to_string()),
        None => {
            let Some(order) = WordOrder::preset(&lang.tag) else {
                bail!("no superstrate treebank and no synthetic word-order preset for {:?}", lang.tag);
            };
            let seed = cfg.corpus.pair_seed + 1000;
            (generate_treebank(2000, seed, &order), format!("toy grammar, preset {}, seed {seed}", lang.tag))
        }
    };
    Ok(Some((collect_order_stats(&treebank)?, source)))
}

/// Builds BPE and the per-language train/val/eval paired corpora.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PrepareSummary> {
    cfg.validate()?;
    let layout = Layout::new(cfg);
    let c = &cfg.corpus;
    let sentences = base_sentences(cfg)?;
    let bounds = [0, c.train_pairs, c.train_pairs + c.val_pairs, c.train_pairs + c.val_pairs + c.eval_pairs];
    let split = |i: usize| &sentences[bounds[i].min(sentences.len())..bounds[i + 1].min(sentences.len())];

    let train_text: Vec<String> = split(0).iter().map(DepSentence::text).collect();
    let bpe = learn_bpe(&train_text.join("\n"), c.bpe_vocab)?;
    fs::create_dir_all(layout.corpus_dir(&c.name))?;
    fs::write(layout.bpe_path(&c.name), serde_json::to_string_pretty(&bpe)?)?;
    let source = match &c.source {
        CorpusSource::Toy { seed } => format!("toy grammar, seed {seed}"),
        CorpusSource::Conllu { path } => path.display().to_string(),
    };

    let mut summary = PrepareSummary {
        config_hash: cfg.hash(),
        bpe_vocab: bpe.vocab_size(),
        retention: Vec::new(),
    };
    for lang in &cfg.languages {
        let om = order_model(lang, cfg)?;
        let dir = layout.language_dir(&c.name, &lang.tag);
        for (i, name) in SPLITS.iter().enumerate() {
            let part = split(i);
            let mode = match &om {
                Some((m, _)) => PairMode::Reorder(m),
                None => PairMode::Copy,
            };
            let kept = part.iter().filter(|s| is_projective(s)).count();
            let corpus = build_paired_corpus(part, &bpe, mode.clone(), c.pair_seed, &lang.tag)?;
            log::info!("{}/{name}: kept {kept} of {} sentences", lang.tag, part.len());
            let mut manifest = PairedManifest::describe(&corpus, "../bpe.json", &mode, c.pair_seed, &source);
            manifest.order_source = om.as_ref().map(|(_, s)| s.clone());
            corpus.write(&dir, name, &manifest)?;
            summary.retention.push((lang.tag.clone(), name.to_string(), part.len(), corpus.len()));
        }
    }
    fs::write(
        layout.corpus_dir(&c.name).join("prepare.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

pub fn load_bpe(cfg: &ExperimentConfig) -> Result<BpeModel> {
    let p = Layout::new(cfg).bpe_path(&cfg.corpus.name);
    let text = fs::read_to_string(&p).with_context(|| format!("{} missing; run prepare first", p.display()))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_split(cfg: &ExperimentConfig, language: &str, split: &str) -> Result<PairedCorpus> {
    let dir = Layout::new(cfg).language_dir(&cfg.corpus.name, language);
    let (corpus, _) = PairedCorpus::read(&dir, split)
        .with_context(|| format!("{split} split of {language} missing in {}; run prepare first", dir.display()))?;
    Ok(corpus)
}
