use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use polypos_core::encoder::{AblationFlags, EncoderConfig};
use polypos_core::posenc::{PosEncKind, PosEncSpec};
use polypos_core::trainer::TrainConfig;

/// Where sentences come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CorpusSource {
    /// The built-in synthetic English grammar.
    Toy { seed: u64 },
    /// A CoNLL-U treebank of the base language.
    Conllu { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    #[serde(flatten)]
    pub source: CorpusSource,
    /// Short tag used in cell ids, e.g. `toy`.
    pub name: String,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub eval_pairs: usize,
    pub bpe_vocab: usize,
    /// Seed for pair construction (reordering).
    pub pair_seed: u64,
}

/// How the second half of each pair is derived from the first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageConfig {
    /// `en` keeps the original order; any other tag reorders sentences.
    pub tag: String,
    /// CoNLL-U superstrate treebank; without it a synthetic treebank with the
    /// word-order preset named by `tag` is generated.
    #[serde(default)]
    pub superstrate: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOverrides {
    pub layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    /// Rows of learnt/fixed position tables.
    pub max_positions: usize,
    /// Clip distance of the relative kinds.
    pub relative_clip: usize,
    pub tupe_buckets: usize,
    pub dropout: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Layers whose retrieval/translation enter the ML score.
    pub layers: [usize; 2],
    pub batch: usize,
    pub ppl_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub procrustes_runs: usize,
    pub max_offset: usize,
    /// Rows of each position table analysed.
    pub table_rows: usize,
    pub correlation_positions: usize,
    pub correlation_words: usize,
    pub export_dims: Vec<usize>,
    pub export_positions: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub languages: Vec<LanguageConfig>,
    pub kinds: Vec<PosEncKind>,
    pub seeds: Vec<u64>,
    pub model: ModelOverrides,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub analysis: AnalysisConfig,
    /// Adds the four Absolute attention-term ablations per language and seed.
    #[serde(default)]
    pub ablations: bool,
    /// Adds a monolingual Absolute control per language and seed.
    #[serde(default)]
    pub monolingual_control: bool,
    /// Epochs between resumable checkpoints.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

fn default_checkpoint_every() -> usize {
    1
}

impl ExperimentConfig {
    /// Desk scale: 2000 toy pairs, d = 32, 6 layers, 30 epochs, 2 seeds.
    pub fn desk(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            output_dir: output_dir.into(),
            corpus: CorpusConfig {
                source: CorpusSource::Toy { seed: 0 },
                name: "toy".into(),
                train_pairs: 2000,
                val_pairs: 100,
                eval_pairs: 500,
                bpe_vocab: 1024,
                pair_seed: 0,
            },
            languages: vec![LanguageConfig {
                tag: "en".into(),
                superstrate: None,
            }],
            kinds: PosEncKind::ALL.to_vec(),
            seeds: vec![0, 42],
            model: ModelOverrides {
                layers: 6,
                d_model: 32,
                d_ff: 128,
                max_seq_len: 128,
                max_positions: 128,
                relative_clip: 16,
                tupe_buckets: 32,
                dropout: 0.1,
            },
            // single sentences keep both languages on the same positions;
            // small batches buy enough optimizer steps in 30 epochs
            train: TrainConfig {
                epochs: 30,
                batch_size: 16,
                learning_rate: 2e-3,
                pack: false,
                ..TrainConfig::default()
            },
            eval: EvalConfig {
                layers: [0, 4],
                batch: 32,
                ppl_seed: 7,
            },
            analysis: AnalysisConfig {
                procrustes_runs: 125,
                max_offset: 32,
                table_rows: 128,
                correlation_positions: 64,
                correlation_words: 200,
                export_dims: vec![0, 4, 8, 16],
                export_positions: 32,
                seed: 0,
            },
            ablations: false,
            monolingual_control: false,
            checkpoint_every: 1,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() || self.seeds.is_empty() || self.languages.is_empty() {
            bail!("the grid is empty: kinds, seeds and languages must be non-empty");
        }
        if let CorpusSource::Conllu { path } = &self.corpus.source {
            if !path.exists() {
                bail!("corpus treebank {} does not exist", path.display());
            }
        }
        for l in &self.languages {
            if let Some(p) = &l.superstrate {
                if !p.exists() {
                    bail!("superstrate treebank {} does not exist", p.display());
                }
            }
        }
        self.train.validate()?;
        for kind in &self.kinds {
            self.encoder_config(*kind, 10, AblationFlags::default())?.validate()?;
        }
        let [lo, hi] = self.eval.layers;
        if lo >= hi || hi > self.model.layers {
            bail!("evaluation layers {lo},{hi} do not fit {} layers", self.model.layers);
        }
        if self.checkpoint_every == 0 {
            bail!("checkpoint_every must be positive");
        }
        Ok(())
    }

    /// Encoder configuration of one cell.
    pub fn encoder_config(&self, kind: PosEncKind, vocab_size: usize, ablation: AblationFlags) -> Result<EncoderConfig> {
        let m = &self.model;
        let mut posenc = PosEncSpec::new(kind, m.d_model);
        posenc.max_positions = if kind.is_relative() { m.relative_clip } else { m.max_positions };
        posenc.num_buckets = m.tupe_buckets;
        Ok(EncoderConfig {
            layers: m.layers,
            heads: 1,
            d_model: m.d_model,
            d_ff: m.d_ff,
            vocab_size,
            max_seq_len: m.max_seq_len,
            posenc,
            ablation,
            dropout: m.dropout,
            layer_norm_eps: 1e-12,
        })
    }

    /// Short hex digest of the canonical JSON form, excluding the output
    /// directory.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("output_dir");
        short_digest(&v)
    }

    /// Digest of the settings a trained model depends on; analysis and
    /// evaluation settings may change without invalidating checkpoints.
    pub fn training_hash(&self) -> String {
        short_digest(&serde_json::json!({
            "corpus": self.corpus,
            "languages": self.languages,
            "model": self.model,
            "train": self.train,
        }))
    }
}

fn short_digest(v: &serde_json::Value) -> String {
    let digest = Sha256::digest(v.to_string().as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}
