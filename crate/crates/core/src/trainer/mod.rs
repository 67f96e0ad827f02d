//! Masked-LM training: BERT-style masking, Adam, sequence packing and
//! seeded pseudo-perplexity.

mod adam;
mod masking;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use masking::{mask_batch, MaskedBatch};

use crate::corpus::{PairedCorpus, CLS, SEP};
use crate::encoder::EncoderModel;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Packed sequences per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub mask_ratio: f64,
    /// Shares of selected tokens turned into `[MASK]`, a random id, or kept.
    pub mask_split: [f64; 3],
    /// Pack consecutive same-language sentences up to the model's `max_seq_len`.
    pub pack: bool,
    /// Train on the first half of every pair only.
    #[serde(default)]
    pub monolingual: bool,
    /// Seed of the fixed validation masking pass.
    pub val_seed: u64,
    /// Sentences per batch when computing pseudo-perplexity.
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            mask_ratio: 0.15,
            mask_split: [0.8, 0.1, 0.1],
            pack: false,
            monolingual: false,
            val_seed: 12345,
            eval_batch: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(invalid(format!("mask_ratio {} must lie in (0, 1)", self.mask_ratio)));
        }
        if self.mask_split.iter().any(|&x| x < 0.0) || (self.mask_split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("mask_split must be non-negative and sum to 1"));
        }
        if self.batch_size == 0 || self.eval_batch == 0 {
            return Err(invalid("batch sizes must be positive"));
        }
        if self.learning_rate <= 0.0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("invalid optimizer settings"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ppl_full: f64,
    pub val_ppl_l1: f64,
    pub wall_seconds: f64,
}

pub const LOG_HEADER: &str = "epoch,train_loss,val_ppl_full,val_ppl_L1,wall_seconds";

pub fn write_log_csv<W: Write>(mut w: W, log: &[EpochLog]) -> Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for e in log {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.3}",
            e.epoch, e.train_loss, e.val_ppl_full, e.val_ppl_l1, e.wall_seconds
        )?;
    }
    Ok(())
}

/// Which half of a paired corpus to score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Half {
    Full,
    L1,
}

/// `[CLS] s [SEP]`, truncated to `max_len`.
pub fn frame_sentence(s: &[u32], max_len: usize) -> Vec<u32> {
    let body = max_len.saturating_sub(2).min(s.len());
    let mut v = Vec::with_capacity(body + 2);
    v.push(CLS);
    v.extend_from_slice(&s[..body]);
    v.push(SEP);
    v
}

/// Greedily packs sentences into `[CLS] s1 [SEP] s2 [SEP] …` of at most
/// `max_len` tokens; over-long sentences are truncated.
pub fn pack_sentences<'a>(sentences: impl IntoIterator<Item = &'a [u32]>, max_len: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur: Vec<u32> = Vec::new();
    for s in sentences {
        let s = &s[..s.len().min(max_len.saturating_sub(2))];
        if !cur.is_empty() && cur.len() + s.len() + 1 > max_len {
            out.push(std::mem::take(&mut cur));
        }
        if cur.is_empty() {
            cur.push(CLS);
        }
        cur.extend_from_slice(s);
        cur.push(SEP);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Stream for epoch `epoch` of run `seed`; independent of earlier epochs.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

fn epoch_sequences(corpus: &PairedCorpus, cfg: &TrainConfig, max_len: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u32>> {
    let halves: Vec<Vec<&[u32]>> = if cfg.monolingual {
        vec![corpus.pairs.iter().map(|(a, _)| a.as_slice()).collect()]
    } else {
        vec![
            corpus.pairs.iter().map(|(a, _)| a.as_slice()).collect(),
            corpus.pairs.iter().map(|(_, b)| b.as_slice()).collect(),
        ]
    };
    let mut seqs = Vec::new();
    for mut half in halves {
        half.shuffle(rng);
        if cfg.pack {
            seqs.extend(pack_sentences(half, max_len));
        } else {
            seqs.extend(half.into_iter().map(|s| frame_sentence(s, max_len)));
        }
    }
    seqs.shuffle(rng);
    seqs
}

/// Runs epochs `start_epoch+1 ..= cfg.epochs`, calling `hook` after each with
/// the epoch record and current state (for checkpointing).
pub fn train_from(
    model: &mut EncoderModel,
    opt: &mut Adam,
    start_epoch: usize,
    corpus: &PairedCorpus,
    val: &PairedCorpus,
    cfg: &TrainConfig,
    seed: u64,
    hook: &mut dyn FnMut(&EpochLog, &EncoderModel, &Adam) -> Result<()>,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyInput("training corpus"));
    }
    let max_len = model.config.max_seq_len;
    let mut log = Vec::new();
    for epoch in start_epoch + 1..=cfg.epochs {
        let start = Instant::now();
        let mut rng = epoch_rng(seed, epoch);
        let seqs = epoch_sequences(corpus, cfg, max_len, &mut rng);
        let (mut total, mut steps) = (0.0, 0usize);
        for chunk in seqs.chunks(cfg.batch_size) {
            let batch = match mask_batch(chunk, &mut rng, cfg, model.config.vocab_size) {
                Ok(b) => b,
                Err(Error::NoMaskedPositions) => continue,
                Err(e) => return Err(e),
            };
            let (loss, grads) = model.loss_and_gradients(&batch.inputs, &batch.targets, Some(&mut rng))?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            opt.step(model, &grads)?;
            total += loss;
            steps += 1;
        }
        if steps == 0 {
            return Err(Error::NoMaskedPositions);
        }
        let (val_ppl_full, val_ppl_l1) = if val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                pseudo_perplexity(model, val, Half::Full, cfg.val_seed, cfg)?,
                pseudo_perplexity(model, val, Half::L1, cfg.val_seed, cfg)?,
            )
        };
        let entry = EpochLog {
            epoch,
            train_loss: total / steps as f64,
            val_ppl_full,
            val_ppl_l1,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} ppl {:.2}/{:.2} ({:.1}s)",
            entry.train_loss,
            entry.val_ppl_full,
            entry.val_ppl_l1,
            entry.wall_seconds
        );
        hook(&entry, model, opt)?;
        log.push(entry);
    }
    Ok(log)
}

/// Trains from scratch for `cfg.epochs` epochs.
pub fn train(
    model: &mut EncoderModel,
    corpus: &PairedCorpus,
    val: &PairedCorpus,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<EpochLog>> {
    let mut opt = Adam::new(model, cfg);
    train_from(model, &mut opt, 0, corpus, val, cfg, seed, &mut |_, _, _| Ok(()))
}

/// `exp` of the mean masked-token cross-entropy over one masking pass seeded
/// with `seed`, on single framed sentences.
pub fn pseudo_perplexity(model: &EncoderModel, corpus: &PairedCorpus, half: Half, seed: u64, cfg: &TrainConfig) -> Result<f64> {
    let max_len = model.config.max_seq_len;
    let mut sents: Vec<Vec<u32>> = corpus.pairs.iter().map(|(a, _)| frame_sentence(a, max_len)).collect();
    if half == Half::Full {
        sents.extend(corpus.pairs.iter().map(|(_, b)| frame_sentence(b, max_len)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut total, mut count) = (0.0, 0usize);
    for chunk in sents.chunks(cfg.eval_batch) {
        let batch = match mask_batch(chunk, &mut rng, cfg, model.config.vocab_size) {
            Ok(b) => b,
            Err(Error::NoMaskedPositions) => continue,
            Err(e) => return Err(e),
        };
        let loss = model.loss(&batch.inputs, &batch.targets)?;
        total += loss * batch.targets.len() as f64;
        count += batch.targets.len();
    }
    if count == 0 {
        return Err(Error::NoMaskedPositions);
    }
    Ok((total / count as f64).exp())
}

/// Saves model and optimizer state so training can resume at `epoch`.
pub fn save_training_state(dir: &Path, model: &EncoderModel, opt: &Adam, seed: u64, log: &[EpochLog]) -> Result<()> {
    let epoch = log.last().map_or(0, |e| e.epoch);
    let mut meta = crate::encoder::CheckpointMeta {
        seed,
        epoch,
        ..Default::default()
    };
    meta.metrics.insert("log".into(), serde_json::to_value(log)?);
    model.save(dir, &meta)?;
    opt.save(&dir.join("optim.ppar"))
}

/// Inverse of [`save_training_state`]: model, optimizer, seed and log so far.
pub fn load_training_state(dir: &Path, cfg: &TrainConfig) -> Result<(EncoderModel, Adam, u64, Vec<EpochLog>)> {
    let (model, meta) = EncoderModel::load(dir)?;
    let opt = Adam::load_with(&dir.join("optim.ppar"), &model, cfg)?;
    let log = match meta.metrics.get("log") {
        Some(v) => serde_json::from_value(v.clone())?,
        None => Vec::new(),
    };
    Ok((model, opt, meta.seed, log))
}
