use rand::Rng;

use super::TrainConfig;
use crate::corpus::{is_special, MASK, NUM_SPECIAL};
use crate::encoder::MaskedTarget;
use crate::error::{invalid, Error, Result};

/// Corrupted inputs plus the original ids at the selected positions.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedBatch {
    pub inputs: Vec<Vec<u32>>,
    /// Rows index the padded `batch × max_len` layout used by the encoder.
    pub targets: Vec<MaskedTarget>,
}

impl MaskedBatch {
    /// Per-row labels (`None` where nothing is predicted) for the padded layout.
    pub fn labels(&self) -> Vec<Option<u32>> {
        let len = self.inputs.iter().map(Vec::len).max().unwrap_or(0);
        let mut out = vec![None; self.inputs.len() * len];
        for t in &self.targets {
            out[t.row] = Some(t.id);
        }
        out
    }
}

/// BERT-style corruption: every non-special token is selected with
/// probability `mask_ratio`; selected tokens become `[MASK]`, a random
/// non-special id, or stay unchanged according to `mask_split`. An empty
/// selection is re-rolled once before failing.
pub fn mask_batch<R: Rng + ?Sized>(
    seqs: &[Vec<u32>],
    rng: &mut R,
    cfg: &TrainConfig,
    vocab_size: usize,
) -> Result<MaskedBatch> {
    if vocab_size <= NUM_SPECIAL as usize {
        return Err(invalid("vocabulary has no ordinary tokens"));
    }
    let len = seqs.iter().map(Vec::len).max().unwrap_or(0);
    for _attempt in 0..2 {
        let mut inputs = seqs.to_vec();
        let mut targets = Vec::new();
        for (b, seq) in inputs.iter_mut().enumerate() {
            for (i, tok) in seq.iter_mut().enumerate() {
                if is_special(*tok) || !rng.random_bool(cfg.mask_ratio) {
                    continue;
                }
                targets.push(MaskedTarget { row: b * len + i, id: *tok });
                let u: f64 = rng.random();
                if u < cfg.mask_split[0] {
                    *tok = MASK;
                } else if u < cfg.mask_split[0] + cfg.mask_split[1] {
                    *tok = rng.random_range(NUM_SPECIAL..vocab_size as u32);
                }
            }
        }
        if !targets.is_empty() {
            return Ok(MaskedBatch { inputs, targets });
        }
    }
    Err(Error::NoMaskedPositions)
}
