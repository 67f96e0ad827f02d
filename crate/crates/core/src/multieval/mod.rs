//! Multilingual evaluation: sentence retrieval and word translation between
//! the two halves of a paired corpus, and their average (the ML score).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_special, PairedCorpus};
use crate::encoder::EncoderModel;
use crate::error::{invalid, Error, Result};
use crate::numerics::Matrix;
use crate::trainer::{frame_sentence, pseudo_perplexity, Half, TrainConfig};

/// Mean hidden state at `layer` over the non-special tokens of one sentence
/// (given without `[CLS]`/`[SEP]`).
pub fn sentence_repr(model: &EncoderModel, sentence: &[u32], layer: usize) -> Result<Vec<f64>> {
    let framed = frame_sentence(sentence, model.config.max_seq_len);
    let (_, h) = model.hidden_states(&[framed.clone()], layer)?;
    mean_over_tokens(&h, &framed, 0).ok_or(Error::EmptyInput("sentence without ordinary tokens"))
}

fn mean_over_tokens(h: &Matrix, ids: &[u32], first_row: usize) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; h.cols()];
    let mut n = 0;
    for (i, &id) in ids.iter().enumerate() {
        if is_special(id) {
            continue;
        }
        for (a, x) in acc.iter_mut().zip(h.row(first_row + i)) {
            *a += x;
        }
        n += 1;
    }
    (n > 0).then(|| acc.into_iter().map(|x| x / n as f64).collect())
}

/// Cosine similarity, with `−∞` whenever either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return f64::NEG_INFINITY;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Index of the most similar candidate; the lowest index wins ties.
pub fn nearest(query: &[f64], candidates: &[Vec<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, c) in candidates.iter().enumerate() {
        let s = cosine(query, c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best.map(|(j, _)| j)
}

/// Percentage of queries whose nearest candidate is `gold(i)`, averaged
/// over both directions (`left → right` uses `gold`, the reverse its inverse).
fn bidirectional_accuracy(left: &[Vec<f64>], right: &[Vec<f64>], gold: &[usize]) -> f64 {
    let mut inverse = vec![usize::MAX; right.len()];
    for (i, &g) in gold.iter().enumerate() {
        inverse[g] = i;
    }
    let hits = |q: &[Vec<f64>], c: &[Vec<f64>], g: &[usize]| {
        q.iter().enumerate().filter(|(i, v)| nearest(v, c) == Some(g[*i])).count() as f64 / q.len() as f64
    };
    50.0 * (hits(left, right, gold) + hits(right, left, &inverse))
}

/// Sentence retrieval between aligned representation lists (row `i` of each
/// side is a pair), as a percentage averaged over both directions.
pub fn retrieval_accuracy_from(l1: &[Vec<f64>], l2: &[Vec<f64>]) -> Result<f64> {
    if l1.len() != l2.len() || l1.len() < 2 {
        return Err(invalid("retrieval needs two equally long lists of at least two sentences"));
    }
    let gold: Vec<usize> = (0..l1.len()).collect();
    Ok(bidirectional_accuracy(l1, l2, &gold))
}

/// Word translation between type representations: `l1[(id, v)]` must find
/// `l2[id + V]`. Types without a counterpart are excluded; the accuracy and
/// the number of excluded types are returned.
pub fn translation_accuracy_from(
    l1: &BTreeMap<u32, Vec<f64>>,
    l2: &BTreeMap<u32, Vec<f64>>,
    shift: u32,
) -> Result<(f64, usize)> {
    let left: Vec<(u32, &Vec<f64>)> = l1.iter().filter(|(id, _)| l2.contains_key(&(**id + shift))).map(|(k, v)| (*k, v)).collect();
    let excluded = l1.len() - left.len() + l2.keys().filter(|id| id.checked_sub(shift).is_none_or(|k| !l1.contains_key(&k))).count();
    if left.len() < 2 {
        return Err(Error::EmptyInput("translation needs at least two shared types"));
    }
    let right_ids: Vec<u32> = l2.keys().copied().collect();
    let right: Vec<Vec<f64>> = l2.values().cloned().collect();
    let position: BTreeMap<u32, usize> = right_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let queries: Vec<Vec<f64>> = left.iter().map(|(_, v)| (*v).clone()).collect();
    let gold: Vec<usize> = left.iter().map(|(id, _)| position[&(id + shift)]).collect();

    // L1 → L2 over all L2 types; L2 → L1 for the L2 types that have a gold partner
    let fwd = queries.iter().zip(&gold).filter(|(q, g)| nearest(q, &right) == Some(**g)).count() as f64;
    let back = gold.iter().enumerate().filter(|(i, g)| nearest(&right[**g], &queries) == Some(*i)).count() as f64;
    let n = gold.len() as f64;
    Ok((50.0 * (fwd / n + back / n), excluded))
}

/// Per-layer representations of a paired corpus from one batched pass.
#[derive(Clone, Debug)]
pub struct Representations {
    /// `sentences[layer]` = (L1 sentence vectors, L2 sentence vectors).
    pub sentences: BTreeMap<usize, (Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    /// `types[layer]` = (L1 type means, L2 type means) keyed by token id.
    pub types: BTreeMap<usize, (BTreeMap<u32, Vec<f64>>, BTreeMap<u32, Vec<f64>>)>,
}

/// Sentence means and occurrence-weighted type means at `layers`.
pub fn collect_representations(
    model: &EncoderModel,
    corpus: &PairedCorpus,
    layers: &[usize],
    batch: usize,
) -> Result<Representations> {
    let max_layer = *layers.iter().max().ok_or(Error::EmptyInput("layers"))?;
    let d = model.config.d_model;
    let mut sentences: BTreeMap<usize, (Vec<Vec<f64>>, Vec<Vec<f64>>)> = BTreeMap::new();
    let mut sums: BTreeMap<usize, [BTreeMap<u32, (Vec<f64>, usize)>; 2]> = BTreeMap::new();
    for side in 0..2 {
        let framed: Vec<Vec<u32>> = corpus
            .pairs
            .iter()
            .map(|(a, b)| frame_sentence(if side == 0 { a } else { b }, model.config.max_seq_len))
            .collect();
        for chunk in framed.chunks(batch.max(1)) {
            let len = chunk.iter().map(Vec::len).max().unwrap_or(0);
            let out = layered_hidden(model, chunk, max_layer)?;
            for &layer in layers {
                let h = &out[layer];
                let entry = sentences.entry(layer).or_default();
                let sums = &mut sums.entry(layer).or_default()[side];
                for (k, ids) in chunk.iter().enumerate() {
                    let v = mean_over_tokens(h, ids, k * len)
                        .ok_or(Error::EmptyInput("sentence without ordinary tokens"))?;
                    if side == 0 { &mut entry.0 } else { &mut entry.1 }.push(v);
                    for (i, &id) in ids.iter().enumerate() {
                        if is_special(id) {
                            continue;
                        }
                        let slot = sums.entry(id).or_insert_with(|| (vec![0.0; d], 0));
                        for (a, x) in slot.0.iter_mut().zip(h.row(k * len + i)) {
                            *a += x;
                        }
                        slot.1 += 1;
                    }
                }
            }
        }
    }
    let types = sums
        .into_iter()
        .map(|(layer, [a, b])| {
            let mean = |m: BTreeMap<u32, (Vec<f64>, usize)>| {
                m.into_iter()
                    .map(|(id, (s, n))| (id, s.into_iter().map(|x| x / n as f64).collect()))
                    .collect::<BTreeMap<_, _>>()
            };
            (layer, (mean(a), mean(b)))
        })
        .collect();
    Ok(Representations { sentences, types })
}

fn layered_hidden(model: &EncoderModel, seqs: &[Vec<u32>], upto: usize) -> Result<Vec<Matrix>> {
    use crate::encoder::{forward_on_tape, Batch, ModelVars};
    use crate::numerics::Tape;
    let batch = Batch::new(seqs)?;
    let mut tape = Tape::new();
    let vars = ModelVars::record(&mut tape, model, false);
    let trace = forward_on_tape(&mut tape, model, &vars, &batch, upto, None)?;
    trace.hidden.iter().map(|&h| tape.value(h).cloned()).collect()
}

/// Retrieval accuracy (%) at `layer` over all pairs of `corpus`.
pub fn retrieval_accuracy(model: &EncoderModel, corpus: &PairedCorpus, layer: usize) -> Result<f64> {
    let r = collect_representations(model, corpus, &[layer], 32)?;
    let (a, b) = &r.sentences[&layer];
    retrieval_accuracy_from(a, b)
}

/// Translation accuracy (%) at `layer` over the subword types of `corpus`.
pub fn translation_accuracy(model: &EncoderModel, corpus: &PairedCorpus, layer: usize) -> Result<f64> {
    let r = collect_representations(model, corpus, &[layer], 32)?;
    let (a, b) = &r.types[&layer];
    Ok(translation_accuracy_from(a, b, corpus.vocab_size as u32)?.0)
}

/// Arithmetic mean of the four accuracies.
pub fn ml_score(retrieval_low: f64, retrieval_high: f64, translation_low: f64, translation_high: f64) -> f64 {
    (retrieval_low + retrieval_high + translation_low + translation_high) / 4.0
}

/// Rounds half away from zero at `decimals` places, using the exact decimal
/// expansion of `x` (so a binary value just below a tie rounds down).
pub fn round_half_up(x: f64, decimals: usize) -> f64 {
    if !x.is_finite() {
        return x;
    }
    // every finite f64 has a terminating expansion of at most 1074 digits
    let exact = format!("{:.1100}", x.abs());
    let (int, frac) = exact.split_once('.').expect("fixed-point formatting");
    let keep = format!("{int}{}", &frac[..decimals]);
    let mut digits: Vec<u8> = keep.bytes().map(|b| b - b'0').collect();
    if frac.as_bytes()[decimals] >= b'5' {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let s: String = digits.iter().map(|d| (d + b'0') as char).collect();
    let (i, f) = s.split_at(s.len() - decimals);
    let v: f64 = format!("{i}.{f}").parse().expect("digits");
    if x < 0.0 {
        -v
    } else {
        v
    }
}

/// One evaluated model, mirroring the columns of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ppl_full: f64,
    pub ppl_l1: f64,
    /// Accuracy (%) keyed by layer.
    pub retrieval_acc: BTreeMap<usize, f64>,
    pub translation_acc: BTreeMap<usize, f64>,
    pub ml_score: f64,
    pub metadata: BTreeMap<String, String>,
}

pub const REPORT_HEADER: &str = "model,seed,language,ppl_full,ppl_L1,retr_low,retr_high,trans_low,trans_high,ml_score";

impl EvalReport {
    pub fn csv_row(&self) -> String {
        let get = |k: &str| self.metadata.get(k).cloned().unwrap_or_default();
        let accs: Vec<String> = [&self.retrieval_acc, &self.translation_acc]
            .iter()
            .flat_map(|m| m.values().map(|v| format!("{v:.2}")))
            .collect();
        format!(
            "{},{},{},{:.2},{:.2},{},{:.2}",
            get("model"),
            get("seed"),
            get("language"),
            self.ppl_full,
            self.ppl_l1,
            accs.join(","),
            round_half_up(self.ml_score, 2)
        )
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Settings for [`evaluate`].
#[derive(Clone, Debug)]
pub struct EvalSettings {
    /// The two layers scored; the first is usually 0.
    pub layers: [usize; 2],
    pub batch: usize,
    pub ppl_seed: u64,
}

/// Perplexities, retrieval and translation at both layers, and the ML score.
pub fn evaluate(
    model: &EncoderModel,
    corpus: &PairedCorpus,
    settings: &EvalSettings,
    train_cfg: &TrainConfig,
    mut metadata: BTreeMap<String, String>,
) -> Result<EvalReport> {
    let [lo, hi] = settings.layers;
    if lo >= hi || hi > model.config.layers {
        return Err(invalid(format!("layers {lo} and {hi} do not fit a {}-layer model", model.config.layers)));
    }
    let reps = collect_representations(model, corpus, &settings.layers, settings.batch)?;
    let mut retrieval = BTreeMap::new();
    let mut translation = BTreeMap::new();
    for layer in settings.layers {
        let (a, b) = &reps.sentences[&layer];
        retrieval.insert(layer, retrieval_accuracy_from(a, b)?);
        let (ta, tb) = &reps.types[&layer];
        let (acc, excluded) = translation_accuracy_from(ta, tb, corpus.vocab_size as u32)?;
        translation.insert(layer, acc);
        metadata.insert("translation_excluded_types".into(), excluded.to_string());
    }
    let duplicates = corpus.len() - corpus.pairs.iter().map(|(a, _)| a).collect::<std::collections::BTreeSet<_>>().len();
    if duplicates > 0 {
        log::warn!("{duplicates} duplicate sentences; retrieval cannot reach 100%");
    }
    metadata.insert("duplicate_sentences".into(), duplicates.to_string());
    metadata.insert("pooling".into(), "mean over non-special tokens".into());
    metadata.insert("directions".into(), "average of L1->L2 and L2->L1".into());
    metadata.insert("ties".into(), "lowest index".into());
    metadata.insert("similarity".into(), "cosine".into());
    metadata.insert(
        "layer0".into(),
        "token_scale*E[tok] plus any additive position vector; no embedding layer norm".into(),
    );
    metadata.insert("layers".into(), format!("{lo},{hi}"));
    let ml = ml_score(retrieval[&lo], retrieval[&hi], translation[&lo], translation[&hi]);
    Ok(EvalReport {
        ppl_full: pseudo_perplexity(model, corpus, Half::Full, settings.ppl_seed, train_cfg)?,
        ppl_l1: pseudo_perplexity(model, corpus, Half::L1, settings.ppl_seed, train_cfg)?,
        retrieval_acc: retrieval,
        translation_acc: translation,
        ml_score: ml,
        metadata,
    })
}

#[cfg(test)]
mod tests;
