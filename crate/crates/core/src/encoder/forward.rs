use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::EncoderModel;
use crate::corpus::PAD;
use crate::error::{invalid, Error, Result};
use crate::numerics::{Matrix, Tape, Var};
use crate::posenc::{relative_index_table, sinusoidal_table, tupe_bias, PosEncKind, PosVars};

/// Padded batch of id sequences, stored row-major (`batch × len`).
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    ids: Vec<u32>,
    batch: usize,
    len: usize,
}

impl Batch {
    /// Right-pads every sequence with `[PAD]` to the longest one.
    pub fn new(seqs: &[Vec<u32>]) -> Result<Self> {
        let len = seqs.iter().map(Vec::len).max().ok_or(Error::EmptyInput("batch"))?;
        if len == 0 {
            return Err(Error::EmptyInput("batch sequences"));
        }
        let mut ids = Vec::with_capacity(seqs.len() * len);
        for s in seqs {
            ids.extend_from_slice(s);
            ids.extend(std::iter::repeat_n(PAD, len - s.len()));
        }
        Ok(Self {
            ids,
            batch: seqs.len(),
            len,
        })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn seq_len(&self) -> usize {
        self.len
    }

    /// Flat row index of token `pos` in sequence `b`.
    pub fn row(&self, b: usize, pos: usize) -> usize {
        b * self.len + pos
    }

    /// `(batch·len) × len` key mask: 1 where the key is not padding.
    fn key_mask(&self) -> Matrix {
        let mut m = Matrix::zeros(self.batch * self.len, self.len);
        for b in 0..self.batch {
            let keys = &self.ids[b * self.len..(b + 1) * self.len];
            for i in 0..self.len {
                for (j, &id) in keys.iter().enumerate() {
                    if id != PAD {
                        m.set(b * self.len + i, j, 1.0);
                    }
                }
            }
        }
        m
    }
}

/// Tape handles for every model parameter.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub tok_emb: Var,
    pub out_bias: Var,
    pub layers: Vec<[Var; 16]>,
    pub pos: PosVars,
}

impl ModelVars {
    /// Records the model on `tape`, as leaves when `trainable` is set.
    pub fn record(tape: &mut Tape, model: &EncoderModel, trainable: bool) -> Self {
        let put = |m: &Matrix, tape: &mut Tape| if trainable { tape.leaf(m.clone()) } else { tape.constant(m.clone()) };
        let tok_emb = put(&model.tok_emb, tape);
        let out_bias = put(&model.out_bias, tape);
        let layers = model
            .named_parameters()
            .iter()
            .filter(|(n, _)| n.starts_with("layer."))
            .map(|(_, m)| put(m, tape))
            .collect::<Vec<_>>()
            .chunks(16)
            .map(|c| c.try_into().expect("16 fields per layer"))
            .collect();
        let pos = model.pos.record(tape, trainable);
        Self {
            tok_emb,
            out_bias,
            layers,
            pos,
        }
    }

    /// Handles in the order of [`EncoderModel::parameters_mut`].
    pub fn all(&self) -> Vec<Var> {
        let mut v = vec![self.tok_emb, self.out_bias];
        for l in &self.layers {
            v.extend_from_slice(l);
        }
        v.extend(self.pos.present());
        v
    }
}

/// Recorded activations of one forward pass.
pub struct Trace {
    /// Layer 0 is the embedding-stage output; layer `ℓ` the output of block `ℓ`.
    pub hidden: Vec<Var>,
    /// Pre-softmax attention logits of every evaluated block.
    pub scores: Vec<Var>,
}

struct Dropout<'a> {
    rate: f64,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl Dropout<'_> {
    fn mask(&mut self, n: usize) -> Option<Vec<f64>> {
        let rng = self.rng.as_mut()?;
        if self.rate == 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.rate);
        Some((0..n).map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep }).collect())
    }

    fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        let n = tape.value(x)?.data().len();
        match self.mask(n) {
            Some(m) => tape.dropout(x, m),
            None => Ok(x),
        }
    }
}

fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

/// Runs blocks `1..=upto` and records everything on `tape`. Dropout is active
/// only when `rng` is given.
pub fn forward_on_tape(
    tape: &mut Tape,
    model: &EncoderModel,
    vars: &ModelVars,
    batch: &Batch,
    upto: usize,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Trace> {
    let cfg = &model.config;
    let spec = &cfg.posenc;
    let (bsz, len) = (batch.batch, batch.len);
    if len > cfg.max_seq_len {
        return Err(Error::SequenceTooLong {
            len,
            max: cfg.max_seq_len,
        });
    }
    if upto > cfg.layers {
        return Err(invalid(format!("layer {upto} requested from a {}-layer model", cfg.layers)));
    }
    if let Some(&bad) = batch.ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(invalid(format!("token id {bad} outside vocabulary of {}", cfg.vocab_size)));
    }
    let mut drop = Dropout { rate: cfg.dropout, rng };

    // embedding stage
    let ids: Vec<usize> = batch.ids.iter().map(|&i| i as usize).collect();
    let mut w = tape.gather_rows(vars.tok_emb, ids)?;
    if spec.token_scale() != 1.0 {
        w = tape.scale(w, spec.token_scale())?;
    }
    let positions: Vec<usize> = (0..bsz).flat_map(|_| 0..len).collect();
    let p = match spec.kind {
        PosEncKind::Sinusoidal => {
            let table = tape.constant(sinusoidal_table(len, cfg.d_model)?);
            Some(tape.gather_rows(table, positions)?)
        }
        PosEncKind::Absolute => {
            let table = vars.pos.table.ok_or_else(|| invalid("absolute model lacks a position table"))?;
            Some(tape.gather_rows(table, positions)?)
        }
        _ => None,
    };
    let x0 = match p {
        Some(p) => tape.add(w, p)?,
        None => w,
    };
    let decompose = spec.kind == PosEncKind::Absolute && cfg.ablation.any();
    let (mut x, parts) = match drop.mask(bsz * len * cfg.d_model) {
        Some(keep) if decompose => {
            let wd = tape.dropout(w, keep.clone())?;
            let pd = tape.dropout(p.expect("absolute has positions"), keep)?;
            (tape.add(wd, pd)?, Some((wd, pd)))
        }
        Some(keep) => (tape.dropout(x0, keep)?, None),
        None => (x0, decompose.then(|| (w, p.expect("absolute has positions")))),
    };

    let mask = batch.key_mask();
    let scale = spec.attention_scale();
    let tupe = if spec.kind.is_tupe() {
        let b = tupe_bias(tape, spec, &vars.pos, len)?;
        Some(tape.tile_rows(b, bsz)?)
    } else {
        None
    };
    let rel_index = spec.kind.is_relative().then(|| relative_index_table(len, spec.max_positions));

    let mut trace = Trace {
        hidden: vec![x0],
        scores: Vec::new(),
    };
    for (l, lv) in vars.layers.iter().enumerate().take(upto) {
        let [wq, bq, wk, bk, wv, bv, wo, bo, g1, c1, w1, b1, w2, b2, g2, c2] = *lv;
        let raw = match parts {
            Some((wpart, ppart)) if l == 0 => {
                let ab = cfg.ablation;
                let (uq, uk) = if ab.untie_word_position_params {
                    (
                        vars.pos.u_query.ok_or_else(|| invalid("untied model lacks U^Q"))?,
                        vars.pos.u_key.ok_or_else(|| invalid("untied model lacks U^K"))?,
                    )
                } else {
                    (wq, wk)
                };
                let qw = affine(tape, wpart, wq, bq)?;
                let kw = affine(tape, wpart, wk, bk)?;
                let qp = tape.matmul(ppart, uq)?;
                let kp = tape.matmul(ppart, uk)?;
                let mut s = tape.block_scores(qw, kw, len)?;
                for (keep, q, k) in [
                    (!ab.drop_position_word, qw, kp),
                    (!ab.drop_word_position, qp, kw),
                    (!ab.drop_position_position, qp, kp),
                ] {
                    if keep {
                        let t = tape.block_scores(q, k, len)?;
                        s = tape.add(s, t)?;
                    }
                }
                s
            }
            _ => {
                let q = affine(tape, x, wq, bq)?;
                let k = affine(tape, x, wk, bk)?;
                let mut s = tape.block_scores(q, k, len)?;
                if let Some(idx) = &rel_index {
                    let table = vars.pos.offsets.ok_or_else(|| invalid("relative model lacks offsets"))?;
                    let rq = tape.rel_query(q, table, len, idx.clone())?;
                    s = tape.add(s, rq)?;
                    if spec.kind == PosEncKind::RelativeKeyQuery {
                        let rk = tape.rel_key(k, table, len, idx.clone())?;
                        s = tape.add(s, rk)?;
                    }
                }
                s
            }
        };
        let mut scores = tape.scale(raw, scale)?;
        if let Some(b) = tupe {
            scores = tape.add(scores, b)?;
        }
        trace.scores.push(scores);
        let v = affine(tape, x, wv, bv)?;
        let probs = tape.softmax(scores, &mask)?;
        let probs = drop.apply(tape, probs)?;
        let ctx = tape.block_apply(probs, v, len)?;
        let attn = affine(tape, ctx, wo, bo)?;
        let attn = drop.apply(tape, attn)?;
        let res = tape.add(x, attn)?;
        x = tape.layer_norm(res, g1, c1, cfg.layer_norm_eps)?;
        let h = affine(tape, x, w1, b1)?;
        let h = tape.gelu(h)?;
        let f = affine(tape, h, w2, b2)?;
        let f = drop.apply(tape, f)?;
        let res = tape.add(x, f)?;
        x = tape.layer_norm(res, g2, c2, cfg.layer_norm_eps)?;
        trace.hidden.push(x);
    }
    Ok(trace)
}

/// Tied-embedding MLM logits for the selected flat rows of `hidden`.
pub fn mlm_logits_on_tape(tape: &mut Tape, vars: &ModelVars, hidden: Var, rows: Vec<usize>) -> Result<Var> {
    let h = tape.gather_rows(hidden, rows)?;
    let logits = tape.matmul_t(h, vars.tok_emb)?;
    tape.add_row(logits, vars.out_bias)
}

/// Evaluation-mode outputs for a batch.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub batch: Batch,
    /// `layers + 1` matrices of shape `(batch·len) × d`.
    pub hidden: Vec<Matrix>,
    /// `(batch·len) × vocab`.
    pub logits: Matrix,
}

/// Masked-token target: flat row in the batch and the original id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskedTarget {
    pub row: usize,
    pub id: u32,
}

impl EncoderModel {
    /// Full forward pass without dropout.
    pub fn forward(&self, seqs: &[Vec<u32>]) -> Result<ForwardOutput> {
        let batch = Batch::new(seqs)?;
        let mut tape = Tape::new();
        let vars = ModelVars::record(&mut tape, self, false);
        let trace = forward_on_tape(&mut tape, self, &vars, &batch, self.config.layers, None)?;
        let last = *trace.hidden.last().expect("layer 0 present");
        let rows = (0..batch.batch * batch.len).collect();
        let logits = mlm_logits_on_tape(&mut tape, &vars, last, rows)?;
        let hidden = trace
            .hidden
            .iter()
            .map(|&h| tape.value(h).cloned())
            .collect::<Result<Vec<_>>>()?;
        Ok(ForwardOutput {
            logits: tape.value(logits)?.clone(),
            hidden,
            batch,
        })
    }

    /// Hidden states of one layer (`(batch·len) × d`), evaluating only the
    /// blocks needed.
    pub fn hidden_states(&self, seqs: &[Vec<u32>], layer: usize) -> Result<(Batch, Matrix)> {
        let batch = Batch::new(seqs)?;
        let mut tape = Tape::new();
        let vars = ModelVars::record(&mut tape, self, false);
        let trace = forward_on_tape(&mut tape, self, &vars, &batch, layer, None)?;
        let h = tape.value(trace.hidden[layer])?.clone();
        Ok((batch, h))
    }

    /// Pre-softmax attention logits of block `layer` (1-based), stacked per
    /// sequence: `(batch·len) × len`.
    pub fn attention_logits(&self, seqs: &[Vec<u32>], layer: usize) -> Result<Matrix> {
        if layer == 0 {
            return Err(invalid("attention layers are numbered from 1"));
        }
        let batch = Batch::new(seqs)?;
        let mut tape = Tape::new();
        let vars = ModelVars::record(&mut tape, self, false);
        let trace = forward_on_tape(&mut tape, self, &vars, &batch, layer, None)?;
        Ok(tape.value(trace.scores[layer - 1])?.clone())
    }

    /// The four scaled first-layer terms of the Absolute kind for a batch:
    /// `[ww, wp, pw, pp]` with `wp = (wW^Q + b_Q)(pW^K)ᵀ`, `pw = (pW^Q)(wW^K + b_K)ᵀ`
    /// and `ww` carrying both biases. Honors `untie_word_position_params`.
    pub fn absolute_terms(&self, seqs: &[Vec<u32>]) -> Result<[Matrix; 4]> {
        if self.config.posenc.kind != PosEncKind::Absolute {
            return Err(invalid("term decomposition needs the absolute kind"));
        }
        let batch = Batch::new(seqs)?;
        let len = batch.len;
        let l0 = &self.layers[0];
        let ids: Vec<usize> = batch.ids.iter().map(|&i| i as usize).collect();
        let w = self.tok_emb.select_rows(&ids);
        let table = self.pos.table.as_ref().expect("absolute table");
        let positions: Vec<usize> = (0..batch.batch).flat_map(|_| 0..len).collect();
        let p = table.select_rows(&positions);
        let untie = self.config.ablation.untie_word_position_params;
        let uq = if untie { self.pos.u_query.as_ref().expect("U^Q") } else { &l0.wq };
        let uk = if untie { self.pos.u_key.as_ref().expect("U^K") } else { &l0.wk };
        let mut tape = Tape::new();
        let c = |m: &Matrix, t: &mut Tape| t.constant(m.clone());
        let (wv, pv) = (c(&w, &mut tape), c(&p, &mut tape));
        let (wq, bq, wk, bk) = (c(&l0.wq, &mut tape), c(&l0.bq, &mut tape), c(&l0.wk, &mut tape), c(&l0.bk, &mut tape));
        let (uqv, ukv) = (c(uq, &mut tape), c(uk, &mut tape));
        let qw = affine(&mut tape, wv, wq, bq)?;
        let kw = affine(&mut tape, wv, wk, bk)?;
        let qp = tape.matmul(pv, uqv)?;
        let kp = tape.matmul(pv, ukv)?;
        let scale = self.config.posenc.attention_scale();
        let mut out = Vec::with_capacity(4);
        for (q, k) in [(qw, kw), (qw, kp), (qp, kw), (qp, kp)] {
            let s = tape.block_scores(q, k, len)?;
            let s = tape.scale(s, scale)?;
            out.push(tape.value(s)?.clone());
        }
        Ok(out.try_into().expect("four terms"))
    }

    /// Mean MLM loss over `targets` and its gradient for every parameter, in
    /// the order of [`parameters_mut`](Self::parameters_mut). Dropout is used
    /// only when `rng` is given.
    pub fn loss_and_gradients(
        &self,
        inputs: &[Vec<u32>],
        targets: &[MaskedTarget],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Vec<Matrix>)> {
        if targets.is_empty() {
            return Err(Error::NoMaskedPositions);
        }
        let batch = Batch::new(inputs)?;
        let mut tape = Tape::new();
        let vars = ModelVars::record(&mut tape, self, true);
        let trace = forward_on_tape(&mut tape, self, &vars, &batch, self.config.layers, rng)?;
        let last = *trace.hidden.last().expect("layer 0 present");
        let logits = mlm_logits_on_tape(&mut tape, &vars, last, targets.iter().map(|t| t.row).collect())?;
        let loss = tape.cross_entropy(logits, targets.iter().map(|t| t.id as usize).collect())?;
        let value = tape.value(loss)?.as_scalar();
        let mut grads = tape.backward(loss)?;
        let g = vars.all().into_iter().map(|v| grads.take(v)).collect::<Result<Vec<_>>>()?;
        Ok((value, g))
    }

    /// Mean MLM loss without gradients or dropout.
    pub fn loss(&self, inputs: &[Vec<u32>], targets: &[MaskedTarget]) -> Result<f64> {
        if targets.is_empty() {
            return Err(Error::NoMaskedPositions);
        }
        let batch = Batch::new(inputs)?;
        let mut tape = Tape::new();
        let vars = ModelVars::record(&mut tape, self, false);
        let trace = forward_on_tape(&mut tape, self, &vars, &batch, self.config.layers, None)?;
        let last = *trace.hidden.last().expect("layer 0 present");
        let logits = mlm_logits_on_tape(&mut tape, &vars, last, targets.iter().map(|t| t.row).collect())?;
        let loss = tape.cross_entropy(logits, targets.iter().map(|t| t.id as usize).collect())?;
        Ok(tape.value(loss)?.as_scalar())
    }
}

/// Mean cross-entropy of `logits` rows whose `labels` entry is present.
pub fn mlm_loss(logits: &Matrix, labels: &[Option<u32>]) -> Result<f64> {
    if labels.len() != logits.rows() {
        return Err(Error::ShapeMismatch {
            op: "mlm_loss",
            left: logits.shape(),
            right: (labels.len(), 1),
        });
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for (r, label) in labels.iter().enumerate() {
        let Some(t) = label else { continue };
        let row = logits.row(r);
        let t = *t as usize;
        if t >= row.len() {
            return Err(invalid(format!("label {t} outside {} logits", row.len())));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += lse - row[t];
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoMaskedPositions);
    }
    Ok(total / n as f64)
}
