use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::relative::{relative_index_table, tupe_bucket_table};
use super::sinusoid::sinusoidal_table;
use super::{PosEncKind, PosEncSpec};
use crate::error::{invalid, Error, Result};
use crate::numerics::{Matrix, Tape, Var};

/// Learnable tables of a positional encoding. Which fields are present depends
/// on the kind; see [`PosParams::init`].
#[derive(Clone, Debug, PartialEq)]
pub struct PosParams {
    /// Position table `P` (`max_positions × d`): Absolute and TUPE kinds.
    pub table: Option<Matrix>,
    /// `U^Q`, `U^K` (`d × d`): TUPE kinds, and Absolute when word/position
    /// projections are untied.
    pub u_query: Option<Matrix>,
    pub u_key: Option<Matrix>,
    /// Per-bucket scalars `b` (`1 × num_buckets`): TUPE-relative.
    pub bucket_bias: Option<Matrix>,
    /// `θ₁`, `θ₂` (`1 × 1`): TUPE kinds with `untie_cls`.
    pub cls_row: Option<Matrix>,
    pub cls_col: Option<Matrix>,
    /// Offset vectors `a` (`2·max_positions − 1 × d`): relative kinds.
    pub offsets: Option<Matrix>,
}

const INIT_STD: f64 = 0.02;

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let n = Normal::new(0.0, INIT_STD).expect("valid std");
    Matrix::from_fn(rows, cols, |_, _| n.sample(rng))
}

impl PosParams {
    pub fn empty() -> Self {
        Self {
            table: None,
            u_query: None,
            u_key: None,
            bucket_bias: None,
            cls_row: None,
            cls_col: None,
            offsets: None,
        }
    }

    pub fn init<R: Rng + ?Sized>(spec: &PosEncSpec, untie_word_position: bool, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let d = spec.d_model;
        let mut p = Self::empty();
        match spec.kind {
            PosEncKind::Sinusoidal => {}
            PosEncKind::Absolute => {
                p.table = Some(normal_matrix(spec.max_positions, d, rng));
                if untie_word_position {
                    p.u_query = Some(normal_matrix(d, d, rng));
                    p.u_key = Some(normal_matrix(d, d, rng));
                }
            }
            PosEncKind::TupeAbsolute | PosEncKind::TupeRelative => {
                p.table = Some(normal_matrix(spec.max_positions, d, rng));
                p.u_query = Some(normal_matrix(d, d, rng));
                p.u_key = Some(normal_matrix(d, d, rng));
                if spec.kind == PosEncKind::TupeRelative {
                    p.bucket_bias = Some(Matrix::zeros(1, spec.num_buckets));
                }
                if spec.untie_cls {
                    p.cls_row = Some(Matrix::zeros(1, 1));
                    p.cls_col = Some(Matrix::zeros(1, 1));
                }
            }
            PosEncKind::RelativeKey | PosEncKind::RelativeKeyQuery => {
                p.offsets = Some(Matrix::zeros(2 * spec.max_positions - 1, d));
            }
        }
        Ok(p)
    }

    /// Present tables with stable names, in a fixed order.
    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        self.slots()
            .into_iter()
            .filter_map(|(n, m)| m.as_ref().map(|m| (n, m)))
            .collect()
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("pos.table", self.table.as_mut()),
            ("pos.u_query", self.u_query.as_mut()),
            ("pos.u_key", self.u_key.as_mut()),
            ("pos.bucket_bias", self.bucket_bias.as_mut()),
            ("pos.cls_row", self.cls_row.as_mut()),
            ("pos.cls_col", self.cls_col.as_mut()),
            ("pos.offsets", self.offsets.as_mut()),
        ]
        .into_iter()
        .filter_map(|(n, m)| m.map(|m| (n, m)))
        .collect()
    }

    fn slots(&self) -> [(&'static str, &Option<Matrix>); 7] {
        [
            ("pos.table", &self.table),
            ("pos.u_query", &self.u_query),
            ("pos.u_key", &self.u_key),
            ("pos.bucket_bias", &self.bucket_bias),
            ("pos.cls_row", &self.cls_row),
            ("pos.cls_col", &self.cls_col),
            ("pos.offsets", &self.offsets),
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, m)| m.data().len()).sum()
    }

    /// Records every table on `tape`, as leaves when `trainable` is set and as
    /// constants otherwise.
    pub fn record(&self, tape: &mut Tape, trainable: bool) -> PosVars {
        let mut put = |m: &Option<Matrix>| {
            m.as_ref().map(|m| if trainable { tape.leaf(m.clone()) } else { tape.constant(m.clone()) })
        };
        PosVars {
            table: put(&self.table),
            u_query: put(&self.u_query),
            u_key: put(&self.u_key),
            bucket_bias: put(&self.bucket_bias),
            cls_row: put(&self.cls_row),
            cls_col: put(&self.cls_col),
            offsets: put(&self.offsets),
        }
    }
}

/// Tape handles mirroring [`PosParams`].
#[derive(Clone, Copy, Debug)]
pub struct PosVars {
    pub table: Option<Var>,
    pub u_query: Option<Var>,
    pub u_key: Option<Var>,
    pub bucket_bias: Option<Var>,
    pub cls_row: Option<Var>,
    pub cls_col: Option<Var>,
    pub offsets: Option<Var>,
}

impl PosVars {
    /// Handles in the same order as [`PosParams::named`].
    pub fn present(&self) -> Vec<Var> {
        [
            self.table,
            self.u_query,
            self.u_key,
            self.bucket_bias,
            self.cls_row,
            self.cls_col,
            self.offsets,
        ]
        .into_iter()
        .flatten()
        .collect()
    }
}

fn missing(what: &str) -> Error {
    invalid(format!("positional parameters lack {what}"))
}

/// The shared TUPE bias on `tape`:
/// `(1/√(2d))·(P U^Q)(P U^K)ᵀ` plus the bucket scalars for TUPE-relative, then
/// the `[CLS]` reset of row 0 (θ₁) and column 0 (θ₂) when untied.
pub fn tupe_bias(tape: &mut Tape, spec: &PosEncSpec, vars: &PosVars, len: usize) -> Result<Var> {
    if !spec.kind.is_tupe() {
        return Err(invalid(format!("{} has no TUPE bias", spec.kind)));
    }
    if len > spec.max_positions {
        return Err(Error::SequenceTooLong {
            len,
            max: spec.max_positions,
        });
    }
    let table = vars.table.ok_or_else(|| missing("a position table"))?;
    let uq = vars.u_query.ok_or_else(|| missing("U^Q"))?;
    let uk = vars.u_key.ok_or_else(|| missing("U^K"))?;
    let p = tape.gather_rows(table, (0..len).collect())?;
    let pq = tape.matmul(p, uq)?;
    let pk = tape.matmul(p, uk)?;
    let raw = tape.matmul_t(pq, pk)?;
    let mut bias = tape.scale(raw, spec.attention_scale())?;
    if spec.kind == PosEncKind::TupeRelative {
        let b = vars.bucket_bias.ok_or_else(|| missing("bucket scalars"))?;
        let idx = tupe_bucket_table(len, spec.max_positions, spec.num_buckets);
        let rel = tape.gather_scalars(b, len, len, idx)?;
        bias = tape.add(bias, rel)?;
    }
    if spec.untie_cls {
        let r = vars.cls_row.ok_or_else(|| missing("θ₁"))?;
        let c = vars.cls_col.ok_or_else(|| missing("θ₂"))?;
        bias = tape.reset_row_col(bias, r, c)?;
    }
    Ok(bias)
}

/// What attention needs from a positional encoding at one layer.
#[derive(Clone, Debug)]
pub struct AttnBias {
    /// Rows to add to the (scaled) token embeddings; only at layer 0.
    pub embedding: Option<Matrix>,
    /// Pre-softmax `qlen × klen` bias, already scaled.
    pub bias: Option<Matrix>,
    /// Multiplier for the content logits `q·kᵀ`.
    pub scale: f64,
    /// Offset-table row per `(i, j)` for the relative kinds.
    pub offset_index: Option<Arc<Vec<usize>>>,
}

pub fn make_bias(spec: &PosEncSpec, params: &PosParams, qlen: usize, klen: usize, layer: usize) -> Result<AttnBias> {
    spec.validate()?;
    let longest = qlen.max(klen);
    if spec.has_position_table() && longest > spec.max_positions {
        return Err(Error::SequenceTooLong {
            len: longest,
            max: spec.max_positions,
        });
    }
    let mut out = AttnBias {
        embedding: None,
        bias: None,
        scale: spec.attention_scale(),
        offset_index: None,
    };
    match spec.kind {
        PosEncKind::Sinusoidal if layer == 0 => out.embedding = Some(sinusoidal_table(qlen, spec.d_model)?),
        PosEncKind::Absolute if layer == 0 => {
            let t = params.table.as_ref().ok_or_else(|| missing("a position table"))?;
            out.embedding = Some(t.slice_rows(0, qlen));
        }
        PosEncKind::Sinusoidal | PosEncKind::Absolute => {}
        PosEncKind::TupeAbsolute | PosEncKind::TupeRelative => {
            if qlen != klen {
                return Err(invalid("TUPE bias is defined for self-attention (qlen = klen)"));
            }
            let mut tape = Tape::new();
            let vars = params.record(&mut tape, false);
            let b = tupe_bias(&mut tape, spec, &vars, qlen)?;
            out.bias = Some(tape.value(b)?.clone());
        }
        PosEncKind::RelativeKey | PosEncKind::RelativeKeyQuery => {
            if qlen != klen {
                return Err(invalid("relative offsets are defined for self-attention (qlen = klen)"));
            }
            out.offset_index = Some(relative_index_table(qlen, spec.max_positions));
        }
    }
    Ok(out)
}
