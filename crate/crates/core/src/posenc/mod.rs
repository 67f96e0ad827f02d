//! The six positional-encoding mechanisms.
//!
//! A [`PosEncSpec`] selects the mechanism and its sizes, [`PosParams`] holds
//! its learnable tables, and [`make_bias`] turns both into the additive
//! embedding and/or pre-softmax bias that attention consumes.

mod bias;
mod relative;
mod sinusoid;

use serde::{Deserialize, Serialize};

pub use bias::{make_bias, tupe_bias, AttnBias, PosParams, PosVars};
pub use relative::{relative_index_table, relative_offset_index, tupe_bucket_table, tupe_relative_bucket};
pub use sinusoid::{offset_rotation, sinusoidal_table};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosEncKind {
    Sinusoidal,
    Absolute,
    TupeAbsolute,
    TupeRelative,
    RelativeKey,
    RelativeKeyQuery,
}

impl PosEncKind {
    pub const ALL: [PosEncKind; 6] = [
        PosEncKind::Sinusoidal,
        PosEncKind::Absolute,
        PosEncKind::TupeAbsolute,
        PosEncKind::TupeRelative,
        PosEncKind::RelativeKey,
        PosEncKind::RelativeKeyQuery,
    ];

    pub fn is_tupe(self) -> bool {
        matches!(self, PosEncKind::TupeAbsolute | PosEncKind::TupeRelative)
    }

    pub fn is_relative(self) -> bool {
        matches!(self, PosEncKind::RelativeKey | PosEncKind::RelativeKeyQuery)
    }

    /// Kinds that add a position vector to the token embedding.
    pub fn is_additive(self) -> bool {
        matches!(self, PosEncKind::Sinusoidal | PosEncKind::Absolute)
    }

    /// Short stable name used in file names and CSV rows.
    pub fn slug(self) -> &'static str {
        match self {
            PosEncKind::Sinusoidal => "sinusoidal",
            PosEncKind::Absolute => "absolute",
            PosEncKind::TupeAbsolute => "tupe_absolute",
            PosEncKind::TupeRelative => "tupe_relative",
            PosEncKind::RelativeKey => "relative_key",
            PosEncKind::RelativeKeyQuery => "relative_key_query",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.slug() == s)
    }
}

impl std::fmt::Display for PosEncKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.slug())
    }
}

/// Positional-encoding choice plus its hyperparameters.
///
/// For the relative kinds `max_positions` is the clipping distance `k`: offsets
/// `j − i` are clipped to `±(k − 1)`, giving `2k − 1` offset vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PosEncSpec {
    pub kind: PosEncKind,
    pub d_model: usize,
    pub max_positions: usize,
    pub num_buckets: usize,
    pub untie_cls: bool,
}

impl PosEncSpec {
    /// Defaults: 512 positions (128 for TUPE-relative), 32 buckets, and
    /// `[CLS]` untying for both TUPE kinds.
    pub fn new(kind: PosEncKind, d_model: usize) -> Self {
        Self {
            kind,
            d_model,
            max_positions: if kind == PosEncKind::TupeRelative { 128 } else { 512 },
            num_buckets: 32,
            untie_cls: kind.is_tupe(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % 2 != 0 {
            return Err(invalid(format!("d_model must be even and positive, got {}", self.d_model)));
        }
        if self.max_positions == 0 {
            return Err(invalid("max_positions must be positive"));
        }
        if self.kind == PosEncKind::TupeRelative && (self.num_buckets < 2 || self.num_buckets % 2 != 0) {
            return Err(invalid("num_buckets must be even and at least 2"));
        }
        Ok(())
    }

    /// Attention logit scaling: `1/√(2d)` for TUPE kinds, `1/√d` otherwise.
    pub fn attention_scale(&self) -> f64 {
        let d = self.d_model as f64;
        if self.kind.is_tupe() {
            1.0 / (2.0 * d).sqrt()
        } else {
            1.0 / d.sqrt()
        }
    }

    /// Multiplier applied to token embeddings before positions are added.
    pub fn token_scale(&self) -> f64 {
        if self.kind == PosEncKind::Sinusoidal {
            2.0 * (self.d_model as f64).sqrt()
        } else {
            1.0
        }
    }

    /// Whether sequence length is bounded by `max_positions`.
    pub fn has_position_table(&self) -> bool {
        matches!(
            self.kind,
            PosEncKind::Sinusoidal | PosEncKind::Absolute | PosEncKind::TupeAbsolute | PosEncKind::TupeRelative
        )
    }
}
