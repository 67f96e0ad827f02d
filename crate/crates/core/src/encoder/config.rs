use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::posenc::{PosEncKind, PosEncSpec};

/// Attention-term ablations for the Absolute kind, applied at the first layer.
///
/// With `w` the word and `p` the position component of the input:
/// `drop_position_position` removes `(pW^Q)(pW^K)ᵀ`, `drop_position_word`
/// removes `(wW^Q)(pW^K)ᵀ` and `drop_word_position` removes `(pW^Q)(wW^K)ᵀ`.
/// `untie_word_position_params` gives the position parts their own `U^Q/U^K`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub drop_position_position: bool,
    pub drop_position_word: bool,
    pub drop_word_position: bool,
    pub untie_word_position_params: bool,
}

impl AblationFlags {
    pub fn any(&self) -> bool {
        self.drop_position_position || self.drop_position_word || self.drop_word_position || self.untie_word_position_params
    }

    /// The five settings compared in the ablation study.
    pub fn settings() -> [(&'static str, AblationFlags); 5] {
        let none = AblationFlags::default();
        [
            ("none", none),
            (
                "drop_position_position",
                AblationFlags {
                    drop_position_position: true,
                    ..none
                },
            ),
            (
                "drop_position_word",
                AblationFlags {
                    drop_position_word: true,
                    ..none
                },
            ),
            (
                "drop_word_position",
                AblationFlags {
                    drop_word_position: true,
                    ..none
                },
            ),
            (
                "untie_word_position_params",
                AblationFlags {
                    untie_word_position_params: true,
                    ..none
                },
            ),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub posenc: PosEncSpec,
    #[serde(default)]
    pub ablation: AblationFlags,
    pub dropout: f64,
    pub layer_norm_eps: f64,
}

impl EncoderConfig {
    /// 12 layers, 1 head, d = 64, FFN 256, sequences up to 128 tokens.
    pub fn full_scale(kind: PosEncKind, vocab_size: usize) -> Self {
        Self {
            layers: 12,
            heads: 1,
            d_model: 64,
            d_ff: 256,
            vocab_size,
            max_seq_len: 128,
            posenc: PosEncSpec::new(kind, 64),
            ablation: AblationFlags::default(),
            dropout: 0.1,
            layer_norm_eps: 1e-12,
        }
    }

    /// Tiny configuration used by gradient checks.
    pub fn tiny(kind: PosEncKind, vocab_size: usize) -> Self {
        let mut posenc = PosEncSpec::new(kind, 8);
        posenc.max_positions = 16;
        Self {
            layers: 2,
            heads: 1,
            d_model: 8,
            d_ff: 16,
            vocab_size,
            max_seq_len: 16,
            posenc,
            ablation: AblationFlags::default(),
            dropout: 0.0,
            layer_norm_eps: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.posenc.validate()?;
        if self.posenc.d_model != self.d_model {
            return Err(invalid("posenc.d_model must equal d_model"));
        }
        if self.heads != 1 {
            return Err(invalid(format!("only single-head attention is implemented, got {} heads", self.heads)));
        }
        if self.layers == 0 || self.d_ff == 0 || self.vocab_size == 0 {
            return Err(invalid("layers, d_ff and vocab_size must be positive"));
        }
        if self.posenc.has_position_table() && self.max_seq_len > self.posenc.max_positions {
            return Err(invalid(format!(
                "max_seq_len {} exceeds max_positions {}",
                self.max_seq_len, self.posenc.max_positions
            )));
        }
        if self.ablation.any() && self.posenc.kind != PosEncKind::Absolute {
            return Err(invalid(format!("ablation flags require the absolute kind, not {}", self.posenc.kind)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout must lie in [0, 1)"));
        }
        Ok(())
    }
}
