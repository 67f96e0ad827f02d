//! Single-head post-LN transformer encoder with a tied MLM head.

mod config;
mod forward;
mod model;

pub use config::{AblationFlags, EncoderConfig};
pub use forward::{forward_on_tape, mlm_logits_on_tape, mlm_loss, Batch, ForwardOutput, MaskedTarget, ModelVars, Trace};
pub use model::{CheckpointMeta, EncoderModel, LayerParams};

#[cfg(test)]
mod tests;
