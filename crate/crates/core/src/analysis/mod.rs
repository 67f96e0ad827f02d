//! Compositionality and word-position analyses of positional encodings.

mod correlation;
mod export;
mod procrustes;
mod wilcoxon;

pub use correlation::{banding_statistic, word_position_correlation, z_scored, CorrelationMatrices};
pub use export::{export_encoding_dims, read_points_csv, write_points_csv, EncodingPoint};
pub use procrustes::{compositionality_loss, fit_orthogonal_procrustes, procrustes_loss, ProcrustesResult, CHUNK_RANGE};
pub use wilcoxon::{average_ranks, median, wilcoxon_signed_rank, WilcoxonResult, EXACT_LIMIT};

use crate::encoder::EncoderModel;
use crate::error::{invalid, Result};
use crate::numerics::Matrix;
use crate::posenc::{sinusoidal_table, PosEncKind};

/// The first `rows` absolute position vectors of a model: the fixed
/// sinusoids or the learnt table (raw `P` for TUPE kinds).
pub fn position_table(model: &EncoderModel, rows: usize) -> Result<Matrix> {
    let spec = &model.config.posenc;
    match spec.kind {
        PosEncKind::Sinusoidal => sinusoidal_table(rows, model.config.d_model),
        PosEncKind::Absolute | PosEncKind::TupeAbsolute | PosEncKind::TupeRelative => {
            let t = model.pos.table.as_ref().expect("table kinds carry a table");
            if rows > t.rows() {
                return Err(invalid(format!("{rows} rows requested from a {}-row table", t.rows())));
            }
            Ok(t.slice_rows(0, rows))
        }
        kind => Err(invalid(format!("{kind} has no absolute position table"))),
    }
}

/// Projection applied before a Procrustes analysis of a position table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableView {
    Raw,
    /// `P·U^K` for TUPE kinds, `P·W^K` of the first layer otherwise.
    KeyProjected,
}

pub fn position_table_view(model: &EncoderModel, rows: usize, view: TableView) -> Result<Matrix> {
    let p = position_table(model, rows)?;
    match view {
        TableView::Raw => Ok(p),
        TableView::KeyProjected => match &model.pos.u_key {
            Some(u) => p.matmul(u),
            None => p.matmul(&model.layers[0].wk),
        },
    }
}

/// Mean Procrustes loss for each offset in `offsets`, every offset using its
/// own stream derived from `seed`.
pub fn procrustes_curve(table: &Matrix, offsets: std::ops::RangeInclusive<usize>, runs: usize, seed: u64) -> Result<Vec<ProcrustesResult>> {
    use rand::SeedableRng;
    offsets
        .map(|k| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            compositionality_loss(table, k, runs, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests;
