use super::position_table;
use crate::encoder::EncoderModel;
use crate::error::{invalid, Result};
use crate::numerics::Matrix;

/// First-layer word × position cross terms, rows = sampled words, columns =
/// positions.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrices {
    /// `(w_v W^Q)·(p_t W^K)ᵀ / √d`: the word attends as query to the position.
    pub word_query: Matrix,
    /// `(p_t W^Q)·(w_v W^K)ᵀ / √d`: the position attends as query to the word.
    pub position_query: Matrix,
    pub words: Vec<u32>,
    pub layer: usize,
}

/// Cross terms for `words` against positions `0..positions`. The word vector
/// is the embedding-stage word component `token_scale·E[v]`; untied
/// `U^Q/U^K` replace the layer-1 projections on the position side.
pub fn word_position_correlation(model: &EncoderModel, positions: usize, words: &[u32]) -> Result<CorrelationMatrices> {
    let kind = model.config.posenc.kind;
    if !matches!(kind, crate::posenc::PosEncKind::Absolute | crate::posenc::PosEncKind::Sinusoidal) {
        return Err(invalid(format!("{kind} adds no position vector to the input")));
    }
    if words.iter().any(|&w| w as usize >= model.config.vocab_size) {
        return Err(invalid("word id outside the vocabulary"));
    }
    let p = position_table(model, positions)?;
    let l1 = &model.layers[0];
    let untie = model.config.ablation.untie_word_position_params;
    let (uq, uk) = match (&model.pos.u_query, &model.pos.u_key) {
        (Some(q), Some(k)) if untie => (q, k),
        _ => (&l1.wq, &l1.wk),
    };
    let idx: Vec<usize> = words.iter().map(|&w| w as usize).collect();
    let w = model.tok_emb.select_rows(&idx).scale(model.config.posenc.token_scale());
    let norm = 1.0 / (model.config.d_model as f64).sqrt();
    let word_query = w.matmul(&l1.wq)?.matmul_t(&p.matmul(uk)?)?.scale(norm);
    let position_query = w.matmul(&l1.wk)?.matmul_t(&p.matmul(uq)?)?.scale(norm);
    Ok(CorrelationMatrices {
        word_query,
        position_query,
        words: words.to_vec(),
        layer: 1,
    })
}

/// Entries standardized by the matrix-wide mean and standard deviation
/// (all zeros for a constant matrix).
pub fn z_scored(m: &Matrix) -> Matrix {
    let n = m.data().len() as f64;
    let mean = m.sum() / n;
    let var = m.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Matrix::zeros(m.rows(), m.cols());
    }
    m.map(|x| (x - mean) / var.sqrt())
}

/// Mean over columns (positions) of the population variance across rows (words).
pub fn banding_statistic(m: &Matrix) -> f64 {
    let rows = m.rows() as f64;
    let mut total = 0.0;
    for c in 0..m.cols() {
        let col = m.column(c);
        let mean = col.iter().sum::<f64>() / rows;
        total += col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / rows;
    }
    total / m.cols() as f64
}
