use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{svd, Matrix};

/// Chunk sizes are drawn uniformly from this range.
pub const CHUNK_RANGE: std::ops::RangeInclusive<usize> = 4..=32;

/// Orthogonal `T` minimizing `Σᵢ ‖aᵢ − T bᵢ‖²` over the rows of `a` and `b`.
pub fn fit_orthogonal_procrustes(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "procrustes",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let m = a.t_matmul(b)?;
    let s = svd(&m)?;
    s.u.matmul_t(&s.v)
}

/// `Σᵢ ‖aᵢ − T bᵢ‖²` divided by the number of entries of `a`.
pub fn procrustes_loss(a: &Matrix, b: &Matrix, t: &Matrix) -> Result<f64> {
    let mapped = b.matmul_t(t)?; // rows are (T bᵢ)ᵀ
    Ok(a.sub(&mapped)?.frobenius_sq() / a.data().len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcrustesResult {
    pub offset: usize,
    pub losses: Vec<f64>,
    pub mean_loss: f64,
    pub runs: usize,
    pub chunk_sizes: Vec<usize>,
    pub normalization: String,
}

/// How well a single orthogonal map sends position `pos` to `pos + k`.
///
/// Each run draws a chunk size `C` and an evaluation start `pos′`, fits `T`
/// on every pair `(p_pos, p_{pos+k})` outside `[pos′, pos′+C)`, and scores
/// `‖P[pos′..pos′+C] − T·P[pos′+k..pos′+k+C]‖² / (C·d)` on the held-out chunk.
pub fn compositionality_loss<R: Rng + ?Sized>(
    table: &Matrix,
    k: usize,
    runs: usize,
    rng: &mut R,
) -> Result<ProcrustesResult> {
    let rows = table.rows();
    let max_chunk = *CHUNK_RANGE.end();
    if rows < k + max_chunk + 1 {
        return Err(invalid(format!("offset {k} too large for a table of {rows} rows")));
    }
    if runs == 0 {
        return Err(invalid("at least one run is needed"));
    }
    let mut losses = Vec::with_capacity(runs);
    let mut chunk_sizes = Vec::with_capacity(runs);
    for _ in 0..runs {
        let c = rng.random_range(CHUNK_RANGE);
        let start = rng.random_range(0..=rows - k - c);
        let eval_a = table.slice_rows(start, start + c);
        let eval_b = table.slice_rows(start + k, start + k + c);
        let t = if k == 0 {
            Matrix::identity(table.cols())
        } else {
            let fit: Vec<usize> = (0..rows - k).filter(|p| !(start..start + c).contains(p)).collect();
            let shifted: Vec<usize> = fit.iter().map(|p| p + k).collect();
            fit_orthogonal_procrustes(&table.select_rows(&fit), &table.select_rows(&shifted))?
        };
        losses.push(procrustes_loss(&eval_a, &eval_b, &t)?);
        chunk_sizes.push(c);
    }
    Ok(ProcrustesResult {
        offset: k,
        mean_loss: losses.iter().sum::<f64>() / runs as f64,
        losses,
        runs,
        chunk_sizes,
        normalization: "C*d".into(),
    })
}
