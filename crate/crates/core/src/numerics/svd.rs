//! Thin singular value decomposition by one-sided Jacobi rotations.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Sweep cap for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 80;

/// `a = u · diag(s) · vᵀ` with `u: m×r`, `v: n×r`, `r = min(m, n)`; singular
/// values are non-negative and sorted in descending order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (c, v) in us.row_mut(r).iter_mut().enumerate() {
                *v *= self.s[c];
            }
        }
        us.matmul_t(&self.v).expect("consistent svd shapes")
    }
}

pub fn svd(a: &Matrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::NonFinite { op: "svd" });
    }
    if a.rows() < a.cols() {
        let t = svd_tall(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    svd_tall(a)
}

fn svd_tall(a: &Matrix) -> Result<Svd> {
    let (m, n) = a.shape();
    // Columns are stored contiguously to keep rotations cache friendly.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|c| a.column(c)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            e
        })
        .collect();
    let tol = 1e-15;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut al = 0.0;
                    let mut be = 0.0;
                    let mut ga = 0.0;
                    for i in 0..m {
                        al += cp[i] * cp[i];
                        be += cq[i] * cq[i];
                        ga += cp[i] * cq[i];
                    }
                    (al, be, ga)
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut v = Matrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        s.push(norms[src]);
        for r in 0..n {
            v.set(r, k, vcols[src][r]);
        }
        if norms[src] > 0.0 {
            u_cols.push(cols[src].iter().map(|x| x / norms[src]).collect());
        } else {
            u_cols.push(Vec::new());
        }
    }
    complete_basis(&mut u_cols, m);
    let mut u = Matrix::zeros(m, n);
    for (k, col) in u_cols.iter().enumerate() {
        for r in 0..m {
            u.set(r, k, col[r]);
        }
    }
    Ok(Svd { u, s, v })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills empty columns (zero singular values) with unit vectors orthogonal to
/// every other column, by Gram-Schmidt over the canonical basis.
fn complete_basis(cols: &mut [Vec<f64>], m: usize) {
    let mut next_axis = 0;
    for k in 0..cols.len() {
        if !cols[k].is_empty() {
            continue;
        }
        loop {
            assert!(next_axis < m, "cannot complete orthonormal basis");
            let mut cand = vec![0.0; m];
            cand[next_axis] = 1.0;
            next_axis += 1;
            for _ in 0..2 {
                for other in cols.iter().filter(|c| !c.is_empty()) {
                    let d: f64 = cand.iter().zip(other).map(|(a, b)| a * b).sum();
                    for (x, o) in cand.iter_mut().zip(other) {
                        *x -= d * o;
                    }
                }
            }
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                cols[k] = cand.iter().map(|x| x / norm).collect();
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn orthonormality_error(m: &Matrix) -> f64 {
        m.t_matmul(m).unwrap().max_abs_diff(&Matrix::identity(m.cols()))
    }

    #[test]
    fn diagonal_matrix() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 3.0, 0.0], vec![0.0, 0.0, 2.0]]);
        let d = svd(&a).unwrap();
        assert_eq!(d.s, vec![3.0, 2.0, 1.0]);
        assert!(d.reconstruct().max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn orthogonal_matrix_has_unit_singular_values() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let q = Matrix::from_rows(&[vec![c, -s, 0.0], vec![s, c, 0.0], vec![0.0, 0.0, -1.0]]);
        for v in svd(&q).unwrap().s {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn random_shapes_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, n) in [(8, 8), (12, 5), (5, 12), (64, 64), (1, 4)] {
            let a = Matrix::from_fn(m, n, |_, _| rng.random_range(-2.0..2.0));
            let d = svd(&a).unwrap();
            assert!(d.reconstruct().max_abs_diff(&a) < 1e-8);
            assert!(orthonormality_error(&d.u) < 1e-8);
            assert!(orthonormality_error(&d.v) < 1e-8);
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            assert!(d.s.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn rank_deficient_input_keeps_orthonormal_factors() {
        let a = Matrix::from_fn(6, 4, |r, c| if c < 2 { (r + c) as f64 } else { 0.0 });
        let d = svd(&a).unwrap();
        assert!(d.reconstruct().max_abs_diff(&a) < 1e-10);
        assert!(orthonormality_error(&d.u) < 1e-10);
        assert!(orthonormality_error(&d.v) < 1e-10);
        let z = svd(&Matrix::zeros(3, 3)).unwrap();
        assert!(orthonormality_error(&z.u) < 1e-12);
    }
}
