use crate::error::{invalid, Result};
use crate::numerics::Matrix;

fn frequency(pair: usize, d: usize) -> f64 {
    1.0 / 10000f64.powf((2 * pair) as f64 / d as f64)
}

/// Row `pos` holds `sin(pos·ω_i)` at column `2i` and `cos(pos·ω_i)` at `2i+1`,
/// with `ω_i = 10000^(−2i/d)`.
pub fn sinusoidal_table(max_pos: usize, d: usize) -> Result<Matrix> {
    if d % 2 != 0 {
        return Err(invalid(format!("sinusoidal table needs an even dimension, got {d}")));
    }
    let mut m = Matrix::zeros(max_pos, d);
    for pos in 0..max_pos {
        let row = m.row_mut(pos);
        for i in 0..d / 2 {
            let angle = pos as f64 * frequency(i, d);
            row[2 * i] = angle.sin();
            row[2 * i + 1] = angle.cos();
        }
    }
    Ok(m)
}

/// Block-diagonal rotation `R_k` with `R_k · p_pos = p_{pos+k}` for sinusoidal
/// rows taken as column vectors.
pub fn offset_rotation(k: i64, d: usize) -> Result<Matrix> {
    if d % 2 != 0 {
        return Err(invalid(format!("offset rotation needs an even dimension, got {d}")));
    }
    let mut r = Matrix::zeros(d, d);
    for i in 0..d / 2 {
        let (s, c) = (k as f64 * frequency(i, d)).sin_cos();
        let a = 2 * i;
        r.set(a, a, c);
        r.set(a, a + 1, s);
        r.set(a + 1, a, -s);
        r.set(a + 1, a + 1, c);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_examples() {
        let t = sinusoidal_table(4, 8).unwrap();
        for (c, v) in t.row(0).iter().enumerate() {
            assert_eq!(*v, if c % 2 == 0 { 0.0 } else { 1.0 });
        }
        assert!((t.get(1, 0) - 0.841471).abs() < 1e-6);
        assert!(sinusoidal_table(512, 64).unwrap().data().iter().all(|v| v.abs() <= 1.0));
        assert!(sinusoidal_table(3, 7).is_err());
    }

    #[test]
    fn rotation_identity_and_shift() {
        assert!(offset_rotation(0, 64).unwrap().max_abs_diff(&Matrix::identity(64)) == 0.0);
        let t = sinusoidal_table(502, 64).unwrap();
        let r = offset_rotation(1, 64).unwrap();
        let shifted = r.matmul(&t.slice_rows(0, 501).transpose()).unwrap().transpose();
        assert!(shifted.max_abs_diff(&t.slice_rows(1, 502)) < 1e-10);
    }

    proptest! {
        #[test]
        fn rotations_compose(a in -300i64..300, b in -300i64..300) {
            let ra = offset_rotation(a, 16).unwrap();
            let rb = offset_rotation(b, 16).unwrap();
            let rab = offset_rotation(a + b, 16).unwrap();
            prop_assert!(ra.matmul(&rb).unwrap().max_abs_diff(&rab) < 1e-10);
        }
    }
}
