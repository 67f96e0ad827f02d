//! Offset indexing for the relative mechanisms.

use std::sync::Arc;

/// Row of the offset table used for the pair `(i, j)`:
/// `clip(j − i, −(k−1), k−1) + (k−1)`, spanning `[0, 2k−2]`.
pub fn relative_offset_index(i: usize, j: usize, k: usize) -> usize {
    assert!(k >= 1, "clip distance must be at least 1");
    let lim = k as i64 - 1;
    let off = (j as i64 - i as i64).clamp(-lim, lim);
    (off + lim) as usize
}

/// Row-major `len × len` table of [`relative_offset_index`] values.
pub fn relative_index_table(len: usize, k: usize) -> Arc<Vec<usize>> {
    let mut v = Vec::with_capacity(len * len);
    for i in 0..len {
        for j in 0..len {
            v.push(relative_offset_index(i, j, k));
        }
    }
    Arc::new(v)
}

/// Log-spaced bucket for the signed offset `j − i`.
///
/// Half the buckets serve each sign. For a magnitude `n`, define with
/// `h = num_buckets/2` and `e = h/2`:
///
/// `f(n) = n` if `n < e`, else `min(h − 1, e + ⌊ln(n/e) / ln(max_pos/e) · (h − e)⌋)`.
///
/// Non-negative offsets map to `f(offset)` (buckets `0..h`), negative offsets
/// to `h + f(|offset| − 1)` (buckets `h..2h`). Magnitudes beyond `max_pos`
/// saturate at the extreme bucket of their sign.
pub fn tupe_relative_bucket(offset: i64, max_pos: usize, num_buckets: usize) -> usize {
    let half = num_buckets / 2;
    let exact = (half / 2).max(1);
    let f = |n: usize| -> usize {
        if n < exact {
            return n;
        }
        let n = n.min(max_pos) as f64;
        let scaled = (n / exact as f64).ln() / (max_pos as f64 / exact as f64).ln() * (half - exact) as f64;
        (exact + scaled.floor() as usize).min(half - 1)
    };
    if offset >= 0 {
        f(offset as usize)
    } else {
        half + f(offset.unsigned_abs() as usize - 1)
    }
}

/// Row-major `len × len` bucket table for TUPE-relative.
pub fn tupe_bucket_table(len: usize, max_pos: usize, num_buckets: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(len * len);
    for i in 0..len {
        for j in 0..len {
            v.push(tupe_relative_bucket(j as i64 - i as i64, max_pos, num_buckets));
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn offset_index_examples() {
        assert_eq!(relative_offset_index(7, 7, 512), 511);
        assert_eq!(relative_offset_index(0, 612, 512), 1022);
        assert_eq!(relative_offset_index(0, 3, 512), 514);
        assert_eq!(relative_offset_index(612, 0, 512), 0);
    }

    /// Bucket boundaries for (128, 32): the first offset that lands in each bucket.
    const NONNEG_STARTS: [i64; 16] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 12, 16, 23, 32, 46, 64, 91];

    #[test]
    fn bucket_table_for_128_and_32() {
        assert_eq!(tupe_relative_bucket(0, 128, 32), 0);
        assert!(tupe_relative_bucket(5, 128, 32) <= tupe_relative_bucket(9, 128, 32));
        let buckets: Vec<usize> = (-128..=128).map(|o| tupe_relative_bucket(o, 128, 32)).collect();
        let mut distinct = buckets.clone();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct, (0..32).collect::<Vec<_>>());
        // each bucket is one contiguous run of offsets
        for b in 0..32 {
            let idx: Vec<usize> = buckets.iter().enumerate().filter(|(_, &x)| x == b).map(|(i, _)| i).collect();
            assert_eq!(idx.last().unwrap() - idx[0] + 1, idx.len(), "bucket {b} not contiguous");
        }
        for (b, &start) in NONNEG_STARTS.iter().enumerate() {
            assert_eq!(tupe_relative_bucket(start, 128, 32), b);
            if start > 0 {
                assert_eq!(tupe_relative_bucket(start - 1, 128, 32), b - 1);
                assert_eq!(tupe_relative_bucket(-start - 1, 128, 32), 16 + b);
            }
        }
        assert_eq!(tupe_relative_bucket(-1, 128, 32), 16);
        assert_eq!(tupe_relative_bucket(500, 128, 32), 15);
        assert_eq!(tupe_relative_bucket(-500, 128, 32), 31);
    }

    proptest! {
        #[test]
        fn offset_index_is_translation_invariant(i in 0usize..600, j in 0usize..600, c in 0usize..300, k in 1usize..600) {
            prop_assert_eq!(relative_offset_index(i + c, j + c, k), relative_offset_index(i, j, k));
            prop_assert!(relative_offset_index(i, j, k) <= 2 * k - 2);
        }

        #[test]
        fn buckets_are_monotone_per_sign(a in 0i64..200, b in 0i64..200) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(tupe_relative_bucket(lo, 128, 32) <= tupe_relative_bucket(hi, 128, 32));
            if lo > 0 {
                prop_assert!(tupe_relative_bucket(-lo, 128, 32) <= tupe_relative_bucket(-hi, 128, 32));
            }
        }
    }
}
