use super::DepSentence;

/// True iff no two arcs cross: for every arc `h → d`, each token strictly
/// between them is dominated by `h`.
pub fn is_projective(s: &DepSentence) -> bool {
    let n = s.len();
    let dominated_by = |mut node: usize, h: usize| {
        while node != 0 {
            if node == h {
                return true;
            }
            node = s.heads[node - 1];
        }
        false
    };
    for d in 1..=n {
        let h = s.heads[d - 1];
        if h == 0 {
            continue;
        }
        let (lo, hi) = (h.min(d), h.max(d));
        if (lo + 1..hi).any(|t| !dominated_by(t, h)) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(heads: &[usize]) -> DepSentence {
        let n = heads.len();
        DepSentence::new(
            (0..n).map(|i| format!("w{i}")).collect(),
            heads.to_vec(),
            vec!["dep".into(); n],
            vec!["X".into(); n],
        )
        .unwrap()
    }

    #[test]
    fn examples() {
        assert!(is_projective(&tree(&[0])));
        assert!(is_projective(&tree(&[0, 1, 2, 3, 4])));
        assert!(is_projective(&tree(&[2, 3, 4, 0])));
        assert!(!is_projective(&tree(&[3, 4, 0, 3])));
    }
}
