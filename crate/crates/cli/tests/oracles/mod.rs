//! Slow but obviously-correct reference implementations used by the
//! acceptance target. None of them call into the algorithms they check.

use std::collections::{BTreeMap, BTreeSet};

/// Sinusoid entry straight from the closed form.
pub fn sinusoid(pos: f64, col: usize, d: usize) -> f64 {
    let pair = (col / 2) as f64;
    let angle = pos / 10000f64.powf(2.0 * pair / d as f64);
    if col % 2 == 0 {
        angle.sin()
    } else {
        angle.cos()
    }
}

/// Every head vector (1-based, 0 = root) of a single-rooted tree on `n` nodes.
pub fn all_trees(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut heads = vec![0usize; n];
    fn rec(i: usize, n: usize, heads: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            if heads.iter().filter(|&&h| h == 0).count() == 1 && acyclic(heads) {
                out.push(heads.clone());
            }
            return;
        }
        for h in 0..=n {
            if h != i + 1 {
                heads[i] = h;
                rec(i + 1, n, heads, out);
            }
        }
    }
    rec(0, n, &mut heads, &mut out);
    out
}

fn acyclic(heads: &[usize]) -> bool {
    (1..=heads.len()).all(|start| {
        let mut cur = start;
        for _ in 0..=heads.len() {
            if cur == 0 {
                return true;
            }
            cur = heads[cur - 1];
        }
        false
    })
}

/// Projective iff the yield of every node is a contiguous span.
pub fn projective_by_spans(heads: &[usize]) -> bool {
    let n = heads.len();
    (1..=n).all(|node| {
        let yield_: BTreeSet<usize> = (1..=n)
            .filter(|&t| {
                let mut cur = t;
                loop {
                    if cur == node {
                        return true;
                    }
                    if cur == 0 {
                        return false;
                    }
                    cur = heads[cur - 1];
                }
            })
            .collect();
        let lo = *yield_.first().unwrap();
        let hi = *yield_.last().unwrap();
        yield_.len() == hi - lo + 1
    })
}

/// Best 2-D orthogonal map (rotation or reflection) by scanning angles.
/// Returns the minimal `Σ‖aᵢ − T bᵢ‖²`.
pub fn best_2d_orthogonal_loss(a: &[[f64; 2]], b: &[[f64; 2]], steps: usize) -> f64 {
    let loss = |t: [[f64; 2]; 2]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(p, q)| {
                let m0 = t[0][0] * q[0] + t[0][1] * q[1];
                let m1 = t[1][0] * q[0] + t[1][1] * q[1];
                (p[0] - m0).powi(2) + (p[1] - m1).powi(2)
            })
            .sum()
    };
    let mut best = f64::INFINITY;
    for s in 0..steps {
        let th = 2.0 * std::f64::consts::PI * s as f64 / steps as f64;
        let (sn, c) = th.sin_cos();
        best = best.min(loss([[c, -sn], [sn, c]]));
        best = best.min(loss([[c, sn], [sn, -c]]));
    }
    best
}

/// Textbook BPE, one merge at a time over every word occurrence in order.
pub struct ReferenceBpe {
    pub vocab: Vec<String>,
    pub merges: Vec<(String, String)>,
}

pub fn reference_bpe(text: &str, target: usize) -> ReferenceBpe {
    let mut words: Vec<Vec<String>> = text
        .split_whitespace()
        .map(|w| {
            let mut v: Vec<String> = w.chars().map(|c| c.to_string()).collect();
            v.push("</w>".into());
            v
        })
        .collect();
    let chars: BTreeSet<String> = text.split_whitespace().flat_map(|w| w.chars().map(|c| c.to_string())).collect();
    let mut vocab: Vec<String> = chars.into_iter().collect();
    vocab.push("</w>".into());
    let mut merges = Vec::new();
    while vocab.len() < target {
        let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
        for w in &words {
            for i in 0..w.len().saturating_sub(1) {
                *counts.entry((w[i].clone(), w[i + 1].clone())).or_default() += 1;
            }
        }
        // BTreeMap iterates pairs in lexicographic order, so the first
        // maximum is the smallest pair among ties
        let mut best: Option<((String, String), usize)> = None;
        for (pair, c) in counts {
            if best.as_ref().is_none_or(|(_, bc)| c > *bc) {
                best = Some((pair, c));
            }
        }
        let Some(((a, b), c)) = best else { break };
        if c < 2 {
            break;
        }
        let joined = format!("{a}{b}");
        for w in &mut words {
            let mut i = 0;
            while i + 1 < w.len() {
                if w[i] == a && w[i + 1] == b {
                    w[i] = joined.clone();
                    w.remove(i + 1);
                }
                i += 1;
            }
        }
        if !vocab.contains(&joined) {
            vocab.push(joined);
        }
        merges.push((a, b));
    }
    ReferenceBpe { vocab, merges }
}

impl ReferenceBpe {
    /// Applies every merge, in learned order, to the characters of `word`.
    pub fn segment(&self, word: &str) -> Vec<String> {
        let mut w: Vec<String> = word.chars().map(|c| c.to_string()).collect();
        w.push("</w>".into());
        for (a, b) in &self.merges {
            let mut i = 0;
            while i + 1 < w.len() {
                if w[i] == *a && w[i + 1] == *b {
                    w[i] = format!("{a}{b}");
                    w.remove(i + 1);
                }
                i += 1;
            }
        }
        w
    }
}
