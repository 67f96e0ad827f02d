//! Word-order statistics and dependency-based reordering.
//!
//! For every NOUN or VERB head we record the linear order of its dependants'
//! relations together with a head marker, keyed by the sorted relation
//! multiset. Reordering samples such an ordering for each head and moves
//! dependant subtrees as contiguous blocks, so projectivity is preserved.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{is_projective, DepSentence};
use crate::error::{invalid, Error, Result};

/// Placeholder for the head itself inside an ordering.
pub const HEAD_MARKER: &str = "<HEAD>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HeadPos {
    Noun,
    Verb,
}

impl HeadPos {
    pub fn of(upos: &str) -> Option<Self> {
        match upos {
            "NOUN" => Some(HeadPos::Noun),
            "VERB" => Some(HeadPos::Verb),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OrderModel {
    orderings: BTreeMap<(HeadPos, Vec<String>), BTreeMap<Vec<String>, u64>>,
    /// `[left, right]` counts of each relation relative to its head.
    sides: BTreeMap<(HeadPos, String), [u64; 2]>,
}

impl OrderModel {
    /// Observed orderings (with [`HEAD_MARKER`]) for a head type and an
    /// unordered relation multiset.
    pub fn orderings(&self, head: HeadPos, deprels: &[&str]) -> Option<&BTreeMap<Vec<String>, u64>> {
        let mut key: Vec<String> = deprels.iter().map(|s| s.to_string()).collect();
        key.sort();
        self.orderings.get(&(head, key))
    }

    pub fn side_counts(&self, head: HeadPos, deprel: &str) -> Option<[u64; 2]> {
        self.sides.get(&(head, deprel.to_string())).copied()
    }

    /// Number of distinct (head type, multiset) keys.
    pub fn num_keys(&self) -> usize {
        self.orderings.len()
    }
}

/// Builds an [`OrderModel`] from every NOUN/VERB head with at least one
/// dependant.
pub fn collect_order_stats(treebank: &[DepSentence]) -> Result<OrderModel> {
    if treebank.is_empty() {
        return Err(Error::EmptyInput("treebank"));
    }
    let mut m = OrderModel::default();
    for s in treebank {
        let children = s.children();
        for h in 1..=s.len() {
            let Some(hp) = HeadPos::of(&s.upos[h - 1]) else { continue };
            if children[h].is_empty() {
                continue;
            }
            let mut items: Vec<usize> = children[h].clone();
            items.push(h);
            items.sort_unstable();
            let ordering: Vec<String> = items
                .iter()
                .map(|&i| if i == h { HEAD_MARKER.to_string() } else { s.deprels[i - 1].clone() })
                .collect();
            let mut key: Vec<String> = children[h].iter().map(|&c| s.deprels[c - 1].clone()).collect();
            key.sort();
            *m.orderings.entry((hp, key)).or_default().entry(ordering).or_insert(0) += 1;
            for &c in &children[h] {
                let side = m.sides.entry((hp, s.deprels[c - 1].clone())).or_insert([0, 0]);
                side[usize::from(c > h)] += 1;
            }
        }
    }
    Ok(m)
}

/// Per-sentence generator: `corpus_seed + index`.
pub fn sentence_rng(corpus_seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(corpus_seed.wrapping_add(index as u64))
}

enum Choice<'a, R: Rng + ?Sized> {
    Sample(&'a mut R),
    Modal,
}

impl<R: Rng + ?Sized> Choice<'_, R> {
    fn pick<'t>(&mut self, table: &'t BTreeMap<Vec<String>, u64>) -> &'t Vec<String> {
        match self {
            Choice::Modal => {
                let best = table.values().copied().max().unwrap_or(0);
                table.iter().find(|(_, &c)| c == best).map(|(k, _)| k).expect("non-empty table")
            }
            Choice::Sample(rng) => {
                let total: u64 = table.values().sum();
                let mut x = rng.random_range(0..total);
                for (k, &c) in table {
                    if x < c {
                        return k;
                    }
                    x -= c;
                }
                unreachable!("weights sum to total")
            }
        }
    }

    /// `true` for right of the head.
    fn side(&mut self, counts: [u64; 2], original_right: bool) -> bool {
        match self {
            Choice::Modal => match counts[0].cmp(&counts[1]) {
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Equal => original_right,
            },
            Choice::Sample(rng) => rng.random_range(0..counts[0] + counts[1]) >= counts[0],
        }
    }
}

/// Resamples dependant order for every NOUN/VERB head.
pub fn reorder_sentence<R: Rng + ?Sized>(s: &DepSentence, m: &OrderModel, rng: &mut R) -> Result<DepSentence> {
    reorder(s, m, Choice::Sample(rng))
}

/// Like [`reorder_sentence`] but always takes the most frequent ordering (ties
/// broken by the lexicographically smallest ordering) and the majority side.
pub fn reorder_sentence_modal(s: &DepSentence, m: &OrderModel) -> Result<DepSentence> {
    reorder::<ChaCha8Rng>(s, m, Choice::Modal)
}

fn reorder<R: Rng + ?Sized>(s: &DepSentence, m: &OrderModel, mut choice: Choice<'_, R>) -> Result<DepSentence> {
    if !is_projective(s) {
        return Err(Error::NonProjective);
    }
    let children = s.children();
    // local order of (children ∪ head) for every node
    let mut local: Vec<Vec<usize>> = vec![Vec::new(); s.len() + 1];
    for h in 1..=s.len() {
        let mut items = children[h].clone();
        items.push(h);
        items.sort_unstable();
        local[h] = match HeadPos::of(&s.upos[h - 1]) {
            Some(hp) if !children[h].is_empty() => relinearize(s, m, hp, h, &items, &mut choice)?,
            _ => items,
        };
    }
    let mut perm = Vec::with_capacity(s.len());
    emit(s.root(), &local, &mut perm);
    let mut new_index = vec![0usize; s.len() + 1];
    for (pos, &old) in perm.iter().enumerate() {
        new_index[old] = pos + 1;
    }
    let out = DepSentence {
        tokens: perm.iter().map(|&o| s.tokens[o - 1].clone()).collect(),
        heads: perm.iter().map(|&o| new_index[s.heads[o - 1]]).collect(),
        deprels: perm.iter().map(|&o| s.deprels[o - 1].clone()).collect(),
        upos: perm.iter().map(|&o| s.upos[o - 1].clone()).collect(),
    };
    debug_assert!(is_projective(&out));
    Ok(out)
}

fn relinearize<R: Rng + ?Sized>(
    s: &DepSentence,
    m: &OrderModel,
    hp: HeadPos,
    h: usize,
    items: &[usize],
    choice: &mut Choice<'_, R>,
) -> Result<Vec<usize>> {
    let deps: Vec<&str> = items.iter().filter(|&&i| i != h).map(|&i| s.deprels[i - 1].as_str()).collect();
    if let Some(table) = m.orderings(hp, &deps) {
        let ordering = choice.pick(table);
        let mut used = vec![false; items.len()];
        let mut out = Vec::with_capacity(items.len());
        for label in ordering {
            let found = items.iter().enumerate().position(|(k, &i)| {
                !used[k] && if i == h { label == HEAD_MARKER } else { label != HEAD_MARKER && s.deprels[i - 1] == *label }
            });
            let k = found.ok_or_else(|| invalid("stored ordering does not match its key"))?;
            used[k] = true;
            out.push(items[k]);
        }
        return Ok(out);
    }
    // backoff: choose a side per dependant, keep relative order within a side
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for &i in items.iter().filter(|&&i| i != h) {
        let original_right = i > h;
        let goes_right = match m.side_counts(hp, &s.deprels[i - 1]) {
            Some(c) if c[0] + c[1] > 0 => choice.side(c, original_right),
            _ => original_right,
        };
        if goes_right {
            right.push(i);
        } else {
            left.push(i);
        }
    }
    left.push(h);
    left.extend(right);
    Ok(left)
}

fn emit(node: usize, local: &[Vec<usize>], out: &mut Vec<usize>) {
    for &i in &local[node] {
        if i == node {
            out.push(i);
        } else {
            emit(i, local, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(spec: &[(&str, usize, &str, &str)]) -> DepSentence {
        DepSentence::new(
            spec.iter().map(|t| t.0.to_string()).collect(),
            spec.iter().map(|t| t.1).collect(),
            spec.iter().map(|t| t.2.to_string()).collect(),
            spec.iter().map(|t| t.3.to_string()).collect(),
        )
        .unwrap()
    }

    fn english() -> Vec<DepSentence> {
        vec![
            sent(&[("the", 2, "det", "DET"), ("dog", 3, "nsubj", "NOUN"), ("sees", 0, "root", "VERB"), ("cats", 3, "obj", "NOUN")]),
            sent(&[("dogs", 2, "nsubj", "NOUN"), ("bark", 0, "root", "VERB")]),
            sent(&[("a", 2, "det", "DET"), ("cat", 3, "nsubj", "NOUN"), ("eats", 0, "root", "VERB"), ("fish", 3, "obj", "NOUN")]),
        ]
    }

    #[test]
    fn deterministic_corpus_gives_certain_sides() {
        let m = collect_order_stats(&english()).unwrap();
        let t = m.orderings(HeadPos::Verb, &["nsubj"]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.keys().next().unwrap(), &vec!["nsubj".to_string(), HEAD_MARKER.to_string()]);
        assert_eq!(m.side_counts(HeadPos::Verb, "nsubj"), Some([3, 0]));
        assert!(collect_order_stats(&[]).is_err());
    }

    #[test]
    fn modal_self_reordering_is_identity() {
        let bank = english();
        let m = collect_order_stats(&bank).unwrap();
        for s in &bank {
            assert_eq!(&reorder_sentence_modal(s, &m).unwrap(), s);
        }
    }

    #[test]
    fn verb_final_model_moves_objects() {
        // a head-final "language": subject, object, verb
        let sov = vec![sent(&[("dog", 3, "nsubj", "NOUN"), ("cats", 3, "obj", "NOUN"), ("sees", 0, "root", "VERB")])];
        let m = collect_order_stats(&sov).unwrap();
        let s = &english()[0];
        let r = reorder_sentence_modal(s, &m).unwrap();
        assert_eq!(r.tokens, vec!["the", "dog", "cats", "sees"]);
        assert_eq!(r.heads, vec![2, 4, 4, 0]);
        assert!(is_projective(&r));
    }

    #[test]
    fn rejects_non_projective() {
        let s = sent(&[("a", 3, "x", "NOUN"), ("b", 4, "x", "NOUN"), ("c", 0, "root", "VERB"), ("d", 3, "x", "NOUN")]);
        let m = collect_order_stats(&english()).unwrap();
        assert!(matches!(reorder_sentence_modal(&s, &m), Err(Error::NonProjective)));
    }
}
