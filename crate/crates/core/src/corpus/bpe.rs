//! Byte-pair encoding over whitespace-separated words.
//!
//! Each word is split into characters followed by a separate [`END_OF_WORD`]
//! symbol, so decoding is unambiguous: symbols are concatenated and every
//! end-of-word marker becomes a single space. Decoding therefore recovers the
//! input with runs of whitespace collapsed to one space and no leading or
//! trailing whitespace.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{NUM_SPECIAL, SPECIAL_TOKENS, UNK};
use crate::error::{invalid, Error, Result};

pub const END_OF_WORD: &str = "</w>";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "BpeFile", into = "BpeFile")]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    base: Vec<String>,
    target_vocab: usize,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    ranks: HashMap<(String, String), usize>,
}

#[derive(Serialize, Deserialize)]
struct BpeFile {
    target_vocab: usize,
    base: Vec<String>,
    merges: Vec<(String, String)>,
}

impl From<BpeFile> for BpeModel {
    fn from(f: BpeFile) -> Self {
        BpeModel::from_parts(f.base, f.merges, f.target_vocab)
    }
}

impl From<BpeModel> for BpeFile {
    fn from(m: BpeModel) -> Self {
        BpeFile {
            target_vocab: m.target_vocab,
            base: m.base,
            merges: m.merges,
        }
    }
}

fn split_word(w: &str) -> Vec<String> {
    let mut v: Vec<String> = w.chars().map(String::from).collect();
    v.push(END_OF_WORD.to_string());
    v
}

impl BpeModel {
    fn from_parts(base: Vec<String>, merges: Vec<(String, String)>, target_vocab: usize) -> Self {
        let mut vocab = Vec::new();
        let mut index = HashMap::new();
        let mut add = |s: String, vocab: &mut Vec<String>| {
            if !index.contains_key(&s) {
                index.insert(s.clone(), vocab.len() as u32);
                vocab.push(s);
            }
        };
        for b in &base {
            add(b.clone(), &mut vocab);
        }
        for (a, b) in &merges {
            add(format!("{a}{b}"), &mut vocab);
        }
        let ranks = merges.iter().cloned().enumerate().map(|(r, p)| (p, r)).collect();
        Self {
            merges,
            base,
            target_vocab,
            vocab,
            index,
            ranks,
        }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn base(&self) -> &[String] {
        &self.base
    }

    pub fn target_vocab(&self) -> usize {
        self.target_vocab
    }

    /// Number of subword types `V` (specials excluded).
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Subword string for a non-special id.
    pub fn symbol(&self, id: u32) -> Option<&str> {
        id.checked_sub(NUM_SPECIAL)
            .and_then(|i| self.vocab.get(i as usize))
            .map(String::as_str)
    }

    /// Segments one word into subword strings.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut syms = split_word(word);
        loop {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let (a, b) = &self.merges[rank];
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == *a && syms[i + 1] == *b {
                    out.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    out.push(syms[i].clone());
                    i += 1;
                }
            }
            syms = out;
        }
        syms
    }

    /// Ids of a whitespace-tokenized text; unknown symbols become `[UNK]`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .flat_map(|w| self.segment_word(w))
            .map(|s| self.index.get(&s).map_or(UNK, |&i| i + NUM_SPECIAL))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id < NUM_SPECIAL {
                out.push_str(SPECIAL_TOKENS[id as usize]);
                out.push(' ');
            } else if let Some(s) = self.symbol(id) {
                match s.strip_suffix(END_OF_WORD) {
                    Some(stem) => {
                        out.push_str(stem);
                        out.push(' ');
                    }
                    None => out.push_str(s),
                }
            }
        }
        out.trim_end().to_string()
    }
}

/// Greedy BPE: repeatedly merges the most frequent adjacent symbol pair
/// (ties broken by the lexicographically smallest pair) until the vocabulary
/// reaches `vocab_size` or no pair occurs at least twice.
pub fn learn_bpe(corpus: &str, vocab_size: usize) -> Result<BpeModel> {
    let mut word_counts: BTreeMap<&str, u64> = BTreeMap::new();
    for w in corpus.split_whitespace() {
        *word_counts.entry(w).or_insert(0) += 1;
    }
    if word_counts.is_empty() {
        return Err(Error::EmptyInput("bpe corpus"));
    }
    let mut base: Vec<String> = word_counts
        .keys()
        .flat_map(|w| w.chars().map(String::from))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    base.push(END_OF_WORD.to_string());
    if vocab_size < base.len() {
        return Err(invalid(format!(
            "vocab size {vocab_size} is below the base inventory of {}",
            base.len()
        )));
    }

    // Work on interned symbol ids; strings only matter for tie-breaking.
    let mut names: Vec<String> = base.clone();
    let mut intern: HashMap<String, u32> = names.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
    let mut words: Vec<(Vec<u32>, u64)> = word_counts
        .iter()
        .map(|(w, &c)| (split_word(w).iter().map(|s| intern[s]).collect(), c))
        .collect();
    let mut distinct = base.len();
    let mut merges = Vec::new();
    while distinct < vocab_size {
        let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
        for (syms, c) in &words {
            for w in syms.windows(2) {
                *counts.entry((w[0], w[1])).or_insert(0) += c;
            }
        }
        let best = counts.iter().max_by(|(pa, ca), (pb, cb)| {
            ca.cmp(cb).then_with(|| {
                // smaller pair wins, so it must compare as "greater"
                (&names[pb.0 as usize], &names[pb.1 as usize]).cmp(&(&names[pa.0 as usize], &names[pa.1 as usize]))
            })
        });
        let Some((&(a, b), &count)) = best else { break };
        if count < 2 {
            break;
        }
        let merged = format!("{}{}", names[a as usize], names[b as usize]);
        let id = match intern.get(&merged) {
            Some(&id) => id,
            None => {
                let id = names.len() as u32;
                names.push(merged.clone());
                intern.insert(merged, id);
                distinct += 1;
                id
            }
        };
        merges.push((names[a as usize].clone(), names[b as usize].clone()));
        for (syms, _) in &mut words {
            let mut i = 0;
            let mut out = Vec::with_capacity(syms.len());
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
                    out.push(id);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            *syms = out;
        }
    }
    Ok(BpeModel::from_parts(base, merges, vocab_size))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair_corpus_merges_aa_first() {
        let m = learn_bpe("aaaa", 100).unwrap();
        assert_eq!(m.merges()[0], ("a".to_string(), "a".to_string()));
    }

    #[test]
    fn base_sized_vocab_has_no_merges() {
        let m = learn_bpe("low lower lowest", 8).unwrap();
        assert_eq!(m.base().len(), 8);
        assert!(m.merges().is_empty());
        assert!(learn_bpe("low lower lowest", 7).is_err());
        assert!(learn_bpe("  ", 7).is_err());
    }

    #[test]
    fn round_trip_with_whitespace_normalisation() {
        let text = "the  quick brown fox\tjumps over the lazy dog ";
        let m = learn_bpe(text, 40).unwrap();
        assert_eq!(m.decode(&m.encode(text)), "the quick brown fox jumps over the lazy dog");
        assert_eq!(m.encode("QQ")[0], UNK);
    }

    #[test]
    fn json_round_trip() {
        let m = learn_bpe("banana bandana cabana", 20).unwrap();
        let back: BpeModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back.merges(), m.merges());
        assert_eq!(back.encode("banana"), m.encode("banana"));
    }
}
