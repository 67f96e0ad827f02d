//! Corpus construction: dependency trees, word-order resampling, BPE and the
//! vocabulary-shifted bilingual pairing.

mod bpe;
mod conllu;
mod order;
mod paired;
mod projective;
pub mod toy;

pub use bpe::{learn_bpe, BpeModel, END_OF_WORD};
pub use conllu::{ingest_conllu, write_conllu, Ingested};
pub use order::{collect_order_stats, reorder_sentence, reorder_sentence_modal, sentence_rng, HeadPos, OrderModel};
pub use paired::{build_paired_corpus, PairMode, PairedCorpus, PairedManifest};
pub use projective::is_projective;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shared special tokens, ids `0..5` in both languages.
pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;
pub const NUM_SPECIAL: u32 = 5;

pub fn is_special(id: u32) -> bool {
    id < NUM_SPECIAL
}

/// One dependency-parsed sentence. `heads[i]` is 1-based; 0 marks the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepSentence {
    pub tokens: Vec<String>,
    pub heads: Vec<usize>,
    pub deprels: Vec<String>,
    pub upos: Vec<String>,
}

impl DepSentence {
    /// Builds a sentence after checking that the heads form a single-rooted tree.
    pub fn new(tokens: Vec<String>, heads: Vec<usize>, deprels: Vec<String>, upos: Vec<String>) -> Result<Self> {
        let s = Self {
            tokens,
            heads,
            deprels,
            upos,
        };
        s.validate(0)?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// Checks the tree invariants; `index` is only used in the error.
    pub fn validate(&self, index: usize) -> Result<()> {
        let n = self.tokens.len();
        let bad = |reason: &str| Error::MalformedTree {
            index,
            reason: reason.to_string(),
        };
        if n == 0 {
            return Err(bad("empty sentence"));
        }
        if self.heads.len() != n || self.deprels.len() != n || self.upos.len() != n {
            return Err(bad("column lengths differ"));
        }
        if self.heads.iter().any(|&h| h > n) {
            return Err(bad("head index out of range"));
        }
        let roots = self.heads.iter().filter(|&&h| h == 0).count();
        if roots != 1 {
            return Err(bad(&format!("{roots} roots")));
        }
        // every token must reach the root within n steps
        for start in 1..=n {
            let mut cur = start;
            let mut steps = 0;
            while cur != 0 {
                cur = self.heads[cur - 1];
                steps += 1;
                if steps > n {
                    return Err(bad("cycle"));
                }
            }
        }
        Ok(())
    }

    /// 1-based index of the root token.
    pub fn root(&self) -> usize {
        self.heads.iter().position(|&h| h == 0).expect("validated tree") + 1
    }

    /// Children of every node, by 1-based index; entry 0 holds the root.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.len() + 1];
        for (i, &h) in self.heads.iter().enumerate() {
            ch[h].push(i + 1);
        }
        ch
    }
}
