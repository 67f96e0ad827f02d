use std::io::BufRead;

use super::DepSentence;
use crate::error::{Error, Result};

/// Result of reading a CoNLL-U stream.
#[derive(Clone, Debug, Default)]
pub struct Ingested {
    pub sentences: Vec<DepSentence>,
    /// 0-based block indices of rejected sentences.
    pub rejected: Vec<usize>,
}

/// Reads CoNLL-U sentence blocks. Multiword-token ranges (`3-4`) and empty
/// nodes (`5.1`) are skipped; malformed trees are logged and rejected.
pub fn ingest_conllu<R: BufRead>(reader: R) -> Result<Ingested> {
    let mut out = Ingested::default();
    let mut block: Vec<String> = Vec::new();
    let mut index = 0;
    let flush = |block: &mut Vec<String>, out: &mut Ingested, index: &mut usize| {
        if block.is_empty() {
            return;
        }
        match parse_block(block, *index) {
            Ok(s) => out.sentences.push(s),
            Err(e) => {
                log::warn!("rejecting sentence {index}: {e}");
                out.rejected.push(*index);
            }
        }
        block.clear();
        *index += 1;
    };
    for line in reader.lines() {
        let line = line?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            flush(&mut block, &mut out, &mut index);
        } else if !trimmed.starts_with('#') {
            block.push(trimmed.to_string());
        }
    }
    flush(&mut block, &mut out, &mut index);
    Ok(out)
}

fn parse_block(lines: &[String], index: usize) -> Result<DepSentence> {
    let bad = |reason: String| Error::MalformedTree { index, reason };
    let mut tokens = Vec::new();
    let mut heads = Vec::new();
    let mut deprels = Vec::new();
    let mut upos = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(bad(format!("expected 10 columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0].parse().map_err(|_| bad(format!("bad id {:?}", cols[0])))?;
        if id != tokens.len() + 1 {
            return Err(bad(format!("token id {id} out of sequence")));
        }
        tokens.push(cols[1].to_string());
        upos.push(cols[3].to_string());
        heads.push(cols[6].parse().map_err(|_| bad(format!("bad head {:?}", cols[6])))?);
        deprels.push(cols[7].split(':').next().unwrap_or(cols[7]).to_string());
    }
    let s = DepSentence {
        tokens,
        heads,
        deprels,
        upos,
    };
    s.validate(index)?;
    Ok(s)
}

/// Renders sentences back to minimal CoNLL-U (unused columns as `_`).
pub fn write_conllu(sentences: &[DepSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for i in 0..s.len() {
            out.push_str(&format!(
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_\n",
                i + 1,
                s.tokens[i],
                s.upos[i],
                s.heads[i],
                s.deprels[i]
            ));
        }
        out.push('\n');
    }
    out
}
