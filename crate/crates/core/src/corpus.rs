//! Tab-separated corpora: `source tokens \t target tokens`, each side a
//! space-separated list of integer ids. The target side may be empty for
//! decode-only input.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scorers::{PlantedMarkovModel, Scorer};
use crate::types::{Example, TokenId};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("corpus is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_tokens(side: &str) -> Result<Vec<TokenId>, String> {
    side.split_whitespace()
        .map(|t| t.parse::<TokenId>().map_err(|_| format!("bad token `{t}`")))
        .collect()
}

/// Reads a corpus, validating ids against the vocabulary sizes. Blank lines
/// are rejected, not skipped, so line numbers stay meaningful.
pub fn read_corpus<R: BufRead>(
    reader: R,
    source_vocab: usize,
    target_vocab: usize,
) -> Result<Vec<Example>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let malformed = |message: String| CorpusError::Malformed { line: lineno, message };
        let (src, tgt) = match line.split_once('\t') {
            Some((s, t)) => (s, Some(t)),
            None => (line.as_str(), None),
        };
        if tgt.is_some_and(|t| t.contains('\t')) {
            return Err(malformed("more than two tab-separated fields".into()));
        }
        let source = parse_tokens(src).map_err(malformed)?;
        let reference = match tgt.map(parse_tokens).transpose().map_err(malformed)? {
            Some(t) if t.is_empty() => None,
            other => other,
        };
        let ex = Example::new(source, reference, source_vocab, target_vocab).map_err(|e| malformed(e.to_string()))?;
        out.push(ex);
    }
    if out.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(out)
}

pub fn format_tokens(tokens: &[TokenId]) -> String {
    tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_corpus<W: Write>(mut writer: W, corpus: &[Example]) -> std::io::Result<()> {
    for ex in corpus {
        let tgt = ex.reference().map(format_tokens).unwrap_or_default();
        writeln!(writer, "{}\t{}", format_tokens(ex.source()), tgt)?;
    }
    Ok(())
}

/// Samples `size` pairs from the planted model: `X` uniform with length in
/// `min_len..=max_len`, `Y ~ p(Y | X)`.
pub fn sample_corpus(
    model: &PlantedMarkovModel,
    size: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|_| {
            let source = model.sample_source(&mut rng, min_len, max_len);
            let target = model.sample_target(&source, &mut rng);
            Example::new(source, Some(target), model.source_vocab(), model.target_vocab_size())
                .expect("planted samples are in vocabulary")
        })
        .collect()
}
