use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bleu::{corpus_bleu_with, BleuOptions};
use super::metrics::{decode_corpus, speedup};
use super::EvalError;
use crate::inference::{predictions_from, LengthMode};
use crate::scorers::{QueryScope, Scorer};
use crate::types::{DecodeConfig, Example, HypothesisState, TokenId};

pub const LENGTH_BUCKET_WIDTH: usize = 5;

/// Corpus BLEU after each iteration index, with still-masked positions
/// filled by greedy predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationCurve {
    pub heuristic: String,
    pub param: f64,
    /// Average tokens per iteration of the run.
    pub speed: f64,
    /// `points[t]` is BLEU after iteration `t + 1`.
    pub points: Vec<f64>,
}

/// The state's tokens with every masked position set to the scorer's
/// argmax, without committing anything.
pub fn greedy_fill<S: Scorer + ?Sized>(
    scorer: &S,
    source: &[TokenId],
    state: &HypothesisState,
) -> Result<Vec<TokenId>, EvalError> {
    let mut tokens = state.tokens().to_vec();
    if !state.is_complete() {
        let dists = scorer.predict(source, state, QueryScope::Masked)?;
        for p in predictions_from(&dists)? {
            tokens[p.position] = p.token;
        }
    }
    Ok(tokens)
}

/// Sentences that finish early keep contributing their final output to
/// later iteration indices.
pub fn bleu_over_iterations<S: Scorer + ?Sized>(
    scorer: &S,
    corpus: &[Example],
    config: &DecodeConfig,
    lengths: LengthMode,
    bleu: BleuOptions,
) -> Result<IterationCurve, EvalError> {
    let results = decode_corpus(scorer, corpus, config, lengths)?;
    let references = corpus
        .iter()
        .enumerate()
        .map(|(i, ex)| ex.reference().ok_or(EvalError::MissingReference(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let snapshots: Vec<Vec<Vec<TokenId>>> = results
        .par_iter()
        .map(|r| {
            let states = r.trace.replay()?;
            states[1..]
                .iter()
                .map(|s| greedy_fill(scorer, &r.trace.source, s))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, EvalError>>()?;
    let horizon = snapshots.iter().map(Vec::len).max().unwrap_or(0);
    let points = (0..horizon)
        .map(|t| {
            let hyps: Vec<&[TokenId]> = snapshots.iter().map(|s| s[t.min(s.len() - 1)].as_slice()).collect();
            corpus_bleu_with(&hyps, &references, bleu).map(|b| b.score)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let counts: Vec<(usize, usize)> = results.iter().map(|r| (r.trace.n, r.trace.iterations())).collect();
    Ok(IterationCurve {
        heuristic: config.heuristic.name().to_string(),
        param: config.heuristic.param(),
        speed: speedup(&counts)?,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    /// Inclusive length range.
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub mean_iterations: f64,
    /// Population standard deviation.
    pub std_iterations: f64,
}

/// Iteration statistics grouped by output length in buckets of
/// [`LENGTH_BUCKET_WIDTH`] tokens (1-5, 6-10, ...). Empty buckets are omitted.
pub fn iterations_vs_length<S: Scorer + ?Sized>(
    scorer: &S,
    corpus: &[Example],
    config: &DecodeConfig,
    oracle_lengths: bool,
) -> Result<Vec<LengthBucket>, EvalError> {
    if oracle_lengths {
        if let Some(i) = corpus.iter().position(|e| e.reference().is_none()) {
            return Err(EvalError::MissingReference(i));
        }
    }
    let mode = if oracle_lengths {
        LengthMode::Oracle
    } else {
        LengthMode::Predicted
    };
    let results = decode_corpus(scorer, corpus, config, mode)?;
    Ok(bucket_iterations(
        results.iter().map(|r| (r.trace.n, r.trace.iterations())),
    ))
}

pub(crate) fn bucket_iterations(pairs: impl Iterator<Item = (usize, usize)>) -> Vec<LengthBucket> {
    let mut groups: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for (n, iters) in pairs {
        groups
            .entry((n.max(1) - 1) / LENGTH_BUCKET_WIDTH)
            .or_default()
            .push(iters as f64);
    }
    groups
        .into_iter()
        .map(|(b, xs)| {
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            LengthBucket {
                lo: b * LENGTH_BUCKET_WIDTH + 1,
                hi: (b + 1) * LENGTH_BUCKET_WIDTH,
                count: xs.len(),
                mean_iterations: mean,
                std_iterations: var.sqrt(),
            }
        })
        .collect()
}
