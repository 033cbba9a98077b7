use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bleu::{corpus_bleu_with, BleuOptions};
use super::EvalError;
use crate::inference::{decode_example, CandidateResult, LengthMode};
use crate::scorers::Scorer;
use crate::types::{DecodeConfig, Example, HeuristicKind, TokenId};

/// Decodes every example in parallel; results keep corpus order.
pub fn decode_corpus<S: Scorer + ?Sized>(
    scorer: &S,
    corpus: &[Example],
    config: &DecodeConfig,
    lengths: LengthMode,
) -> Result<Vec<CandidateResult>, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    corpus
        .par_iter()
        .enumerate()
        .map(|(index, ex)| {
            decode_example(scorer, ex, config, lengths).map_err(|source| EvalError::Sentence { index, source })
        })
        .collect()
}

/// Total tokens over total iterations.
pub fn speedup(counts: &[(usize, usize)]) -> Result<f64, EvalError> {
    let tokens: usize = counts.iter().map(|c| c.0).sum();
    let iterations: usize = counts.iter().map(|c| c.1).sum();
    if iterations == 0 {
        return Err(EvalError::ZeroIterations);
    }
    Ok(tokens as f64 / iterations as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusMetrics {
    pub bleu: f64,
    pub total_tokens: usize,
    pub total_iterations: usize,
    pub speedup: f64,
    /// Output length of each sentence.
    pub lengths: Vec<usize>,
    /// Iterations spent on each sentence.
    pub iterations: Vec<usize>,
}

/// Metrics of the selected hypotheses; a sentence contributes its output
/// length in tokens and the iterations of its selected candidate.
pub fn corpus_metrics(
    results: &[CandidateResult],
    corpus: &[Example],
    bleu: BleuOptions,
) -> Result<CorpusMetrics, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    if results.len() != corpus.len() {
        return Err(EvalError::LengthMismatch {
            hypotheses: results.len(),
            references: corpus.len(),
        });
    }
    let references = corpus
        .iter()
        .enumerate()
        .map(|(i, ex)| ex.reference().ok_or(EvalError::MissingReference(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let hypotheses: Vec<&[TokenId]> = results.iter().map(|r| r.trace.final_tokens.as_slice()).collect();
    let lengths: Vec<usize> = results.iter().map(|r| r.trace.n).collect();
    let iterations: Vec<usize> = results.iter().map(|r| r.trace.iterations()).collect();
    let counts: Vec<(usize, usize)> = lengths.iter().copied().zip(iterations.iter().copied()).collect();
    Ok(CorpusMetrics {
        bleu: corpus_bleu_with(&hypotheses, &references, bleu)?.score,
        total_tokens: lengths.iter().sum(),
        total_iterations: iterations.iter().sum(),
        speedup: speedup(&counts)?,
        lengths,
        iterations,
    })
}

pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    corpus: &[Example],
    config: &DecodeConfig,
    lengths: LengthMode,
    bleu: BleuOptions,
) -> Result<(Vec<CandidateResult>, CorpusMetrics), EvalError> {
    let results = decode_corpus(scorer, corpus, config, lengths)?;
    let metrics = corpus_metrics(&results, corpus, bleu)?;
    Ok((results, metrics))
}

/// One metrics CSV row; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub heuristic: String,
    pub param: String,
    pub length_beam: usize,
    pub update_strategy: String,
    pub speedup: f64,
    pub bleu: f64,
    pub total_tokens: usize,
    pub total_iterations: usize,
}

impl MetricsRow {
    pub const HEADER: [&'static str; 8] = [
        "heuristic",
        "param",
        "length_beam",
        "update_strategy",
        "speedup",
        "bleu",
        "total_tokens",
        "total_iterations",
    ];

    pub fn new(config: &DecodeConfig, metrics: &CorpusMetrics) -> Self {
        Self {
            heuristic: config.heuristic.name().to_string(),
            param: config.heuristic.param_label(),
            length_beam: config.length_beam,
            update_strategy: config.update.name().to_string(),
            speedup: metrics.speedup,
            bleu: metrics.bleu,
            total_tokens: metrics.total_tokens,
            total_iterations: metrics.total_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub config: DecodeConfig,
    pub metrics: CorpusMetrics,
}

impl SweepPoint {
    pub fn row(&self) -> MetricsRow {
        MetricsRow::new(&self.config, &self.metrics)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    /// Sorted by speedup, ascending.
    pub points: Vec<SweepPoint>,
    /// Grid values that failed, with the error text.
    pub failures: Vec<(f64, String)>,
}

/// Evaluates `kind` at every grid value on top of `base`. A failing grid
/// point is recorded and the rest of the grid still runs.
pub fn sweep<S: Scorer + ?Sized>(
    scorer: &S,
    corpus: &[Example],
    kind: HeuristicKind,
    grid: &[f64],
    base: &DecodeConfig,
    lengths: LengthMode,
    bleu: BleuOptions,
) -> Result<SweepResult, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::InvalidArgument("empty hyperparameter grid".into()));
    }
    let mut result = SweepResult::default();
    for &value in grid {
        let outcome = kind
            .with_value(value)
            .map_err(EvalError::InvalidArgument)
            .and_then(|heuristic| {
                let config = DecodeConfig { heuristic, ..*base };
                evaluate(scorer, corpus, &config, lengths, bleu).map(|(_, metrics)| SweepPoint { config, metrics })
            });
        match outcome {
            Ok(point) => result.points.push(point),
            Err(e) => {
                log::warn!("{kind} at {value}: {e}");
                result.failures.push((value, e.to_string()));
            }
        }
    }
    result
        .points
        .sort_by(|a, b| a.metrics.speedup.total_cmp(&b.metrics.speedup));
    Ok(result)
}
