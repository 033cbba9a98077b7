//! Corpus metrics and the analyses built on them: BLEU, speedup, sweeps,
//! BLEU over iterations, iterations by length and threshold tuning.

mod bleu;
mod curves;
mod metrics;
mod tune;

use thiserror::Error;

use crate::inference::InferenceError;
use crate::scorers::ScorerError;
use crate::types::StateError;

pub use bleu::{corpus_bleu, corpus_bleu_with, BleuBreakdown, BleuOptions};
pub use curves::{
    bleu_over_iterations, greedy_fill, iterations_vs_length, IterationCurve, LengthBucket, LENGTH_BUCKET_WIDTH,
};
pub use metrics::{
    corpus_metrics, decode_corpus, evaluate, speedup, sweep, CorpusMetrics, MetricsRow, SweepPoint, SweepResult,
};
pub use tune::{measure_speedup, tune_integer, tune_tau, tune_to_speed, TuneOutcome};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metric undefined on an empty corpus")]
    EmptyCorpus,
    #[error("{hypotheses} hypotheses but {references} references")]
    LengthMismatch { hypotheses: usize, references: usize },
    #[error("speedup undefined with zero iterations")]
    ZeroIterations,
    #[error("sentence {0} has no reference")]
    MissingReference(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sentence {index}: {source}")]
    Sentence {
        index: usize,
        #[source]
        source: InferenceError,
    },
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    State(#[from] StateError),
}
