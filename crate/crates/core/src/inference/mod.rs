//! The iterative decode engine.
//!
//! Each iteration queries the scorer for the currently masked positions,
//! lets a heuristic pick which predictions to commit and applies the
//! configured update strategy. Under `update-masked-sub` committed tokens
//! are frozen, so a decode is a greedy walk through one factorization of
//! the output.

mod beam;
mod decode;
mod heuristics;
mod update;

use thiserror::Error;

use crate::scorers::ScorerError;
use crate::types::StateError;

pub use beam::{decode_example, decode_with_length_beam, CandidateResult, LengthBeamResult, LengthMode};
pub use decode::{decode, predictions_from};
pub use heuristics::{
    rank, select, select_comb_thresh, select_fcomb_thresh, select_fixed_k, select_fixed_t, select_thresh,
    unmask_count_fixed_t, HeuristicDecision,
};
pub use update::apply_update_strategy;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("invalid decode config: {0}")]
    InvalidConfig(String),
    #[error("no predictions to choose from")]
    EmptyPredictions,
    #[error("predictions missing for position {0}")]
    MissingPrediction(usize),
    #[error("every length candidate failed: {}", .0.iter().map(|(n, e)| format!("N={n}: {e}")).collect::<Vec<_>>().join("; "))]
    AllCandidatesFailed(Vec<(usize, String)>),
    #[error("missing reference for oracle-length decoding")]
    MissingReference,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    State(#[from] StateError),
}
