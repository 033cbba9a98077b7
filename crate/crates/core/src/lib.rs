//! Semi-autoregressive decoding for conditional masked language models.
//!
//! A decode starts from an all-MASK output and repeatedly unmasks a subset
//! of positions chosen by a heuristic from the scorer's per-position
//! predictions. Under the subset-only update strategy each decode is a
//! probabilistic factorization of its output, which [`factorization`]
//! scores and searches exhaustively on small instances.
//!
//! - [`types`]: vocabulary, hypothesis state, configuration and traces.
//! - [`scorers`]: the scorer contract and its planted, count-based and
//!   external implementations.
//! - [`inference`]: heuristics, update strategies, decode loop, length beam.
//! - [`factorization`]: trace probabilities and masking-chain search.
//! - [`eval`]: BLEU, speedup, sweeps, curves and threshold tuning.
//! - [`corpus`]: TSV corpus I/O and planted-corpus sampling.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod corpus;
pub mod eval;
pub mod factorization;
pub mod inference;
pub mod scorers;
pub mod types;

pub use types::{
    DecodeConfig, DecodeTrace, Example, FixedTSchedule, Heuristic, HeuristicKind, HypothesisState, PositionPrediction,
    StateError, TokenId, TraceStep, UnmaskedToken, UpdateStrategy, Vocab, MASK,
};
