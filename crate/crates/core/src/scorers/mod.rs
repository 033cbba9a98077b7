//! Conditional scorers: the per-position distributions a CMLM produces for
//! a partially observed output, plus output-length prediction.
//!
//! Three implementations ship here:
//! - [`PlantedMarkovModel`], an exact Markov-chain translation model whose
//!   conditionals are computed by constrained forward-backward;
//! - [`CountCmlm`], a count table trained with uniform mask-size sampling;
//! - [`ExternalScorer`], a bridge to a child process speaking JSON lines.

mod count;
mod external;
mod length;
mod planted;

use thiserror::Error;

use crate::types::{HypothesisState, PositionPrediction, StateError, TokenId};

pub use count::{CountCmlm, TrainingConfig, POSITION_BUCKETS, SOURCE_BUCKETS};
pub use external::{
    validate_response, ExternalOptions, ExternalScorer, Handshake, Request, PROTOCOL_NAME, PROTOCOL_VERSION,
};
pub use length::{top_lengths, triangular_lengths, LengthCandidate};
pub use planted::{PlantedConfig, PlantedMarkovModel};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("invalid length {0}")]
    InvalidLength(usize),
    #[error("token {token} at position {position} outside target vocabulary of size {vocab}")]
    InvalidToken {
        position: usize,
        token: TokenId,
        vocab: usize,
    },
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("length beam must be >= 1")]
    InvalidBeam,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("cannot train on zero examples")]
    EmptyModel,
    #[error("protocol error: {reason} (line: {line})")]
    Protocol { line: String, reason: String },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("scorer did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error("response id {got} does not match request id {expected}")]
    Desync { expected: u64, got: u64 },
    #[error("scorer reported error for request {id}: {message}")]
    Remote { id: u64, message: String },
    #[error("failed to launch scorer `{command}`: {source}")]
    Launch { command: String, source: std::io::Error },
    #[error("scorer I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Which positions a query should cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryScope {
    /// Masked positions only.
    Masked,
    /// Every position; an unmasked position is scored with its own token
    /// hidden and everything else as observed.
    All,
}

/// A distribution over target tokens, stored sparsely in ascending token order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    entries: Vec<(TokenId, f64)>,
}

impl TokenDistribution {
    /// Dense distribution; `probs[i]` is the probability of token `i`.
    pub fn dense(probs: Vec<f64>) -> Self {
        Self {
            entries: probs.into_iter().enumerate().map(|(i, p)| (i as TokenId, p)).collect(),
        }
    }

    /// Sparse distribution; entries are sorted by token id.
    pub fn sparse(mut entries: Vec<(TokenId, f64)>) -> Self {
        entries.sort_by_key(|&(t, _)| t);
        Self { entries }
    }

    pub fn entries(&self) -> &[(TokenId, f64)] {
        &self.entries
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.entries
            .binary_search_by_key(&token, |&(t, _)| t)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }

    /// Most probable token; ties go to the lowest id.
    pub fn argmax(&self) -> Option<(TokenId, f64)> {
        self.entries.iter().copied().fold(None, |best, (t, p)| match best {
            Some((_, bp)) if bp >= p => best,
            _ => Some((t, p)),
        })
    }

    /// The `k` most probable entries renormalized to sum to one.
    pub fn top_k(&self, k: usize) -> Self {
        let mut ranked = self.entries.clone();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k.max(1));
        let mass: f64 = ranked.iter().map(|&(_, p)| p).sum();
        Self::sparse(ranked.into_iter().map(|(t, p)| (t, p / mass)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionDistribution {
    pub position: usize,
    pub dist: TokenDistribution,
}

impl PositionDistribution {
    /// Argmax as a prediction ready for the heuristics.
    pub fn prediction(&self) -> Result<PositionPrediction, StateError> {
        let (token, prob) = self.dist.argmax().ok_or(StateError::InvalidProbability {
            position: self.position,
            prob: 0.0,
        })?;
        PositionPrediction::new(self.position, token, prob.min(1.0))
    }
}

/// The conditional model contract: `p(y_i | Y_obs, X, N)` for each queried
/// position, and a distribution over output lengths.
pub trait Scorer: Send + Sync {
    fn target_vocab_size(&self) -> usize;

    /// Distributions for the positions selected by `scope`, in ascending
    /// position order.
    fn predict(
        &self,
        source: &[TokenId],
        state: &HypothesisState,
        scope: QueryScope,
    ) -> Result<Vec<PositionDistribution>, ScorerError>;

    /// Full length distribution `p(N | X)` as `(N, prob)` pairs.
    fn length_distribution(&self, source: &[TokenId]) -> Result<Vec<(usize, f64)>, ScorerError>;

    /// The `beam` most probable lengths, descending, ties to smaller N.
    fn predict_lengths(&self, source: &[TokenId], beam: usize) -> Result<Vec<LengthCandidate>, ScorerError> {
        if source.is_empty() {
            return Err(ScorerError::InvalidSource("empty source".into()));
        }
        if beam == 0 {
            return Err(ScorerError::InvalidBeam);
        }
        Ok(top_lengths(&self.length_distribution(source)?, beam))
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn target_vocab_size(&self) -> usize {
        (**self).target_vocab_size()
    }

    fn predict(
        &self,
        source: &[TokenId],
        state: &HypothesisState,
        scope: QueryScope,
    ) -> Result<Vec<PositionDistribution>, ScorerError> {
        (**self).predict(source, state, scope)
    }

    fn length_distribution(&self, source: &[TokenId]) -> Result<Vec<(usize, f64)>, ScorerError> {
        (**self).length_distribution(source)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn target_vocab_size(&self) -> usize {
        (**self).target_vocab_size()
    }

    fn predict(
        &self,
        source: &[TokenId],
        state: &HypothesisState,
        scope: QueryScope,
    ) -> Result<Vec<PositionDistribution>, ScorerError> {
        (**self).predict(source, state, scope)
    }

    fn length_distribution(&self, source: &[TokenId]) -> Result<Vec<(usize, f64)>, ScorerError> {
        (**self).length_distribution(source)
    }
}

/// FNV-1a over the source ids. Stands in for encoder conditioning in the
/// toy scorers, so it must stay stable across platforms and releases.
pub fn source_hash(source: &[TokenId]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    source.iter().fold(OFFSET, |h, &t| {
        t.to_le_bytes()
            .iter()
            .fold(h, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
    })
}

pub(crate) fn check_state_tokens(state: &HypothesisState, vocab: usize) -> Result<(), ScorerError> {
    if state.is_empty() {
        return Err(ScorerError::InvalidLength(0));
    }
    for (position, tok) in state.observed_tokens().into_iter().enumerate() {
        if let Some(token) = tok {
            if token as usize >= vocab {
                return Err(ScorerError::InvalidToken { position, token, vocab });
            }
        }
    }
    Ok(())
}

pub(crate) fn scoped_positions(state: &HypothesisState, scope: QueryScope) -> Vec<usize> {
    match scope {
        QueryScope::Masked => state.mask_positions(),
        QueryScope::All => (0..state.len()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        let d = TokenDistribution::dense(vec![0.25, 0.375, 0.375]);
        assert_eq!(d.argmax(), Some((1, 0.375)));
        assert_eq!(d.prob(2), 0.375);
        assert_eq!(d.prob(9), 0.0);
    }

    #[test]
    fn top_k_renormalizes() {
        let d = TokenDistribution::dense(vec![0.1, 0.5, 0.2, 0.2]).top_k(2);
        assert_eq!(d.entries().len(), 2);
        assert!((d.total() - 1.0).abs() < 1e-12);
        assert!((d.prob(1) - 0.5 / 0.7).abs() < 1e-12);
        assert!((d.prob(2) - 0.2 / 0.7).abs() < 1e-12);
    }

    #[test]
    fn source_hash_is_stable() {
        assert_eq!(source_hash(&[]), 0xcbf2_9ce4_8422_2325);
        assert_ne!(source_hash(&[1, 2]), source_hash(&[2, 1]));
        assert_eq!(source_hash(&[3, 4, 5]), source_hash(&[3, 4, 5]));
    }
}
