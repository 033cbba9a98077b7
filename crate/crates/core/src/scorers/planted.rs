use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::length::triangular_lengths;
use super::{
    check_state_tokens, scoped_positions, source_hash, PositionDistribution, QueryScope, Scorer, ScorerError,
    TokenDistribution,
};
use crate::types::{HypothesisState, TokenId};

/// Generation settings for a [`PlantedMarkovModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedConfig {
    pub seed: u64,
    pub source_vocab: usize,
    pub target_vocab: usize,
    /// Number of distinct chains; a source picks one by hash.
    pub topics: usize,
    /// Dirichlet concentration of each row; small values give peaked chains.
    pub concentration: f64,
    /// Mixing weight of the uniform distribution, keeps every entry positive.
    pub smoothing: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            source_vocab: 24,
            target_vocab: 16,
            topics: 16,
            concentration: 0.15,
            smoothing: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Chain {
    initial: Vec<f64>,
    /// Row-major `V x V`, row `s` is `p(next | s)`.
    transition: Vec<f64>,
}

/// A synthetic translation model. The source selects a Markov chain by
/// hash; the target is a draw from that chain with a length near `|X|`.
/// Every conditional is exactly computable.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedMarkovModel {
    source_vocab: usize,
    target_vocab: usize,
    chains: Vec<Chain>,
}

impl PlantedMarkovModel {
    pub fn new(config: &PlantedConfig) -> Result<Self, ScorerError> {
        if config.target_vocab < 2 || config.source_vocab < 1 || config.topics < 1 {
            return Err(ScorerError::InvalidModel(format!(
                "need target vocab >= 2, source vocab >= 1, topics >= 1 (got {}, {}, {})",
                config.target_vocab, config.source_vocab, config.topics
            )));
        }
        if !(config.concentration > 0.0) || !(0.0 < config.smoothing && config.smoothing <= 1.0) {
            return Err(ScorerError::InvalidModel(
                "concentration must be > 0 and smoothing in (0,1]".into(),
            ));
        }
        let gamma = Gamma::new(config.concentration, 1.0).map_err(|e| ScorerError::InvalidModel(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let v = config.target_vocab;
        let row = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let draws: Vec<f64> = (0..v).map(|_| gamma.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            let smoothed: Vec<f64> = draws
                .iter()
                .map(|&g| {
                    let p = if total > 0.0 { g / total } else { 1.0 / v as f64 };
                    (1.0 - config.smoothing) * p + config.smoothing / v as f64
                })
                .collect();
            normalize(smoothed)
        };
        let chains = (0..config.topics)
            .map(|_| {
                let initial = row(&mut rng);
                let transition = (0..v).flat_map(|_| row(&mut rng)).collect();
                Chain { initial, transition }
            })
            .collect();
        Ok(Self {
            source_vocab: config.source_vocab,
            target_vocab: v,
            chains,
        })
    }

    /// A single-chain model with explicit parameters, used for worked
    /// examples. Rows are renormalized.
    pub fn from_chain(source_vocab: usize, initial: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self, ScorerError> {
        let v = initial.len();
        if v < 2 || transition.len() != v || transition.iter().any(|r| r.len() != v) {
            return Err(ScorerError::InvalidModel(
                "initial must have V >= 2 entries and transition must be V x V".into(),
            ));
        }
        let positive = |r: &[f64]| r.iter().all(|&p| p > 0.0 && p.is_finite());
        if !positive(&initial) || !transition.iter().all(|r| positive(r)) {
            return Err(ScorerError::InvalidModel(
                "all chain parameters must be strictly positive".into(),
            ));
        }
        Ok(Self {
            source_vocab: source_vocab.max(1),
            target_vocab: v,
            chains: vec![Chain {
                initial: normalize(initial),
                transition: transition.into_iter().flat_map(normalize).collect(),
            }],
        })
    }

    pub fn source_vocab(&self) -> usize {
        self.source_vocab
    }

    pub fn topics(&self) -> usize {
        self.chains.len()
    }

    pub fn topic_of(&self, source: &[TokenId]) -> usize {
        (source_hash(source) % self.chains.len() as u64) as usize
    }

    fn chain(&self, source: &[TokenId]) -> &Chain {
        &self.chains[self.topic_of(source)]
    }

    pub fn initial(&self, source: &[TokenId]) -> &[f64] {
        &self.chain(source).initial
    }

    /// Transition probability `p(to | from)` for the chain `source` selects.
    pub fn transition(&self, source: &[TokenId], from: TokenId, to: TokenId) -> f64 {
        self.chain(source).transition[from as usize * self.target_vocab + to as usize]
    }

    /// `log p(Y | X, N)` under the chain; never includes the length term.
    pub fn joint_log_prob(&self, source: &[TokenId], target: &[TokenId]) -> Result<f64, ScorerError> {
        if target.is_empty() {
            return Err(ScorerError::InvalidLength(0));
        }
        let v = self.target_vocab;
        if let Some((position, &token)) = target.iter().enumerate().find(|(_, &t)| t as usize >= v) {
            return Err(ScorerError::InvalidToken {
                position,
                token,
                vocab: v,
            });
        }
        let chain = self.chain(source);
        let mut lp = chain.initial[target[0] as usize].ln();
        for w in target.windows(2) {
            lp += chain.transition[w[0] as usize * v + w[1] as usize].ln();
        }
        Ok(lp)
    }

    pub fn sample_source<R: Rng + ?Sized>(&self, rng: &mut R, min_len: usize, max_len: usize) -> Vec<TokenId> {
        let len = rng.random_range(min_len.max(1)..=max_len.max(min_len.max(1)));
        (0..len)
            .map(|_| rng.random_range(0..self.source_vocab) as TokenId)
            .collect()
    }

    /// Draws `N ~ p(N | X)` then `Y ~ p(Y | X, N)`.
    pub fn sample_target<R: Rng + ?Sized>(&self, source: &[TokenId], rng: &mut R) -> Vec<TokenId> {
        let lengths = triangular_lengths(source.len());
        let n = lengths[sample_index(rng, lengths.iter().map(|&(_, p)| p))].0;
        let chain = self.chain(source);
        let v = self.target_vocab;
        let mut out = Vec::with_capacity(n);
        let mut cur = sample_index(rng, chain.initial.iter().copied());
        out.push(cur as TokenId);
        for _ in 1..n {
            cur = sample_index(rng, chain.transition[cur * v..(cur + 1) * v].iter().copied());
            out.push(cur as TokenId);
        }
        out
    }

    /// Posterior marginals `p(y_i | Y_obs, X, N)` by forward-backward with
    /// observed positions clamped. For observed positions the marginal
    /// leaves that position's own observation out.
    pub fn conditional(
        &self,
        source: &[TokenId],
        state: &HypothesisState,
        scope: QueryScope,
    ) -> Result<Vec<PositionDistribution>, ScorerError> {
        check_state_tokens(state, self.target_vocab)?;
        let positions = scoped_positions(state, scope);
        if positions.is_empty() {
            return Ok(Vec::new());
        }
        let v = self.target_vocab;
        let n = state.len();
        let chain = self.chain(source);
        let observed = state.observed_tokens();
        let clamp = |i: usize, s: usize| match observed[i] {
            Some(t) => (t as usize == s) as u8 as f64,
            None => 1.0,
        };

        // forward[i][s] ∝ p(obs before i, y_i = s); position i itself unclamped
        let mut forward = vec![0.0; n * v];
        forward[..v].copy_from_slice(&chain.initial);
        normalize_in_place(&mut forward[..v]);
        for i in 1..n {
            let (prev, cur) = forward.split_at_mut(i * v);
            let prev = &prev[(i - 1) * v..];
            let cur = &mut cur[..v];
            for s in 0..v {
                let w = prev[s] * clamp(i - 1, s);
                if w == 0.0 {
                    continue;
                }
                let row = &chain.transition[s * v..(s + 1) * v];
                for (c, &a) in cur.iter_mut().zip(row) {
                    *c += w * a;
                }
            }
            normalize_in_place(cur);
        }

        // backward[i][s] ∝ p(obs after i | y_i = s)
        let mut backward = vec![0.0; n * v];
        backward[(n - 1) * v..].fill(1.0);
        for i in (0..n - 1).rev() {
            let (cur, next) = backward.split_at_mut((i + 1) * v);
            let next = &next[..v];
            let cur = &mut cur[i * v..];
            for s in 0..v {
                let row = &chain.transition[s * v..(s + 1) * v];
                cur[s] = row
                    .iter()
                    .zip(next)
                    .enumerate()
                    .map(|(t, (&a, &b))| a * clamp(i + 1, t) * b)
                    .sum();
            }
            normalize_in_place(cur);
        }

        Ok(positions
            .into_iter()
            .map(|i| {
                let probs: Vec<f64> = (0..v).map(|s| forward[i * v + s] * backward[i * v + s]).collect();
                PositionDistribution {
                    position: i,
                    dist: TokenDistribution::dense(normalize(probs)),
                }
            })
            .collect())
    }
}

impl Scorer for PlantedMarkovModel {
    fn target_vocab_size(&self) -> usize {
        self.target_vocab
    }

    fn predict(
        &self,
        source: &[TokenId],
        state: &HypothesisState,
        scope: QueryScope,
    ) -> Result<Vec<PositionDistribution>, ScorerError> {
        self.conditional(source, state, scope)
    }

    fn length_distribution(&self, source: &[TokenId]) -> Result<Vec<(usize, f64)>, ScorerError> {
        if source.is_empty() {
            return Err(ScorerError::InvalidSource("empty source".into()));
        }
        Ok(triangular_lengths(source.len()))
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    normalize_in_place(&mut v);
    v
}

fn normalize_in_place(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
}

fn sample_index<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            if u < w {
                return i;
            }
            u -= w;
        }
    }
    last
}
