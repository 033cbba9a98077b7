//! Independent oracles shared by the integration tests. Nothing here calls
//! the code under test for the quantity it checks.

#![allow(dead_code)]

use cmlm_core::scorers::{
    PlantedConfig, PlantedMarkovModel, PositionDistribution, QueryScope, Scorer, ScorerError, TokenDistribution,
};
use cmlm_core::{HypothesisState, TokenId};
use rand::Rng;

/// `p(Y | X, N)` computed straight from the chain parameters.
pub fn chain_prob(model: &PlantedMarkovModel, source: &[TokenId], y: &[TokenId]) -> f64 {
    let mut p = model.initial(source)[y[0] as usize];
    for w in y.windows(2) {
        p *= model.transition(source, w[0], w[1]);
    }
    p
}

/// Every sequence of length `n` over `0..v`, in lexicographic order.
pub fn all_sequences(n: usize, v: usize) -> Vec<Vec<TokenId>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..v as TokenId).map(move |t| {
                    let mut s = s.clone();
                    s.push(t);
                    s
                })
            })
            .collect();
    }
    out
}

/// Posterior of `y_i` given the observed positions other than `i`, by
/// summing the joint over every completion.
pub fn brute_marginal(
    model: &PlantedMarkovModel,
    source: &[TokenId],
    observed: &[Option<TokenId>],
    i: usize,
) -> Vec<f64> {
    let v = model.target_vocab_size();
    let mut mass = vec![0.0; v];
    for y in all_sequences(observed.len(), v) {
        let consistent = observed
            .iter()
            .enumerate()
            .all(|(j, o)| j == i || o.is_none_or(|t| t == y[j]));
        if consistent {
            mass[y[i] as usize] += chain_prob(model, source, &y);
        }
    }
    let z: f64 = mass.iter().sum();
    mass.iter().map(|m| m / z).collect()
}

pub fn small_planted(seed: u64, v: usize) -> PlantedMarkovModel {
    PlantedMarkovModel::new(&PlantedConfig {
        seed,
        source_vocab: 6,
        target_vocab: v,
        topics: 4,
        concentration: 0.5,
        smoothing: 0.05,
    })
    .unwrap()
}

pub fn random_source<R: Rng>(rng: &mut R, max_len: usize) -> Vec<TokenId> {
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| rng.random_range(0..6)).collect()
}

/// A random state of length `n` over `v` with each position masked with
/// probability one half.
pub fn random_state<R: Rng>(rng: &mut R, n: usize, v: usize) -> Vec<Option<TokenId>> {
    (0..n)
        .map(|_| rng.random_bool(0.5).then(|| rng.random_range(0..v as TokenId)))
        .collect()
}

pub fn state_from(observed: &[Option<TokenId>]) -> HypothesisState {
    let tokens: Vec<TokenId> = observed.iter().map(|o| o.unwrap_or(0)).collect();
    let masked = observed
        .iter()
        .enumerate()
        .filter(|(_, o)| o.is_none())
        .map(|(i, _)| i)
        .collect();
    HypothesisState::with_mask(&tokens, &masked).unwrap()
}

/// Reference BLEU: n-gram matches are counted by pairing each hypothesis
/// n-gram with an unused equal reference n-gram.
pub fn brute_bleu(hyps: &[Vec<u32>], refs: &[Vec<u32>], max_order: usize) -> f64 {
    let mut matched = vec![0usize; max_order];
    let mut total = vec![0usize; max_order];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len();
        r += rf.len();
        for n in 1..=max_order {
            if h.len() < n {
                continue;
            }
            let ref_grams: Vec<&[u32]> = if rf.len() >= n {
                rf.windows(n).collect()
            } else {
                Vec::new()
            };
            let mut used = vec![false; ref_grams.len()];
            for g in h.windows(n) {
                total[n - 1] += 1;
                if let Some(k) = (0..ref_grams.len()).find(|&k| !used[k] && ref_grams[k] == g) {
                    used[k] = true;
                    matched[n - 1] += 1;
                }
            }
        }
    }
    if c == 0 || matched.contains(&0) {
        return 0.0;
    }
    let mut geo = 1.0;
    for n in 0..max_order {
        geo *= matched[n] as f64 / total[n] as f64;
    }
    geo = geo.powf(1.0 / max_order as f64);
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    100.0 * bp * geo
}

/// Returns the same per-position distributions whatever the state holds,
/// so several heuristics can be compared on identical scorer outputs.
#[derive(Debug, Clone)]
pub struct TableScorer {
    pub rows: Vec<Vec<f64>>,
}

impl Scorer for TableScorer {
    fn target_vocab_size(&self) -> usize {
        self.rows[0].len()
    }

    fn predict(
        &self,
        _source: &[TokenId],
        state: &HypothesisState,
        scope: QueryScope,
    ) -> Result<Vec<PositionDistribution>, ScorerError> {
        Ok((0..state.len())
            .filter(|&i| scope == QueryScope::All || state.is_masked(i))
            .map(|i| PositionDistribution {
                position: i,
                dist: TokenDistribution::dense(self.rows[i].clone()),
            })
            .collect())
    }

    fn length_distribution(&self, _source: &[TokenId]) -> Result<Vec<(usize, f64)>, ScorerError> {
        Ok(vec![(self.rows.len(), 1.0)])
    }
}

pub fn random_table<R: Rng>(rng: &mut R, n: usize, v: usize) -> TableScorer {
    TableScorer {
        rows: (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..v).map(|_| rng.random_range(0.05..1.0)).collect();
                let z: f64 = w.iter().sum();
                w.into_iter().map(|x| x / z).collect()
            })
            .collect(),
    }
}
