//! Probability accounting for masking sequences.
//!
//! A decode under `update-masked-sub` factorizes the output as a product
//! over iterations of the conditionally independent probabilities of the
//! tokens unmasked at that iteration, each conditioned on everything
//! unmasked before. The mask choice itself is a deterministic function of
//! the state, so only token terms are scored.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::scorers::{QueryScope, Scorer, ScorerError};
use crate::types::{DecodeTrace, HypothesisState, StateError, TokenId};

/// Largest number of chains searched without an explicit budget: every
/// ordered partition of 8 positions.
pub const DEFAULT_CHAIN_BUDGET: u128 = 545_835;

#[derive(Debug, Error)]
pub enum FactorizationError {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("invalid masking chain: {0}")]
    InvalidChain(String),
    #[error("{chains} masking chains for N={n} exceed the budget of {budget}")]
    BudgetExceeded { n: usize, chains: u128, budget: u128 },
    #[error("joint output search is limited to N <= 4 and V <= 4 (got N={n}, V={v})")]
    SearchTooLarge { n: usize, v: usize },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// `log p(Y, M | X)` split into one term per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationScore {
    pub terms: Vec<f64>,
    pub total: f64,
}

impl FactorizationScore {
    fn from_terms(terms: Vec<f64>) -> Self {
        Self {
            total: terms.iter().sum(),
            terms,
        }
    }

    pub fn prob(&self) -> f64 {
        self.total.exp()
    }
}

fn check_chain(n: usize, chain: &[Vec<usize>]) -> Result<(), FactorizationError> {
    let mut seen = BTreeSet::new();
    for (t, block) in chain.iter().enumerate() {
        if block.is_empty() {
            return Err(FactorizationError::InvalidChain(format!(
                "step {} unmasks nothing",
                t + 1
            )));
        }
        for &p in block {
            if p >= n {
                return Err(FactorizationError::InvalidChain(format!("position {p} out of range")));
            }
            if !seen.insert(p) {
                return Err(FactorizationError::InvalidChain(format!(
                    "position {p} unmasked twice (step {})",
                    t + 1
                )));
            }
        }
    }
    if seen.len() != n {
        return Err(FactorizationError::InvalidChain(format!(
            "{} of {n} positions never unmasked",
            n - seen.len()
        )));
    }
    Ok(())
}

/// Scores `target` under the masking chain whose `t`-th block lists the
/// positions unmasked at iteration `t`, querying the scorer afresh on every
/// intermediate state.
pub fn chain_log_prob<S: Scorer + ?Sized>(
    scorer: &S,
    source: &[TokenId],
    target: &[TokenId],
    chain: &[Vec<usize>],
) -> Result<FactorizationScore, FactorizationError> {
    check_chain(target.len(), chain)?;
    let mut masked: BTreeSet<usize> = (0..target.len()).collect();
    let mut terms = Vec::with_capacity(chain.len());
    for block in chain {
        let state = HypothesisState::with_mask(target, &masked)?;
        let dists = scorer.predict(source, &state, QueryScope::Masked)?;
        let mut term = 0.0;
        for &p in block {
            let d = dists
                .iter()
                .find(|d| d.position == p)
                .ok_or_else(|| FactorizationError::InvalidChain(format!("scorer skipped position {p}")))?;
            term += d.dist.prob(target[p]).ln();
        }
        terms.push(term);
        for p in block {
            masked.remove(p);
        }
    }
    Ok(FactorizationScore::from_terms(terms))
}

/// Re-scores a subset-mode trace on its own final tokens.
pub fn trace_log_prob<S: Scorer + ?Sized>(
    scorer: &S,
    source: &[TokenId],
    trace: &DecodeTrace,
) -> Result<FactorizationScore, FactorizationError> {
    trace
        .validate_subset()
        .map_err(|e| FactorizationError::InvalidTrace(e.to_string()))?;
    let chain: Vec<Vec<usize>> = trace
        .steps
        .iter()
        .map(|s| s.unmask.iter().map(|u| u.position).collect())
        .collect();
    chain_log_prob(scorer, source, &trace.final_tokens, &chain)
}

/// Sum of the recorded unmask-time log probabilities of a trace.
pub fn recorded_log_prob(trace: &DecodeTrace) -> f64 {
    trace
        .steps
        .iter()
        .flat_map(|s| s.unmask.iter())
        .map(|u| u.prob.ln())
        .sum()
}

/// Number of ordered set partitions of `n` positions into at most
/// `max_blocks` blocks (all of them when `None`).
pub fn count_chains(n: usize, max_blocks: Option<usize>) -> u128 {
    let m = max_blocks.unwrap_or(n).min(n);
    // surjections onto k labelled blocks: k! S(n, k)
    let mut stirling = vec![vec![0u128; n + 1]; n + 1];
    stirling[0][0] = 1;
    for i in 1..=n {
        for k in 1..=i {
            stirling[i][k] = k as u128 * stirling[i - 1][k] + stirling[i - 1][k - 1];
        }
    }
    let mut fact = 1u128;
    let mut total = 0u128;
    for k in 1..=m {
        fact *= k as u128;
        total += fact * stirling[n][k];
    }
    if n == 0 {
        0
    } else {
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SearchOptions {
    /// Only consider chains with at most this many iterations.
    pub max_iterations: Option<usize>,
    /// Overrides [`DEFAULT_CHAIN_BUDGET`].
    pub chain_budget: Option<u128>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestFactorization {
    pub chain: Vec<Vec<usize>>,
    pub score: FactorizationScore,
}

/// Nonempty subsets of `items` in lexicographic order of their sorted
/// element lists.
fn lex_subsets(items: &[usize]) -> Vec<Vec<usize>> {
    fn walk(items: &[usize], start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for i in start..items.len() {
            cur.push(items[i]);
            out.push(cur.clone());
            walk(items, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::with_capacity((1usize << items.len()) - 1);
    walk(items, 0, &mut Vec::new(), &mut out);
    out
}

struct ChainSearch<'a, S: ?Sized> {
    scorer: &'a S,
    source: &'a [TokenId],
    target: &'a [TokenId],
    max_steps: usize,
    /// mask bitset -> log p(target_i | observed complement) per position
    cache: HashMap<u64, Vec<f64>>,
    best: Option<(f64, Vec<Vec<usize>>, Vec<f64>)>,
}

impl<S: Scorer + ?Sized> ChainSearch<'_, S> {
    fn log_probs(&mut self, mask: u64) -> Result<&[f64], FactorizationError> {
        if !self.cache.contains_key(&mask) {
            let masked: BTreeSet<usize> = (0..self.target.len()).filter(|&i| mask >> i & 1 == 1).collect();
            let state = HypothesisState::with_mask(self.target, &masked)?;
            let mut lp = vec![f64::NAN; self.target.len()];
            for d in self.scorer.predict(self.source, &state, QueryScope::Masked)? {
                lp[d.position] = d.dist.prob(self.target[d.position]).ln();
            }
            self.cache.insert(mask, lp);
        }
        Ok(&self.cache[&mask])
    }

    fn walk(
        &mut self,
        remaining: &[usize],
        chain: &mut Vec<Vec<usize>>,
        terms: &mut Vec<f64>,
    ) -> Result<(), FactorizationError> {
        if remaining.is_empty() {
            let total: f64 = terms.iter().sum();
            if self.best.as_ref().is_none_or(|(b, _, _)| total > *b) {
                self.best = Some((total, chain.clone(), terms.clone()));
            }
            return Ok(());
        }
        if chain.len() == self.max_steps {
            return Ok(());
        }
        let mask = remaining.iter().fold(0u64, |m, &p| m | 1 << p);
        let lp = self.log_probs(mask)?.to_vec();
        let last_step = chain.len() + 1 == self.max_steps;
        for block in lex_subsets(remaining) {
            if last_step && block.len() != remaining.len() {
                continue;
            }
            let rest: Vec<usize> = remaining.iter().copied().filter(|p| !block.contains(p)).collect();
            terms.push(block.iter().map(|&p| lp[p]).sum());
            chain.push(block);
            self.walk(&rest, chain, terms)?;
            chain.pop();
            terms.pop();
        }
        Ok(())
    }
}

/// Exhaustive search for the masking chain that gives `target` the highest
/// probability. Ties keep the first chain in lexicographic enumeration.
pub fn best_factorization<S: Scorer + ?Sized>(
    scorer: &S,
    source: &[TokenId],
    target: &[TokenId],
    options: SearchOptions,
) -> Result<BestFactorization, FactorizationError> {
    let n = target.len();
    if n == 0 {
        return Err(StateError::InvalidLength(0).into());
    }
    let budget = options.chain_budget.unwrap_or(DEFAULT_CHAIN_BUDGET);
    let chains = count_chains(n, options.max_iterations);
    if chains > budget || n > 63 {
        return Err(FactorizationError::BudgetExceeded { n, chains, budget });
    }
    if options.max_iterations == Some(0) {
        return Err(FactorizationError::InvalidChain("max_iterations must be >= 1".into()));
    }
    let mut search = ChainSearch {
        scorer,
        source,
        target,
        max_steps: options.max_iterations.unwrap_or(n).min(n),
        cache: HashMap::new(),
        best: None,
    };
    let all: Vec<usize> = (0..n).collect();
    search.walk(&all, &mut Vec::new(), &mut Vec::new())?;
    let (_, chain, terms) = search.best.expect("at least the one-step chain exists");
    Ok(BestFactorization {
        chain,
        score: FactorizationScore::from_terms(terms),
    })
}

/// Joint search over outputs of length `n` and their masking chains.
pub fn best_output<S: Scorer + ?Sized>(
    scorer: &S,
    source: &[TokenId],
    n: usize,
    options: SearchOptions,
) -> Result<(Vec<TokenId>, BestFactorization), FactorizationError> {
    let v = scorer.target_vocab_size();
    if n == 0 || n > 4 || v > 4 {
        return Err(FactorizationError::SearchTooLarge { n, v });
    }
    let mut best: Option<(Vec<TokenId>, BestFactorization)> = None;
    let mut y = vec![0 as TokenId; n];
    loop {
        let found = best_factorization(scorer, source, &y, options)?;
        if best.as_ref().is_none_or(|(_, b)| found.score.total > b.score.total) {
            best = Some((y.clone(), found));
        }
        // odometer, last position fastest
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(best.expect("vocabulary is non-empty"));
            }
            i -= 1;
            y[i] += 1;
            if (y[i] as usize) < v {
                break;
            }
            y[i] = 0;
        }
    }
}
