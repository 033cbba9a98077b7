use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::length::triangular_lengths;
use super::{
    check_state_tokens, scoped_positions, source_hash, PlantedMarkovModel, PositionDistribution, QueryScope, Scorer,
    ScorerError, TokenDistribution,
};
use crate::types::{Example, HypothesisState, TokenId};

pub const POSITION_BUCKETS: usize = 4;
pub const SOURCE_BUCKETS: usize = 16;
const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub examples: usize,
    pub seed: u64,
    pub source_len_min: usize,
    pub source_len_max: usize,
    pub alpha: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            examples: 50_000,
            seed: 7,
            source_len_min: 6,
            source_len_max: 24,
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// A toy CMLM: token counts keyed by the observed left and right neighbour
/// (token, MASK or boundary), a relative-position bucket and a source bucket,
/// with add-alpha smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct CountCmlm {
    target_vocab: usize,
    alpha: f64,
    token_counts: Vec<u32>,
    context_totals: Vec<u32>,
    /// source length -> (target length -> count)
    length_counts: BTreeMap<usize, BTreeMap<usize, u32>>,
    length_support: (usize, usize),
}

/// One training example after masking: the source, the full target and the
/// mask drawn for it.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedExample {
    pub source: Vec<TokenId>,
    pub target: Vec<TokenId>,
    pub masked: Vec<usize>,
}

impl CountCmlm {
    fn empty(target_vocab: usize, alpha: f64) -> Self {
        let contexts = Self::context_count(target_vocab);
        Self {
            target_vocab,
            alpha,
            token_counts: vec![0; contexts * target_vocab],
            context_totals: vec![0; contexts],
            length_counts: BTreeMap::new(),
            length_support: (usize::MAX, 0),
        }
    }

    fn context_count(v: usize) -> usize {
        (v + 2) * (v + 2) * POSITION_BUCKETS * SOURCE_BUCKETS
    }

    /// Samples `(X, Y)` pairs from `data`, draws `S ~ U{1..N}` and `S`
    /// positions without replacement, and counts every masked target.
    pub fn train(config: &TrainingConfig, data: &PlantedMarkovModel) -> Result<Self, ScorerError> {
        if config.examples == 0 {
            return Err(ScorerError::EmptyModel);
        }
        if !(config.alpha > 0.0) {
            return Err(ScorerError::InvalidModel("alpha must be > 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let examples = (0..config.examples).map(|_| {
            let source = data.sample_source(&mut rng, config.source_len_min, config.source_len_max);
            let target = data.sample_target(&source, &mut rng);
            let masked = sample_mask(&mut rng, target.len());
            MaskedExample { source, target, masked }
        });
        Self::from_masked_examples(data.target_vocab_size(), config.alpha, examples)
    }

    /// Trains on the reference side of a corpus, drawing `passes` random
    /// masks per pair. Pairs without a reference are skipped.
    pub fn train_on_corpus(
        corpus: &[Example],
        target_vocab: usize,
        alpha: f64,
        passes: usize,
        seed: u64,
    ) -> Result<Self, ScorerError> {
        if !(alpha > 0.0) {
            return Err(ScorerError::InvalidModel("alpha must be > 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut examples = Vec::new();
        for _ in 0..passes {
            for ex in corpus {
                if let Some(target) = ex.reference().filter(|t| !t.is_empty()) {
                    examples.push(MaskedExample {
                        source: ex.source().to_vec(),
                        target: target.to_vec(),
                        masked: sample_mask(&mut rng, target.len()),
                    });
                }
            }
        }
        Self::from_masked_examples(target_vocab, alpha, examples)
    }

    /// Builds the tables from already-masked examples.
    pub fn from_masked_examples(
        target_vocab: usize,
        alpha: f64,
        examples: impl IntoIterator<Item = MaskedExample>,
    ) -> Result<Self, ScorerError> {
        let mut model = Self::empty(target_vocab, alpha);
        let mut seen = 0usize;
        for ex in examples {
            model.add_example(&ex)?;
            seen += 1;
        }
        if seen == 0 {
            return Err(ScorerError::EmptyModel);
        }
        Ok(model)
    }

    fn add_example(&mut self, ex: &MaskedExample) -> Result<(), ScorerError> {
        let v = self.target_vocab;
        check_state_tokens(&HypothesisState::observed(&ex.target)?, v)?;
        let masked: std::collections::BTreeSet<usize> = ex.masked.iter().copied().collect();
        let state = HypothesisState::with_mask(&ex.target, &masked)?;
        let bucket = source_bucket(&ex.source);
        for &i in &masked {
            let ctx = self.context_index(&state, i, bucket);
            self.token_counts[ctx * v + ex.target[i] as usize] += 1;
            self.context_totals[ctx] += 1;
        }
        let n = ex.target.len();
        *self
            .length_counts
            .entry(ex.source.len())
            .or_default()
            .entry(n)
            .or_insert(0) += 1;
        self.length_support = (self.length_support.0.min(n), self.length_support.1.max(n));
        Ok(())
    }

    fn context_index(&self, state: &HypothesisState, i: usize, src_bucket: usize) -> usize {
        let v = self.target_vocab;
        let boundary = v + 1;
        let neighbour = |j: Option<usize>| match j {
            None => boundary,
            Some(j) => state.token(j).map_or(v, |t| t as usize),
        };
        let left = neighbour(i.checked_sub(1));
        let right = neighbour((i + 1 < state.len()).then_some(i + 1));
        let pos_bucket = (i * POSITION_BUCKETS / state.len()).min(POSITION_BUCKETS - 1);
        ((left * (v + 2) + right) * POSITION_BUCKETS + pos_bucket) * SOURCE_BUCKETS + src_bucket
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of masked positions counted for the context of position `i`.
    pub fn context_total(&self, source: &[TokenId], state: &HypothesisState, i: usize) -> u32 {
        self.context_totals[self.context_index(state, i, source_bucket(source))]
    }

    fn distribution(&self, ctx: usize) -> Vec<f64> {
        let v = self.target_vocab;
        let denom = self.context_totals[ctx] as f64 + self.alpha * v as f64;
        self.token_counts[ctx * v..(ctx + 1) * v]
            .iter()
            .map(|&c| (c as f64 + self.alpha) / denom)
            .collect()
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<(), ScorerError> {
        let v = self.target_vocab;
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            target_vocab: v,
            alpha: self.alpha,
            position_buckets: POSITION_BUCKETS,
            source_buckets: SOURCE_BUCKETS,
            token_counts: self
                .token_counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i / v, (i % v) as TokenId, c))
                .collect(),
            length_counts: self
                .length_counts
                .iter()
                .flat_map(|(&s, m)| m.iter().map(move |(&n, &c)| (s, n, c)))
                .collect(),
        };
        serde_json::to_writer(writer, &file).map_err(|e| ScorerError::InvalidModel(e.to_string()))
    }

    pub fn load<R: Read>(reader: R) -> Result<Self, ScorerError> {
        let file: ModelFile = serde_json::from_reader(reader).map_err(|e| ScorerError::InvalidModel(e.to_string()))?;
        if file.format != MODEL_FORMAT
            || file.position_buckets != POSITION_BUCKETS
            || file.source_buckets != SOURCE_BUCKETS
        {
            return Err(ScorerError::InvalidModel("unsupported model layout".into()));
        }
        if file.target_vocab < 2 || !(file.alpha > 0.0) {
            return Err(ScorerError::InvalidModel("bad vocabulary or alpha".into()));
        }
        let mut model = Self::empty(file.target_vocab, file.alpha);
        let contexts = model.context_totals.len();
        for (ctx, tok, c) in file.token_counts {
            if ctx >= contexts || tok as usize >= file.target_vocab {
                return Err(ScorerError::InvalidModel(format!(
                    "count entry ({ctx}, {tok}) out of range"
                )));
            }
            model.token_counts[ctx * file.target_vocab + tok as usize] += c;
            model.context_totals[ctx] += c;
        }
        for (s, n, c) in file.length_counts {
            *model.length_counts.entry(s).or_default().entry(n).or_insert(0) += c;
            model.length_support = (model.length_support.0.min(n), model.length_support.1.max(n));
        }
        if model.length_counts.is_empty() {
            return Err(ScorerError::EmptyModel);
        }
        Ok(model)
    }
}

const MODEL_FORMAT: &str = "cmlm-count-v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    target_vocab: usize,
    alpha: f64,
    position_buckets: usize,
    source_buckets: usize,
    token_counts: Vec<(usize, TokenId, u32)>,
    length_counts: Vec<(usize, usize, u32)>,
}

fn source_bucket(source: &[TokenId]) -> usize {
    (source_hash(source) % SOURCE_BUCKETS as u64) as usize
}

/// Uniform mask size in `1..=n`, then that many distinct positions.
pub(crate) fn sample_mask<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let size = rng.random_range(1..=n);
    let mut positions = sample(rng, n, size).into_vec();
    positions.sort_unstable();
    positions
}

impl Scorer for CountCmlm {
    fn target_vocab_size(&self) -> usize {
        self.target_vocab
    }

    fn predict(
        &self,
        source: &[TokenId],
        state: &HypothesisState,
        scope: QueryScope,
    ) -> Result<Vec<PositionDistribution>, ScorerError> {
        check_state_tokens(state, self.target_vocab)?;
        let bucket = source_bucket(source);
        Ok(scoped_positions(state, scope)
            .into_iter()
            .map(|i| PositionDistribution {
                position: i,
                dist: TokenDistribution::dense(self.distribution(self.context_index(state, i, bucket))),
            })
            .collect())
    }

    fn length_distribution(&self, source: &[TokenId]) -> Result<Vec<(usize, f64)>, ScorerError> {
        if source.is_empty() {
            return Err(ScorerError::InvalidSource("empty source".into()));
        }
        let Some(counts) = self.length_counts.get(&source.len()) else {
            // unseen source length: the same prior the planted data uses
            return Ok(triangular_lengths(source.len()));
        };
        let (lo, hi) = self.length_support;
        let total: u32 = counts.values().sum();
        let denom = total as f64 + self.alpha * (hi - lo + 1) as f64;
        Ok((lo..=hi)
            .map(|n| (n, (*counts.get(&n).unwrap_or(&0) as f64 + self.alpha) / denom))
            .collect())
    }
}
