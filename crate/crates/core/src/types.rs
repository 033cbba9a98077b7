//! Vocabulary, sequence, hypothesis-state and trace types shared by the
//! scorers, the decode engine and the evaluation code.
//!
//! Every value here is immutable once built. State transitions such as
//! [`HypothesisState::apply_unmask`] return a fresh state.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense token id in `0..V`.
pub type TokenId = u32;

/// Reserved sentinel marking a masked position. Never a valid output token.
pub const MASK: TokenId = TokenId::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("invalid length {0}: sequences must have at least one position")]
    InvalidLength(usize),
    #[error("position {position} is not masked (subset constraint violated)")]
    SubsetViolation { position: usize },
    #[error("position {position} out of range for length {len}")]
    OutOfRange { position: usize, len: usize },
    #[error("position {0} chosen more than once")]
    DuplicatePosition(usize),
    #[error("no position unmasked: every update must make progress")]
    ProgressViolation,
    #[error("invalid probability {prob} for position {position}")]
    InvalidProbability { position: usize, prob: f64 },
    #[error("MASK may not be emitted as a token (position {0})")]
    MaskToken(usize),
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("invalid example: {0}")]
    InvalidExample(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
}

/// Token alphabet. Ids are the dense indices of `symbols`; [`MASK`] is
/// reserved outside that range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
}

impl Vocab {
    pub fn new(symbols: Vec<String>) -> Result<Self, StateError> {
        if symbols.len() < 2 {
            return Err(StateError::InvalidVocab(format!(
                "need at least 2 symbols, got {}",
                symbols.len()
            )));
        }
        let distinct: BTreeSet<&str> = symbols.iter().map(String::as_str).collect();
        if distinct.len() != symbols.len() {
            return Err(StateError::InvalidVocab("duplicate symbols".into()));
        }
        if symbols.len() >= MASK as usize {
            return Err(StateError::InvalidVocab("vocabulary collides with MASK id".into()));
        }
        Ok(Self { symbols })
    }

    /// Vocabulary whose symbols are the decimal ids themselves.
    pub fn numeric(size: usize) -> Result<Self, StateError> {
        Self::new((0..size).map(|i| i.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn mask_id(&self) -> TokenId {
        MASK
    }

    pub fn contains(&self, id: TokenId) -> bool {
        (id as usize) < self.symbols.len()
    }

    pub fn symbol(&self, id: TokenId) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, symbol: &str) -> Option<TokenId> {
        self.symbols.iter().position(|s| s == symbol).map(|i| i as TokenId)
    }
}

/// A source sequence with an optional reference translation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    source: Vec<TokenId>,
    reference: Option<Vec<TokenId>>,
}

impl Example {
    /// Validates ids against the source and target vocabulary sizes.
    pub fn new(
        source: Vec<TokenId>,
        reference: Option<Vec<TokenId>>,
        source_vocab: usize,
        target_vocab: usize,
    ) -> Result<Self, StateError> {
        check_sequence("source", &source, source_vocab)?;
        if let Some(reference) = &reference {
            check_sequence("reference", reference, target_vocab)?;
        }
        Ok(Self { source, reference })
    }

    pub fn source(&self) -> &[TokenId] {
        &self.source
    }

    pub fn reference(&self) -> Option<&[TokenId]> {
        self.reference.as_deref()
    }
}

fn check_sequence(what: &str, seq: &[TokenId], vocab: usize) -> Result<(), StateError> {
    if seq.is_empty() {
        return Err(StateError::InvalidExample(format!("{what} is empty")));
    }
    if let Some((i, &tok)) = seq.iter().enumerate().find(|(_, &t)| t as usize >= vocab) {
        return Err(StateError::InvalidExample(format!(
            "{what} token {tok} at {i} outside vocabulary of size {vocab}"
        )));
    }
    Ok(())
}

/// Argmax prediction for one position and its probability, kept in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionPrediction {
    pub position: usize,
    pub token: TokenId,
    pub log_prob: f64,
}

impl PositionPrediction {
    pub fn new(position: usize, token: TokenId, prob: f64) -> Result<Self, StateError> {
        if token == MASK {
            return Err(StateError::MaskToken(position));
        }
        if !(prob > 0.0 && prob <= 1.0) {
            return Err(StateError::InvalidProbability { position, prob });
        }
        Ok(Self {
            position,
            token,
            log_prob: prob.ln(),
        })
    }

    pub fn prob(&self) -> f64 {
        self.log_prob.exp()
    }
}

/// Partially observed output sequence. Positions holding [`MASK`] form the
/// current mask set; every other position carries the log-probability it
/// was committed with.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisState {
    tokens: Vec<TokenId>,
    log_scores: Vec<f64>,
    iteration: usize,
}

impl HypothesisState {
    /// Fully masked state of length `n` at iteration 0.
    pub fn new(n: usize) -> Result<Self, StateError> {
        if n == 0 {
            return Err(StateError::InvalidLength(0));
        }
        Ok(Self {
            tokens: vec![MASK; n],
            log_scores: vec![f64::NAN; n],
            iteration: 0,
        })
    }

    /// State with every position observed, scores set to probability 1.
    /// Used to condition scorers on a known reference.
    pub fn observed(tokens: &[TokenId]) -> Result<Self, StateError> {
        let mut state = Self::new(tokens.len())?;
        for (i, &t) in tokens.iter().enumerate() {
            if t == MASK {
                return Err(StateError::MaskToken(i));
            }
            state.tokens[i] = t;
            state.log_scores[i] = 0.0;
        }
        Ok(state)
    }

    /// State with the given positions masked and all others observed from
    /// `tokens` with probability 1.
    pub fn with_mask(tokens: &[TokenId], masked: &BTreeSet<usize>) -> Result<Self, StateError> {
        let mut state = Self::observed(tokens)?;
        for &p in masked {
            if p >= tokens.len() {
                return Err(StateError::OutOfRange {
                    position: p,
                    len: tokens.len(),
                });
            }
            state.tokens[p] = MASK;
            state.log_scores[p] = f64::NAN;
        }
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Raw token row, with [`MASK`] at masked positions.
    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn token(&self, position: usize) -> Option<TokenId> {
        self.tokens.get(position).copied().filter(|&t| t != MASK)
    }

    pub fn is_masked(&self, position: usize) -> bool {
        self.tokens.get(position) == Some(&MASK)
    }

    /// Linear probability at an unmasked position.
    pub fn score(&self, position: usize) -> Option<f64> {
        self.log_score(position).map(f64::exp)
    }

    pub fn log_score(&self, position: usize) -> Option<f64> {
        self.token(position).map(|_| self.log_scores[position])
    }

    pub fn mask_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_masked(i)).collect()
    }

    pub fn mask_set(&self) -> BTreeSet<usize> {
        self.mask_positions().into_iter().collect()
    }

    pub fn mask_len(&self) -> usize {
        self.tokens.iter().filter(|&&t| t == MASK).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask_len() == 0
    }

    /// Tokens as options, `None` at masked positions.
    pub fn observed_tokens(&self) -> Vec<Option<TokenId>> {
        self.tokens.iter().map(|&t| (t != MASK).then_some(t)).collect()
    }

    /// Mean natural-log score over all positions; `None` until complete.
    pub fn normalized_log_score(&self) -> Option<f64> {
        self.is_complete()
            .then(|| self.log_scores.iter().sum::<f64>() / self.len() as f64)
    }

    /// Commits `chosen` predictions at currently masked positions.
    pub fn apply_unmask(&self, chosen: &[PositionPrediction]) -> Result<Self, StateError> {
        if chosen.is_empty() {
            return Err(StateError::ProgressViolation);
        }
        let mut next = self.clone();
        let mut seen = BTreeSet::new();
        for pred in chosen {
            self.check_prediction(pred)?;
            if !self.is_masked(pred.position) {
                return Err(StateError::SubsetViolation {
                    position: pred.position,
                });
            }
            if !seen.insert(pred.position) {
                return Err(StateError::DuplicatePosition(pred.position));
            }
            next.tokens[pred.position] = pred.token;
            next.log_scores[pred.position] = pred.log_prob;
        }
        next.iteration += 1;
        Ok(next)
    }

    /// Unconstrained transition used by the re-masking update strategies:
    /// `remask` positions lose their tokens, then `set` overwrites tokens
    /// and scores anywhere.
    pub(crate) fn apply_general(&self, remask: &[usize], set: &[PositionPrediction]) -> Result<Self, StateError> {
        let mut next = self.clone();
        for &p in remask {
            if p >= self.len() {
                return Err(StateError::OutOfRange {
                    position: p,
                    len: self.len(),
                });
            }
            next.tokens[p] = MASK;
            next.log_scores[p] = f64::NAN;
        }
        for pred in set {
            self.check_prediction(pred)?;
            next.tokens[pred.position] = pred.token;
            next.log_scores[pred.position] = pred.log_prob;
        }
        next.iteration += 1;
        Ok(next)
    }

    fn check_prediction(&self, pred: &PositionPrediction) -> Result<(), StateError> {
        if pred.position >= self.len() {
            return Err(StateError::OutOfRange {
                position: pred.position,
                len: self.len(),
            });
        }
        if pred.token == MASK {
            return Err(StateError::MaskToken(pred.position));
        }
        if !(pred.log_prob <= 0.0) || pred.log_prob == f64::NEG_INFINITY {
            return Err(StateError::InvalidProbability {
                position: pred.position,
                prob: pred.log_prob.exp(),
            });
        }
        Ok(())
    }
}

/// Rule for which positions may change and what the next mask may contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UpdateStrategy {
    #[serde(rename = "update-all")]
    All,
    #[serde(rename = "update-masked")]
    Masked,
    #[serde(rename = "update-masked-sub")]
    MaskedSub,
}

impl UpdateStrategy {
    pub const ALL: [UpdateStrategy; 3] = [Self::All, Self::Masked, Self::MaskedSub];

    pub fn name(self) -> &'static str {
        match self {
            Self::All => "update-all",
            Self::Masked => "update-masked",
            Self::MaskedSub => "update-masked-sub",
        }
    }

    pub fn is_subset(self) -> bool {
        self == Self::MaskedSub
    }
}

impl fmt::Display for UpdateStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UpdateStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "update-all" | "all" => Ok(Self::All),
            "update-masked" | "masked" => Ok(Self::Masked),
            "update-masked-sub" | "masked-sub" | "sub" => Ok(Self::MaskedSub),
            other => Err(format!("unknown update strategy `{other}`")),
        }
    }
}

/// Which heuristic family, without its hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeuristicKind {
    FixedT,
    FixedK,
    Thresh,
    CombThresh,
    FcombThresh,
}

impl HeuristicKind {
    pub const ALL: [HeuristicKind; 5] = [
        Self::FixedT,
        Self::FixedK,
        Self::Thresh,
        Self::CombThresh,
        Self::FcombThresh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::FixedT => "fixed-T",
            Self::FixedK => "fixed-K",
            Self::Thresh => "thresh",
            Self::CombThresh => "comb-thresh",
            Self::FcombThresh => "fcomb-thresh",
        }
    }

    pub fn is_threshold(self) -> bool {
        matches!(self, Self::Thresh | Self::CombThresh | Self::FcombThresh)
    }

    /// Builds the heuristic from a textual hyperparameter.
    pub fn with_param(self, param: &str) -> Result<Heuristic, String> {
        let param = param.trim();
        let int = || {
            param
                .parse::<usize>()
                .map_err(|_| format!("{} expects a positive integer, got `{param}`", self.name()))
        };
        let tau = || {
            param
                .parse::<f64>()
                .map_err(|_| format!("{} expects a threshold in [0,1], got `{param}`", self.name()))
        };
        Ok(match self {
            Self::FixedT => Heuristic::FixedT { iterations: int()? },
            Self::FixedK => Heuristic::FixedK { tokens: int()? },
            Self::Thresh => Heuristic::Thresh { tau: tau()? },
            Self::CombThresh => Heuristic::CombThresh { tau: tau()? },
            Self::FcombThresh => Heuristic::FcombThresh { tau: tau()? },
        })
    }

    /// Builds the heuristic from a numeric hyperparameter; integer kinds
    /// reject fractional values.
    pub fn with_value(self, value: f64) -> Result<Heuristic, String> {
        if self.is_threshold() {
            return self.with_param(&value.to_string());
        }
        if value.fract() != 0.0 || value < 0.0 {
            return Err(format!("{} expects an integer, got {value}", self.name()));
        }
        self.with_param(&(value as usize).to_string())
    }
}

impl fmt::Display for HeuristicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeuristicKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fixed-t" | "mask-predict" => Ok(Self::FixedT),
            "fixed-k" => Ok(Self::FixedK),
            "thresh" => Ok(Self::Thresh),
            "comb-thresh" => Ok(Self::CombThresh),
            "fcomb-thresh" => Ok(Self::FcombThresh),
            other => Err(format!("unknown heuristic `{other}`")),
        }
    }
}

/// An unmasking heuristic together with its speed-controlling hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Heuristic {
    /// Mask-predict with a fixed iteration budget.
    FixedT {
        iterations: usize,
    },
    /// Mask-predict with a constant number of tokens per iteration.
    FixedK {
        tokens: usize,
    },
    Thresh {
        tau: f64,
    },
    CombThresh {
        tau: f64,
    },
    FcombThresh {
        tau: f64,
    },
}

impl Heuristic {
    pub fn kind(&self) -> HeuristicKind {
        match self {
            Self::FixedT { .. } => HeuristicKind::FixedT,
            Self::FixedK { .. } => HeuristicKind::FixedK,
            Self::Thresh { .. } => HeuristicKind::Thresh,
            Self::CombThresh { .. } => HeuristicKind::CombThresh,
            Self::FcombThresh { .. } => HeuristicKind::FcombThresh,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind().name()
    }

    pub fn param(&self) -> f64 {
        match *self {
            Self::FixedT { iterations } => iterations as f64,
            Self::FixedK { tokens } => tokens as f64,
            Self::Thresh { tau } | Self::CombThresh { tau } | Self::FcombThresh { tau } => tau,
        }
    }

    /// Hyperparameter as written in CSV rows and traces.
    pub fn param_label(&self) -> String {
        match *self {
            Self::FixedT { iterations } => iterations.to_string(),
            Self::FixedK { tokens } => tokens.to_string(),
            Self::Thresh { tau } | Self::CombThresh { tau } | Self::FcombThresh { tau } => tau.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Self::FixedT { iterations: 0 } => Err("fixed-T requires T >= 1".into()),
            Self::FixedK { tokens: 0 } => Err("fixed-K requires K >= 1".into()),
            Self::Thresh { tau } | Self::CombThresh { tau } | Self::FcombThresh { tau }
                if !(0.0..=1.0).contains(&tau) =>
            {
                Err(format!("{} requires tau in [0,1], got {tau}", self.name()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name(), self.param_label())
    }
}

/// Per-iteration unmask count for fixed-T.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedTSchedule {
    /// `ceil(N / T)` tokens every iteration.
    #[default]
    Ceil,
    /// After iteration `t`, `floor(N * (T - t) / T)` positions stay masked.
    Decay,
}

impl FromStr for FixedTSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ceil" => Ok(Self::Ceil),
            "decay" => Ok(Self::Decay),
            other => Err(format!("unknown fixed-T schedule `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub update: UpdateStrategy,
    pub heuristic: Heuristic,
    pub length_beam: usize,
    /// Safety cap; `None` means `2N`.
    pub max_iterations: Option<usize>,
    pub fixed_t_schedule: FixedTSchedule,
}

impl DecodeConfig {
    pub fn new(heuristic: Heuristic) -> Self {
        Self {
            update: UpdateStrategy::MaskedSub,
            heuristic,
            length_beam: 1,
            max_iterations: None,
            fixed_t_schedule: FixedTSchedule::Ceil,
        }
    }

    pub fn with_update(mut self, update: UpdateStrategy) -> Self {
        self.update = update;
        self
    }

    pub fn with_length_beam(mut self, beam: usize) -> Self {
        self.length_beam = beam;
        self
    }

    pub fn with_max_iterations(mut self, cap: usize) -> Self {
        self.max_iterations = Some(cap);
        self
    }

    pub fn with_schedule(mut self, schedule: FixedTSchedule) -> Self {
        self.fixed_t_schedule = schedule;
        self
    }

    pub fn iteration_cap(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or(2 * n)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.heuristic.validate()?;
        if self.length_beam == 0 {
            return Err("length beam must be >= 1".into());
        }
        if self.max_iterations == Some(0) {
            return Err("max_iterations must be >= 1".into());
        }
        if !self.update.is_subset() && self.heuristic.kind() != HeuristicKind::FixedT {
            return Err(format!(
                "{} only runs with the fixed-T schedule, got {}",
                self.update,
                self.heuristic.name()
            ));
        }
        Ok(())
    }
}

/// One committed token as recorded in a trace: `[position, token, prob]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, TokenId, f64)", into = "(usize, TokenId, f64)")]
pub struct UnmaskedToken {
    pub position: usize,
    pub token: TokenId,
    pub prob: f64,
}

impl From<(usize, TokenId, f64)> for UnmaskedToken {
    fn from((position, token, prob): (usize, TokenId, f64)) -> Self {
        Self { position, token, prob }
    }
}

impl From<UnmaskedToken> for (usize, TokenId, f64) {
    fn from(t: UnmaskedToken) -> Self {
        (t.position, t.token, t.prob)
    }
}

impl From<&PositionPrediction> for UnmaskedToken {
    fn from(p: &PositionPrediction) -> Self {
        Self {
            position: p.position,
            token: p.token,
            prob: p.prob(),
        }
    }
}

/// One iteration: the tokens committed (Y^(t)) and, for re-masking
/// strategies, the positions returned to the mask.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceStep {
    pub unmask: Vec<UnmaskedToken>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub remask: Vec<usize>,
}

/// Full record of one decode: the latent masking sequence plus the tokens
/// and probabilities committed at every iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    #[serde(rename = "src")]
    pub source: Vec<TokenId>,
    pub n: usize,
    pub steps: Vec<TraceStep>,
    #[serde(rename = "final")]
    pub final_tokens: Vec<TokenId>,
    pub norm_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heuristic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update: Option<UpdateStrategy>,
    /// Set when the iteration cap fired and the remainder was unmasked at once.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forced: bool,
}

impl DecodeTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    /// Replays the steps from the fully masked state; element `t` is the
    /// state after iteration `t` (element 0 is the initial state).
    pub fn replay(&self) -> Result<Vec<HypothesisState>, StateError> {
        let mut states = Vec::with_capacity(self.steps.len() + 1);
        let mut state = HypothesisState::new(self.n)?;
        states.push(state.clone());
        for (t, step) in self.steps.iter().enumerate() {
            let preds = step
                .unmask
                .iter()
                .map(|u| PositionPrediction::new(u.position, u.token, u.prob))
                .collect::<Result<Vec<_>, _>>()?;
            state = if step.remask.is_empty() && preds.iter().all(|p| state.is_masked(p.position)) {
                state
                    .apply_unmask(&preds)
                    .map_err(|e| StateError::InvalidTrace(format!("step {}: {e}", t + 1)))?
            } else {
                state.apply_general(&step.remask, &preds)?
            };
            states.push(state.clone());
        }
        Ok(states)
    }

    /// Mask sets M^(0) .. M^(T).
    pub fn mask_sets(&self) -> Result<Vec<BTreeSet<usize>>, StateError> {
        Ok(self.replay()?.iter().map(HypothesisState::mask_set).collect())
    }

    /// Checks the subset-mode invariants: M^(0) is everything, each mask is a
    /// strict subset of the previous one, the last is empty, and replay
    /// reproduces `final_tokens`.
    pub fn validate_subset(&self) -> Result<(), StateError> {
        if self.n == 0 {
            return Err(StateError::InvalidLength(0));
        }
        let mut state = HypothesisState::new(self.n)?;
        for (t, step) in self.steps.iter().enumerate() {
            if !step.remask.is_empty() {
                return Err(StateError::InvalidTrace(format!("step {} re-masks positions", t + 1)));
            }
            let preds = step
                .unmask
                .iter()
                .map(|u| PositionPrediction::new(u.position, u.token, u.prob))
                .collect::<Result<Vec<_>, _>>()?;
            state = state
                .apply_unmask(&preds)
                .map_err(|e| StateError::InvalidTrace(format!("step {}: {e}", t + 1)))?;
        }
        if !state.is_complete() {
            return Err(StateError::InvalidTrace(format!(
                "{} positions still masked after the last step",
                state.mask_len()
            )));
        }
        if state.tokens() != self.final_tokens.as_slice() {
            return Err(StateError::InvalidTrace("replayed tokens differ from final".into()));
        }
        Ok(())
    }

    /// Mean log of the final per-position scores, recomputed from the steps.
    pub fn recompute_norm_score(&self) -> Result<f64, StateError> {
        let last = self.replay()?.pop().expect("replay yields the initial state");
        last.normalized_log_score()
            .ok_or_else(|| StateError::InvalidTrace("trace does not complete".into()))
    }
}
