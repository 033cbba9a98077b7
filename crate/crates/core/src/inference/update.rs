use std::collections::{BTreeMap, BTreeSet};

use super::heuristics::rank;
use super::InferenceError;
use crate::types::{HypothesisState, PositionPrediction, UpdateStrategy};

/// Applies one iteration of `strategy` given fresh predictions.
///
/// `count` is how many positions leave the mask this iteration; the new
/// mask has `|M| - count` positions (clamped at zero).
/// - `update-all` replaces tokens and scores everywhere and re-masks the
///   lowest-scoring positions among all N;
/// - `update-masked` replaces only masked positions, keeps the scores other
///   positions were committed with, then re-masks the lowest among all N;
/// - `update-masked-sub` commits the `count` best masked predictions and
///   never touches committed positions.
pub fn apply_update_strategy(
    state: &HypothesisState,
    preds: &[PositionPrediction],
    strategy: UpdateStrategy,
    count: usize,
) -> Result<HypothesisState, InferenceError> {
    let masked = state.mask_len();
    let count = count.min(masked);
    if count == 0 {
        return Err(crate::types::StateError::ProgressViolation.into());
    }
    let fresh: BTreeMap<usize, PositionPrediction> = preds.iter().map(|p| (p.position, *p)).collect();
    let require = |pos: usize| fresh.get(&pos).copied().ok_or(InferenceError::MissingPrediction(pos));

    match strategy {
        UpdateStrategy::MaskedSub => {
            let candidates = state
                .mask_positions()
                .into_iter()
                .map(require)
                .collect::<Result<Vec<_>, _>>()?;
            let chosen: Vec<PositionPrediction> = rank(&candidates).into_iter().take(count).collect();
            Ok(state.apply_unmask(&chosen)?)
        }
        UpdateStrategy::All | UpdateStrategy::Masked => {
            let candidates = (0..state.len())
                .map(|pos| match (strategy, state.token(pos)) {
                    (UpdateStrategy::Masked, Some(token)) => Ok(PositionPrediction {
                        position: pos,
                        token,
                        log_prob: state.log_score(pos).expect("unmasked position has a score"),
                    }),
                    _ => require(pos),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let keep = state.len() - (masked - count);
            let ranked = rank(&candidates);
            let kept: Vec<PositionPrediction> = ranked[..keep].to_vec();
            let kept_pos: BTreeSet<usize> = kept.iter().map(|p| p.position).collect();
            let remask: Vec<usize> = (0..state.len())
                .filter(|p| !kept_pos.contains(p) && !state.is_masked(*p))
                .collect();
            Ok(state.apply_general(&remask, &kept)?)
        }
    }
}
