use super::heuristics::{select, unmask_count_fixed_t};
use super::update::apply_update_strategy;
use super::InferenceError;
use crate::scorers::{PositionDistribution, QueryScope, Scorer};
use crate::types::{
    DecodeConfig, DecodeTrace, Heuristic, HypothesisState, PositionPrediction, TokenId, TraceStep, UnmaskedToken,
};

/// Argmax prediction per distribution.
pub fn predictions_from(dists: &[PositionDistribution]) -> Result<Vec<PositionPrediction>, InferenceError> {
    Ok(dists
        .iter()
        .map(PositionDistribution::prediction)
        .collect::<Result<Vec<_>, _>>()?)
}

/// Decodes one output of length `n`.
///
/// Under `update-masked-sub` the loop runs until the mask is empty; the
/// re-masking strategies follow the fixed-T schedule. If the iteration cap
/// is reached with positions still masked, that iteration unmasks all of
/// them and the trace is flagged `forced`.
pub fn decode<S: Scorer + ?Sized>(
    scorer: &S,
    source: &[TokenId],
    n: usize,
    config: &DecodeConfig,
) -> Result<DecodeTrace, InferenceError> {
    config.validate().map_err(InferenceError::InvalidConfig)?;
    let mut state = HypothesisState::new(n)?;
    let cap = config.iteration_cap(n);
    let mut steps = Vec::new();
    let mut forced = false;

    while !state.is_complete() {
        let iteration = state.iteration() + 1;
        let last_chance = iteration >= cap;
        let next = if config.update.is_subset() {
            let dists = scorer.predict(source, &state, QueryScope::Masked)?;
            let preds = predictions_from(&dists)?;
            let decision = select(&config.heuristic, &preds, n, iteration, config.fixed_t_schedule)?;
            let chosen = if last_chance && decision.unmask.len() < preds.len() {
                forced = true;
                preds
            } else {
                decision.chosen()
            };
            state.apply_unmask(&chosen)?
        } else {
            let scope = match config.update {
                crate::types::UpdateStrategy::All => QueryScope::All,
                _ => QueryScope::Masked,
            };
            let dists = scorer.predict(source, &state, scope)?;
            let preds = predictions_from(&dists)?;
            let Heuristic::FixedT { iterations } = config.heuristic else {
                unreachable!("validated: re-masking strategies use fixed-T");
            };
            let masked = state.mask_len();
            let mut count = unmask_count_fixed_t(n, iterations, masked, iteration, config.fixed_t_schedule);
            if last_chance && count < masked {
                forced = true;
                count = masked;
            }
            apply_update_strategy(&state, &preds, config.update, count)?
        };
        steps.push(step_between(&state, &next));
        state = next;
    }

    Ok(DecodeTrace {
        source: source.to_vec(),
        n,
        steps,
        final_tokens: state.tokens().to_vec(),
        norm_score: state.normalized_log_score().expect("decode ends complete"),
        heuristic: Some(config.heuristic.name().to_string()),
        param: Some(config.heuristic.param()),
        update: Some(config.update),
        forced,
    })
}

/// Records what changed: positions committed or rewritten, and positions
/// returned to the mask.
fn step_between(before: &HypothesisState, after: &HypothesisState) -> TraceStep {
    let mut step = TraceStep::default();
    for i in 0..after.len() {
        match (before.token(i), after.token(i)) {
            (Some(_), None) => step.remask.push(i),
            (old, Some(token)) => {
                let changed = old != Some(token) || before.log_score(i) != after.log_score(i);
                if changed {
                    step.unmask.push(UnmaskedToken {
                        position: i,
                        token,
                        prob: after.score(i).expect("unmasked"),
                    });
                }
            }
            (None, None) => {}
        }
    }
    step
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::{PlantedConfig, PlantedMarkovModel};
    use crate::types::UpdateStrategy;

    fn model() -> PlantedMarkovModel {
        PlantedMarkovModel::new(&PlantedConfig {
            target_vocab: 5,
            ..PlantedConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn fixed_t_equal_to_n_is_autoregressive() {
        let m = model();
        let t = decode(
            &m,
            &[1, 2, 3],
            3,
            &DecodeConfig::new(Heuristic::FixedT { iterations: 3 }),
        )
        .unwrap();
        assert_eq!(t.iterations(), 3);
        assert!(t.steps.iter().all(|s| s.unmask.len() == 1));
        t.validate_subset().unwrap();
    }

    #[test]
    fn one_step_configs() {
        let m = model();
        for h in [
            Heuristic::FixedT { iterations: 1 },
            Heuristic::Thresh { tau: 0.0 },
            Heuristic::CombThresh { tau: 0.0 },
        ] {
            let t = decode(&m, &[4, 4], 3, &DecodeConfig::new(h)).unwrap();
            assert_eq!(t.iterations(), 1, "{h}");
            assert_eq!(t.steps[0].unmask.len(), 3);
        }
    }

    #[test]
    fn comb_thresh_one_is_token_by_token() {
        let m = model();
        let t = decode(&m, &[0, 1], 4, &DecodeConfig::new(Heuristic::CombThresh { tau: 1.0 })).unwrap();
        assert_eq!(t.iterations(), 4);
    }

    #[test]
    fn cap_forces_final_unmask() {
        let m = model();
        let cfg = DecodeConfig::new(Heuristic::FixedK { tokens: 1 }).with_max_iterations(2);
        let t = decode(&m, &[0, 1], 5, &cfg).unwrap();
        assert!(t.forced);
        assert_eq!(t.iterations(), 2);
        assert_eq!(t.steps[1].unmask.len(), 4);
        assert!(!t.final_tokens.contains(&crate::types::MASK));
        t.validate_subset().unwrap();
    }

    #[test]
    fn remasking_strategies_replay() {
        let m = model();
        for update in [UpdateStrategy::All, UpdateStrategy::Masked] {
            let cfg = DecodeConfig::new(Heuristic::FixedT { iterations: 3 }).with_update(update);
            let t = decode(&m, &[2, 3, 1], 7, &cfg).unwrap();
            assert_eq!(t.iterations(), 3);
            let last = t.replay().unwrap().pop().unwrap();
            assert_eq!(last.tokens(), t.final_tokens.as_slice());
            assert!((t.recompute_norm_score().unwrap() - t.norm_score).abs() < 1e-12);
        }
        let bad = DecodeConfig::new(Heuristic::Thresh { tau: 0.5 }).with_update(UpdateStrategy::All);
        assert!(matches!(
            decode(&m, &[1], 2, &bad),
            Err(InferenceError::InvalidConfig(_))
        ));
    }

    #[test]
    fn zero_length_is_rejected() {
        let m = model();
        assert!(decode(&m, &[1], 0, &DecodeConfig::new(Heuristic::FixedK { tokens: 1 })).is_err());
    }
}
