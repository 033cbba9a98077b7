use super::InferenceError;
use crate::types::{FixedTSchedule, Heuristic, PositionPrediction};

/// What a heuristic decided for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicDecision {
    /// Positions to unmask, best-ranked first.
    pub unmask: Vec<usize>,
    pub predictions: Vec<PositionPrediction>,
}

impl HeuristicDecision {
    pub fn chosen(&self) -> Vec<PositionPrediction> {
        self.unmask
            .iter()
            .map(|&p| {
                *self
                    .predictions
                    .iter()
                    .find(|q| q.position == p)
                    .expect("decision positions come from its predictions")
            })
            .collect()
    }
}

/// Predictions sorted by probability, highest first; ties to the lower position.
pub fn rank(preds: &[PositionPrediction]) -> Vec<PositionPrediction> {
    let mut ranked = preds.to_vec();
    ranked.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob).then(a.position.cmp(&b.position)));
    ranked
}

fn top(preds: &[PositionPrediction], count: usize) -> Vec<usize> {
    rank(preds).into_iter().take(count).map(|p| p.position).collect()
}

fn non_empty(preds: &[PositionPrediction]) -> Result<(), InferenceError> {
    if preds.is_empty() {
        Err(InferenceError::EmptyPredictions)
    } else {
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<f64, InferenceError> {
    if (0.0..=1.0).contains(&tau) {
        Ok(tau.ln())
    } else {
        Err(InferenceError::InvalidHyperparameter(format!(
            "tau {tau} outside [0,1]"
        )))
    }
}

/// Mask-predict: the `ceil(n / T)` most probable predictions.
pub fn select_fixed_t(preds: &[PositionPrediction], n: usize, t: usize) -> Result<Vec<usize>, InferenceError> {
    if t == 0 {
        return Err(InferenceError::InvalidHyperparameter("T must be >= 1".into()));
    }
    non_empty(preds)?;
    Ok(top(preds, n.div_ceil(t).min(preds.len())))
}

pub fn select_fixed_k(preds: &[PositionPrediction], k: usize) -> Result<Vec<usize>, InferenceError> {
    if k == 0 {
        return Err(InferenceError::InvalidHyperparameter("K must be >= 1".into()));
    }
    non_empty(preds)?;
    Ok(top(preds, k.min(preds.len())))
}

/// Every prediction with probability above `tau`, else the single best.
pub fn select_thresh(preds: &[PositionPrediction], tau: f64) -> Result<Vec<usize>, InferenceError> {
    let log_tau = check_tau(tau)?;
    non_empty(preds)?;
    let ranked = rank(preds);
    let count = ranked.iter().take_while(|p| p.log_prob > log_tau).count();
    Ok(ranked.iter().take(count.max(1)).map(|p| p.position).collect())
}

/// Largest best-ranked prefix whose joint probability exceeds `tau`, else
/// the single best.
pub fn select_comb_thresh(preds: &[PositionPrediction], tau: f64) -> Result<Vec<usize>, InferenceError> {
    let log_tau = check_tau(tau)?;
    non_empty(preds)?;
    let ranked = rank(preds);
    let mut joint = 0.0;
    let mut count = 0;
    for p in &ranked {
        joint += p.log_prob;
        if joint > log_tau {
            count += 1;
        } else {
            break;
        }
    }
    Ok(ranked.iter().take(count.max(1)).map(|p| p.position).collect())
}

/// Largest best-ranked prefix `Y` with `p(Y) * (1 - p(rest)) > tau`, where
/// `p` multiplies top-1 probabilities and the empty product is one. Falls
/// back to the single best.
pub fn select_fcomb_thresh(preds: &[PositionPrediction], tau: f64) -> Result<Vec<usize>, InferenceError> {
    let log_tau = check_tau(tau)?;
    non_empty(preds)?;
    let ranked = rank(preds);
    let total: f64 = ranked.iter().map(|p| p.log_prob).sum();
    let mut prefix = 0.0;
    let mut count = 0;
    for (i, p) in ranked.iter().enumerate() {
        prefix += p.log_prob;
        let rest = if i + 1 == ranked.len() { 0.0 } else { total - prefix };
        // ln(1 - exp(rest)); -inf when the complement is empty
        let score = prefix + (-rest.exp_m1()).ln();
        if score > log_tau {
            count = i + 1;
        }
    }
    Ok(ranked.iter().take(count.max(1)).map(|p| p.position).collect())
}

/// Unmask count for fixed-T at 1-based iteration `iteration` with `masked`
/// positions still open.
pub fn unmask_count_fixed_t(n: usize, t: usize, masked: usize, iteration: usize, schedule: FixedTSchedule) -> usize {
    let count = match schedule {
        FixedTSchedule::Ceil => n.div_ceil(t),
        FixedTSchedule::Decay => {
            let keep = if iteration >= t { 0 } else { n * (t - iteration) / t };
            masked.saturating_sub(keep)
        }
    };
    count.clamp(1, masked.max(1))
}

/// Runs `heuristic` on the predictions for the current mask. `iteration`
/// is the 1-based index of the iteration being decided.
pub fn select(
    heuristic: &Heuristic,
    preds: &[PositionPrediction],
    n: usize,
    iteration: usize,
    schedule: FixedTSchedule,
) -> Result<HeuristicDecision, InferenceError> {
    let unmask = match *heuristic {
        Heuristic::FixedT { iterations } => match schedule {
            FixedTSchedule::Ceil => select_fixed_t(preds, n, iterations)?,
            FixedTSchedule::Decay => {
                if iterations == 0 {
                    return Err(InferenceError::InvalidHyperparameter("T must be >= 1".into()));
                }
                non_empty(preds)?;
                let count = unmask_count_fixed_t(n, iterations, preds.len(), iteration, schedule);
                top(preds, count)
            }
        },
        Heuristic::FixedK { tokens } => select_fixed_k(preds, tokens)?,
        Heuristic::Thresh { tau } => select_thresh(preds, tau)?,
        Heuristic::CombThresh { tau } => select_comb_thresh(preds, tau)?,
        Heuristic::FcombThresh { tau } => select_fcomb_thresh(preds, tau)?,
    };
    Ok(HeuristicDecision {
        unmask,
        predictions: preds.to_vec(),
    })
}
