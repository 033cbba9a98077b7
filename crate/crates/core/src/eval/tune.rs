use super::metrics::{decode_corpus, speedup};
use super::EvalError;
use crate::inference::LengthMode;
use crate::scorers::Scorer;
use crate::types::{DecodeConfig, Example, Heuristic, HeuristicKind};

/// Smallest threshold tried while bracketing from above.
const TAU_FLOOR: f64 = 1e-300;
const MAX_EVALUATIONS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub heuristic: Heuristic,
    pub dev_speedup: f64,
    pub within_tolerance: bool,
    /// Set when the target could not be met; names the closest achievable speedup.
    pub warning: Option<String>,
    pub evaluations: usize,
}

/// Corpus speedup of `config` without computing BLEU.
pub fn measure_speedup<S: Scorer + ?Sized>(
    scorer: &S,
    corpus: &[Example],
    config: &DecodeConfig,
    lengths: LengthMode,
) -> Result<f64, EvalError> {
    let results = decode_corpus(scorer, corpus, config, lengths)?;
    let counts: Vec<(usize, usize)> = results.iter().map(|r| (r.trace.n, r.trace.iterations())).collect();
    speedup(&counts)
}

struct Tracker {
    target: f64,
    best: Option<(Heuristic, f64)>,
    evaluations: usize,
}

impl Tracker {
    fn record(&mut self, h: Heuristic, s: f64) {
        self.evaluations += 1;
        let closer = self
            .best
            .is_none_or(|(_, b)| (s - self.target).abs() < (b - self.target).abs());
        if closer {
            self.best = Some((h, s));
        }
    }

    fn finish(self, tolerance: f64) -> TuneOutcome {
        let (heuristic, dev_speedup) = self.best.expect("at least one evaluation");
        let within = (dev_speedup - self.target).abs() <= tolerance;
        TuneOutcome {
            heuristic,
            dev_speedup,
            within_tolerance: within,
            warning: (!within).then(|| {
                format!(
                    "target speedup {} not reached; closest achievable is {dev_speedup:.4} at {heuristic}",
                    self.target
                )
            }),
            evaluations: self.evaluations,
        }
    }
}

fn check_target(target: f64, tolerance: f64) -> Result<(), EvalError> {
    if !(target >= 1.0) || !(tolerance >= 0.0) {
        return Err(EvalError::InvalidArgument(format!(
            "target speedup must be >= 1 and tolerance >= 0 (got {target}, {tolerance})"
        )));
    }
    Ok(())
}

/// Finds a threshold whose dev-set speedup is within `tolerance` of
/// `target`. Speedup falls as the threshold rises, so the search brackets
/// the target by decades from 1 down towards 0 and then bisects
/// geometrically inside the bracket.
pub fn tune_tau<S: Scorer + ?Sized>(
    scorer: &S,
    dev: &[Example],
    kind: HeuristicKind,
    target: f64,
    tolerance: f64,
    base: &DecodeConfig,
    lengths: LengthMode,
) -> Result<TuneOutcome, EvalError> {
    check_target(target, tolerance)?;
    if !kind.is_threshold() {
        return Err(EvalError::InvalidArgument(format!("{kind} has no threshold")));
    }
    let mut tracker = Tracker {
        target,
        best: None,
        evaluations: 0,
    };
    let eval = |tau: f64, tracker: &mut Tracker| -> Result<f64, EvalError> {
        let h = kind.with_value(tau).map_err(EvalError::InvalidArgument)?;
        let s = measure_speedup(scorer, dev, &DecodeConfig { heuristic: h, ..*base }, lengths)?;
        tracker.record(h, s);
        Ok(s)
    };

    let fastest = eval(0.0, &mut tracker)?;
    if fastest < target - tolerance {
        return Ok(tracker.finish(tolerance));
    }
    let slowest = eval(1.0, &mut tracker)?;
    if (slowest - target).abs() <= tolerance || (fastest - target).abs() <= tolerance {
        return Ok(tracker.finish(tolerance));
    }

    // invariant: speedup(lo) > target > speedup(hi); lo == 0 until bracketed
    let mut lo: f64 = 0.0;
    let mut hi = 1.0;
    while tracker.evaluations < MAX_EVALUATIONS {
        let mid = if lo == 0.0 { hi * 1e-3 } else { (lo * hi).sqrt() };
        if mid < TAU_FLOOR || mid == lo || mid == hi {
            break;
        }
        let s = eval(mid, &mut tracker)?;
        if (s - target).abs() <= tolerance {
            break;
        }
        if s > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(tracker.finish(tolerance))
}

/// Scans `1..=max_param` for the fixed-T or fixed-K setting closest to
/// `target`.
pub fn tune_integer<S: Scorer + ?Sized>(
    scorer: &S,
    dev: &[Example],
    kind: HeuristicKind,
    target: f64,
    tolerance: f64,
    base: &DecodeConfig,
    lengths: LengthMode,
    max_param: usize,
) -> Result<TuneOutcome, EvalError> {
    check_target(target, tolerance)?;
    if kind.is_threshold() || max_param == 0 {
        return Err(EvalError::InvalidArgument(format!(
            "{kind} is not an integer-parameter heuristic"
        )));
    }
    let mut tracker = Tracker {
        target,
        best: None,
        evaluations: 0,
    };
    for p in 1..=max_param {
        let h = kind.with_value(p as f64).map_err(EvalError::InvalidArgument)?;
        let s = measure_speedup(scorer, dev, &DecodeConfig { heuristic: h, ..*base }, lengths)?;
        tracker.record(h, s);
    }
    Ok(tracker.finish(tolerance))
}

/// Matches any heuristic to a target speed on `dev`.
pub fn tune_to_speed<S: Scorer + ?Sized>(
    scorer: &S,
    dev: &[Example],
    kind: HeuristicKind,
    target: f64,
    tolerance: f64,
    base: &DecodeConfig,
    lengths: LengthMode,
) -> Result<TuneOutcome, EvalError> {
    if kind.is_threshold() {
        return tune_tau(scorer, dev, kind, target, tolerance, base, lengths);
    }
    let longest = dev
        .iter()
        .map(|e| e.reference().map_or(e.source().len() + 2, <[_]>::len))
        .max()
        .unwrap_or(1);
    tune_integer(scorer, dev, kind, target, tolerance, base, lengths, longest)
}
