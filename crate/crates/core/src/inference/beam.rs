use super::decode::decode;
use super::InferenceError;
use crate::scorers::Scorer;
use crate::types::{DecodeConfig, DecodeTrace, Example, TokenId};

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateResult {
    pub length: usize,
    pub length_prob: f64,
    pub trace: DecodeTrace,
}

impl CandidateResult {
    pub fn normalized_score(&self) -> f64 {
        self.trace.norm_score
    }
}

/// One decode per proposed length; `selected` indexes the candidate with
/// the highest mean log score, ties to the smaller length.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthBeamResult {
    pub candidates: Vec<CandidateResult>,
    /// Lengths whose decode failed, with the error text.
    pub failures: Vec<(usize, String)>,
    pub selected: usize,
}

impl LengthBeamResult {
    pub fn best(&self) -> &CandidateResult {
        &self.candidates[self.selected]
    }

    pub fn into_best(mut self) -> CandidateResult {
        self.candidates.swap_remove(self.selected)
    }
}

/// How the output length is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthMode {
    /// Top-`b` lengths from the scorer's length model.
    Predicted,
    /// The reference length; the length beam is ignored.
    Oracle,
}

pub fn decode_with_length_beam<S: Scorer + ?Sized>(
    scorer: &S,
    source: &[TokenId],
    config: &DecodeConfig,
) -> Result<LengthBeamResult, InferenceError> {
    config.validate().map_err(InferenceError::InvalidConfig)?;
    let lengths = scorer.predict_lengths(source, config.length_beam)?;
    let mut candidates = Vec::with_capacity(lengths.len());
    let mut failures = Vec::new();
    for cand in lengths {
        match decode(scorer, source, cand.length, config) {
            Ok(trace) => candidates.push(CandidateResult {
                length: cand.length,
                length_prob: cand.prob,
                trace,
            }),
            Err(e) => failures.push((cand.length, e.to_string())),
        }
    }
    if candidates.is_empty() {
        return Err(InferenceError::AllCandidatesFailed(failures));
    }
    let selected = select_candidate(&candidates);
    Ok(LengthBeamResult {
        candidates,
        failures,
        selected,
    })
}

fn select_candidate(candidates: &[CandidateResult]) -> usize {
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let b = &candidates[best];
        let better = c.normalized_score() > b.normalized_score()
            || (c.normalized_score() == b.normalized_score() && c.length < b.length);
        if better {
            best = i;
        }
    }
    best
}

/// Decodes one corpus example, either over the length beam or at the
/// reference length.
pub fn decode_example<S: Scorer + ?Sized>(
    scorer: &S,
    example: &Example,
    config: &DecodeConfig,
    lengths: LengthMode,
) -> Result<CandidateResult, InferenceError> {
    match lengths {
        LengthMode::Predicted => Ok(decode_with_length_beam(scorer, example.source(), config)?.into_best()),
        LengthMode::Oracle => {
            let reference = example.reference().ok_or(InferenceError::MissingReference)?;
            let trace = decode(scorer, example.source(), reference.len(), config)?;
            Ok(CandidateResult {
                length: reference.len(),
                length_prob: 1.0,
                trace,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::{PlantedConfig, PlantedMarkovModel};
    use crate::types::Heuristic;

    fn candidate(length: usize, norm_score: f64) -> CandidateResult {
        CandidateResult {
            length,
            length_prob: 0.2,
            trace: DecodeTrace {
                source: vec![0],
                n: length,
                steps: vec![],
                final_tokens: vec![0; length],
                norm_score,
                heuristic: None,
                param: None,
                update: None,
                forced: false,
            },
        }
    }

    #[test]
    fn ties_go_to_shorter_length() {
        let c = vec![candidate(5, -0.5), candidate(3, -0.5), candidate(4, -0.7)];
        assert_eq!(select_candidate(&c), 1);
        let c = vec![candidate(5, -0.4), candidate(3, -0.5)];
        assert_eq!(select_candidate(&c), 0);
    }

    #[test]
    fn beam_of_one_is_plain_decode_at_argmax_length() {
        let m = PlantedMarkovModel::new(&PlantedConfig::default()).unwrap();
        let src = [1, 2, 3, 4];
        let cfg = DecodeConfig::new(Heuristic::CombThresh { tau: 0.3 });
        let r = decode_with_length_beam(&m, &src, &cfg).unwrap();
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.best().length, 4);
        assert_eq!(r.best().trace, decode(&m, &src, 4, &cfg).unwrap());
    }

    #[test]
    fn oracle_needs_reference() {
        let m = PlantedMarkovModel::new(&PlantedConfig::default()).unwrap();
        let ex = Example::new(vec![1, 2], None, 24, 16).unwrap();
        let cfg = DecodeConfig::new(Heuristic::FixedK { tokens: 2 });
        assert!(matches!(
            decode_example(&m, &ex, &cfg, LengthMode::Oracle),
            Err(InferenceError::MissingReference)
        ));
        let ex = Example::new(vec![1, 2], Some(vec![3, 3, 3]), 24, 16).unwrap();
        assert_eq!(decode_example(&m, &ex, &cfg, LengthMode::Oracle).unwrap().length, 3);
    }
}
