use std::collections::HashMap;
use std::hash::Hash;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuOptions {
    pub max_order: usize,
    /// Add one to matches and totals for orders >= 2.
    pub smoothing: bool,
}

impl Default for BleuOptions {
    fn default() -> Self {
        Self {
            max_order: 4,
            smoothing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuBreakdown {
    pub score: f64,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<T: Hash + Eq>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU with one reference per hypothesis, on a 0..100 scale.
pub fn corpus_bleu<T, H, R>(hypotheses: &[H], references: &[R]) -> Result<f64, EvalError>
where
    T: Hash + Eq,
    H: AsRef<[T]>,
    R: AsRef<[T]>,
{
    Ok(corpus_bleu_with(hypotheses, references, BleuOptions::default())?.score)
}

pub fn corpus_bleu_with<T, H, R>(
    hypotheses: &[H],
    references: &[R],
    options: BleuOptions,
) -> Result<BleuBreakdown, EvalError>
where
    T: Hash + Eq,
    H: AsRef<[T]>,
    R: AsRef<[T]>,
{
    if hypotheses.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    let orders = options.max_order.max(1);
    let mut matches = vec![0usize; orders];
    let mut totals = vec![0usize; orders];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        let (h, r) = (h.as_ref(), r.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=orders {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            matches[n - 1] += hc.iter().map(|(g, &c)| c.min(*rc.get(g).unwrap_or(&0))).sum::<usize>();
            totals[n - 1] += h.len().saturating_sub(n - 1);
        }
    }
    let precisions: Vec<f64> = (0..orders)
        .map(|i| {
            let (m, t) = if options.smoothing && i > 0 {
                (matches[i] + 1, totals[i] + 1)
            } else {
                (matches[i], totals[i])
            };
            if t == 0 {
                0.0
            } else {
                m as f64 / t as f64
            }
        })
        .collect();
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let score = if precisions.contains(&0.0) || hyp_len == 0 {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / orders as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuBreakdown {
        score: score.clamp(0.0, 100.0),
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}
