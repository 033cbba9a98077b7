use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthCandidate {
    pub length: usize,
    pub prob: f64,
}

/// Highest-probability entries first, ties to the smaller length, truncated
/// to `beam`.
pub fn top_lengths(dist: &[(usize, f64)], beam: usize) -> Vec<LengthCandidate> {
    let mut ranked: Vec<LengthCandidate> = dist
        .iter()
        .filter(|&&(n, p)| n > 0 && p > 0.0)
        .map(|&(length, prob)| LengthCandidate { length, prob })
        .collect();
    ranked.sort_by(|a, b| b.prob.total_cmp(&a.prob).then(a.length.cmp(&b.length)));
    ranked.truncate(beam);
    ranked
}

/// Discretized triangle centred on the source length with support
/// `max(1, |X|-2) ..= |X|+2` (weights 1,2,3,2,1 before truncation).
pub fn triangular_lengths(source_len: usize) -> Vec<(usize, f64)> {
    let lo = source_len.saturating_sub(2).max(1);
    let hi = source_len + 2;
    let weights: Vec<(usize, f64)> = (lo..=hi).map(|n| (n, 3.0 - n.abs_diff(source_len) as f64)).collect();
    let total: f64 = weights.iter().map(|&(_, w)| w).sum();
    weights.into_iter().map(|(n, w)| (n, w / total)).collect()
}
