//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion. Runs without
//! the libtest harness so the lines always print; exits non-zero if any
//! criterion fails.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use cmlm_core::corpus::sample_corpus;
use cmlm_core::eval::{
    corpus_bleu, corpus_bleu_with, evaluate, iterations_vs_length, measure_speedup, sweep, tune_tau, tune_to_speed,
    BleuOptions, LengthBucket,
};
use cmlm_core::factorization::{chain_log_prob, trace_log_prob};
use cmlm_core::inference::{
    decode, decode_example, select_comb_thresh, select_fcomb_thresh, select_fixed_k, select_fixed_t, select_thresh,
    InferenceError, LengthMode,
};
use cmlm_core::scorers::{CountCmlm, PlantedConfig, PlantedMarkovModel, QueryScope, Scorer, TrainingConfig};
use cmlm_core::{
    DecodeConfig, DecodeTrace, Example, FixedTSchedule, Heuristic, HeuristicKind, PositionPrediction, TokenId,
};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PROB_TOL: f64 = 1e-9;
const MARGINAL_TOL: f64 = 1e-10;
const BLEU_TOL: f64 = 1e-6;
const AUTOREGRESSIVE_BLEU_TOL: f64 = 0.5;
const SPAN_LOW: f64 = 1.5;
const SPAN_HIGH: f64 = 6.0;
const TUNE_TEST_TOL: f64 = 1.0;

const CORPUS_SIZE: usize = 2000;
const SOURCE_LEN: (usize, usize) = (6, 24);
const LENGTH_BEAM: usize = 5;

type Outcome = Result<String, String>;

struct Suite {
    failed: usize,
}

impl Suite {
    fn run(&mut self, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; took {elapsed:.1?}, budget {budget:?}")),
            Err(d) => (false, d),
        };
        if !ok {
            self.failed += 1;
        }
        println!(
            "[{}] {name} ({:.2}s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn figure_one() -> Outcome {
    let model = PlantedMarkovModel::from_chain(
        4,
        vec![0.5, 0.3, 0.2],
        vec![vec![0.1, 0.6, 0.3], vec![0.2, 0.2, 0.6], vec![0.7, 0.2, 0.1]],
    )
    .map_err(e2s)?;
    let src = [1, 2];
    let y: [TokenId; 3] = [0, 1, 2];
    let (a, b, c) = (Some(y[0]), Some(y[1]), Some(y[2]));
    let m = |obs: [Option<TokenId>; 3], i: usize| brute_marginal(&model, &src, &obs, i)[y[i] as usize];
    type Block = (&'static str, Vec<Vec<usize>>, Vec<f64>);
    let blocks: [Block; 3] = [
        (
            "{a,b,c}",
            vec![vec![0, 1, 2]],
            vec![m([None; 3], 0) * m([None; 3], 1) * m([None; 3], 2)],
        ),
        (
            "a,b,c",
            vec![vec![0], vec![1], vec![2]],
            vec![m([None; 3], 0), m([a, None, None], 1), m([a, b, None], 2)],
        ),
        (
            "{a,c},b",
            vec![vec![0, 2], vec![1]],
            vec![m([None; 3], 0) * m([None; 3], 2), m([a, None, c], 1)],
        ),
    ];
    let mut details = Vec::new();
    for (label, chain, factors) in blocks {
        // record the chain as a decode trace so it goes through trace_log_prob
        let trace = trace_for(&model, &src, &y, &chain)?;
        let scored = trace_log_prob(&model, &src, &trace).map_err(e2s)?;
        ensure(scored.terms.len() == factors.len(), || {
            format!("{label}: wrong number of factors")
        })?;
        for (t, (got, want)) in scored.terms.iter().zip(&factors).enumerate() {
            ensure((got.exp() - want).abs() <= PROB_TOL, || {
                format!("{label} factor {}: {} vs {want}", t + 1, got.exp())
            })?;
        }
        let product: f64 = factors.iter().product();
        ensure((scored.prob() - product).abs() <= PROB_TOL, || {
            format!("{label}: product mismatch")
        })?;
        details.push(format!("{label}={:.6}", scored.prob()));
    }
    let joint = chain_prob(&model, &src, &y);
    let ltr = chain_log_prob(&model, &src, &y, &[vec![0], vec![1], vec![2]]).map_err(e2s)?;
    ensure((ltr.prob() - joint).abs() <= PROB_TOL, || {
        "left-to-right chain differs from the joint".into()
    })?;
    Ok(format!("{} (joint {joint:.6})", details.join(", ")))
}

/// A trace that unmasks `chain` over `y`, with unmask-time probabilities
/// taken from the scorer.
fn trace_for(
    scorer: &PlantedMarkovModel,
    src: &[TokenId],
    y: &[TokenId],
    chain: &[Vec<usize>],
) -> Result<DecodeTrace, String> {
    let mut masked: BTreeSet<usize> = (0..y.len()).collect();
    let mut steps = Vec::new();
    for block in chain {
        let state = cmlm_core::HypothesisState::with_mask(y, &masked).map_err(e2s)?;
        let dists = scorer.predict(src, &state, QueryScope::Masked).map_err(e2s)?;
        let unmask = block
            .iter()
            .map(|&p| {
                let d = dists.iter().find(|d| d.position == p).unwrap();
                cmlm_core::UnmaskedToken {
                    position: p,
                    token: y[p],
                    prob: d.dist.prob(y[p]),
                }
            })
            .collect();
        steps.push(cmlm_core::TraceStep {
            unmask,
            remask: Vec::new(),
        });
        for p in block {
            masked.remove(p);
        }
    }
    let mut trace = DecodeTrace {
        source: src.to_vec(),
        n: y.len(),
        steps,
        final_tokens: y.to_vec(),
        norm_score: 0.0,
        heuristic: None,
        param: None,
        update: None,
        forced: false,
    };
    trace.norm_score = trace.recompute_norm_score().map_err(e2s)?;
    Ok(trace)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn chain_rule() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut cases, mut chains, mut worst) = (0, 0, 0.0f64);
    for case in 0..120 {
        let v = rng.random_range(2..=4);
        let model = small_planted(case, v);
        let n = rng.random_range(1..=4);
        let src = random_source(&mut rng, 6);
        let y: Vec<TokenId> = (0..n).map(|_| rng.random_range(0..v as TokenId)).collect();
        let joint = chain_prob(&model, &src, &y);
        for order in permutations(n) {
            let chain: Vec<Vec<usize>> = order.iter().map(|&p| vec![p]).collect();
            let got = chain_log_prob(&model, &src, &y, &chain).map_err(e2s)?.prob();
            worst = worst.max((got - joint).abs());
            chains += 1;
        }
        cases += 1;
    }
    ensure(worst <= PROB_TOL, || format!("max deviation {worst:e}"))?;
    Ok(format!("{cases} cases, {chains} orders, max |diff| {worst:.1e}"))
}

fn forward_backward() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut states, mut worst) = (0, 0.0f64);
    for case in 0..1200 {
        let v = rng.random_range(2..=4);
        let model = small_planted(5000 + case, v);
        let n = rng.random_range(1..=4);
        let src = random_source(&mut rng, 6);
        let observed = random_state(&mut rng, n, v);
        let state = state_from(&observed);
        for d in model.conditional(&src, &state, QueryScope::All).map_err(e2s)? {
            let want = brute_marginal(&model, &src, &observed, d.position);
            for (t, w) in want.iter().enumerate() {
                worst = worst.max((d.dist.prob(t as TokenId) - w).abs());
            }
        }
        states += 1;
    }
    ensure(worst <= MARGINAL_TOL, || format!("max deviation {worst:e}"))?;
    Ok(format!("{states} states, max |diff| {worst:.1e}"))
}

fn preds(probs: &[(usize, f64)]) -> Vec<PositionPrediction> {
    probs
        .iter()
        .map(|&(pos, p)| PositionPrediction::new(pos, 0, p).unwrap())
        .collect()
}

fn heuristic_units() -> Outcome {
    let four = preds(&[(1, 0.9), (2, 0.8), (3, 0.5), (4, 0.2)]);
    let ten = preds(&(0..10).map(|i| (i, 0.9 - 0.05 * i as f64)).collect::<Vec<_>>());
    let set = |v: Vec<usize>| v.into_iter().collect::<BTreeSet<_>>();
    let all4 = set(vec![1, 2, 3, 4]);
    let checks: Vec<(&str, bool)> = vec![
        (
            "fixed-T N=10 T=3 -> 4",
            select_fixed_t(&ten, 10, 3).map_err(e2s)?.len() == 4,
        ),
        (
            "fixed-T T=1 -> all",
            select_fixed_t(&ten, 10, 1).map_err(e2s)?.len() == 10,
        ),
        (
            "fixed-T T=N -> 1",
            select_fixed_t(&ten, 10, 10).map_err(e2s)?.len() == 1,
        ),
        (
            "fixed-K K=3 -> {1,2,3}",
            select_fixed_k(&four, 3).map_err(e2s)? == vec![1, 2, 3],
        ),
        (
            "fixed-K K>=|preds| -> all",
            set(select_fixed_k(&four, 9).map_err(e2s)?) == all4,
        ),
        ("fixed-K K=1 -> top", select_fixed_k(&four, 1).map_err(e2s)? == vec![1]),
        (
            "thresh 0.6 -> {1,2}",
            select_thresh(&four, 0.6).map_err(e2s)? == vec![1, 2],
        ),
        (
            "thresh 0.95 -> fallback {1}",
            select_thresh(&four, 0.95).map_err(e2s)? == vec![1],
        ),
        ("thresh 0 -> all", set(select_thresh(&four, 0.0).map_err(e2s)?) == all4),
        (
            "comb 0.5 -> prefix 2",
            select_comb_thresh(&four, 0.5).map_err(e2s)? == vec![1, 2],
        ),
        (
            "comb 0 -> all",
            set(select_comb_thresh(&four, 0.0).map_err(e2s)?) == all4,
        ),
        (
            "comb 1 -> fallback {1}",
            select_comb_thresh(&four, 1.0).map_err(e2s)? == vec![1],
        ),
        (
            "fcomb 0.5 -> prefix 2",
            select_fcomb_thresh(&four, 0.5).map_err(e2s)? == vec![1, 2],
        ),
        (
            "fcomb full prefix scores 0",
            select_fcomb_thresh(&preds(&[(0, 0.99), (1, 0.99), (2, 0.99)]), 1e-9)
                .map_err(e2s)?
                .len()
                == 2,
        ),
        (
            "fcomb single position -> fallback",
            select_fcomb_thresh(&preds(&[(5, 0.99)]), 0.3).map_err(e2s)? == vec![5],
        ),
        (
            "ties -> lower position",
            select_fixed_k(&preds(&[(3, 0.5), (1, 0.5), (2, 0.5)]), 2).map_err(e2s)? == vec![1, 2],
        ),
        (
            "invalid hyperparameters rejected",
            [
                select_fixed_t(&four, 4, 0),
                select_fixed_k(&four, 0),
                select_thresh(&four, 1.5),
                select_comb_thresh(&four, -0.1),
                select_fcomb_thresh(&four, 2.0),
            ]
            .iter()
            .all(|r| matches!(r, Err(InferenceError::InvalidHyperparameter(_)))),
        ),
        (
            "empty predictions rejected",
            matches!(select_thresh(&[], 0.5), Err(InferenceError::EmptyPredictions)),
        ),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    ensure(failed.is_empty(), || format!("failed: {}", failed.join("; ")))?;
    Ok(format!("{} worked examples", checks.len()))
}

fn schedule_arithmetic(count: &CountCmlm, corpus: &[Example]) -> Outcome {
    let planted = PlantedMarkovModel::new(&PlantedConfig::default()).map_err(e2s)?;
    let src = [3, 1, 4, 1, 5];
    let mut checked = 0;
    for n in 1..=50 {
        for t in 1..=10 {
            let trace = decode(
                &planted,
                &src,
                n,
                &DecodeConfig::new(Heuristic::FixedT { iterations: t }),
            )
            .map_err(e2s)?;
            let want = n.div_ceil(n.div_ceil(t));
            ensure(trace.iterations() == want, || {
                format!("N={n} T={t}: {} iterations, expected {want}", trace.iterations())
            })?;
            ensure(
                trace
                    .steps
                    .iter()
                    .take(want - 1)
                    .all(|s| s.unmask.len() == n.div_ceil(t)),
                || format!("N={n} T={t}: step sizes differ from ceil(N/T)"),
            )?;
            checked += 1;
        }
    }
    for k in 1..=10 {
        let config = DecodeConfig::new(Heuristic::FixedK { tokens: k }).with_length_beam(LENGTH_BEAM);
        let (_, m) = evaluate(count, corpus, &config, LengthMode::Predicted, BleuOptions::default()).map_err(e2s)?;
        let tokens: usize = m.lengths.iter().sum();
        let iters: usize = m.lengths.iter().map(|n| n.div_ceil(k)).sum();
        let want = tokens as f64 / iters as f64;
        ensure(m.speedup == want, || format!("K={k}: speedup {} vs {want}", m.speedup))?;
    }
    Ok(format!(
        "{checked} (N,T) pairs; fixed-K speedup exact for K=1..10 on {} sentences",
        corpus.len()
    ))
}

fn strip(trace: &DecodeTrace) -> (Vec<Vec<(usize, TokenId)>>, Vec<TokenId>) {
    let steps = trace
        .steps
        .iter()
        .map(|s| s.unmask.iter().map(|u| (u.position, u.token)).collect())
        .collect();
    (steps, trace.final_tokens.clone())
}

fn degenerate(count: &CountCmlm, corpus: &[Example]) -> Outcome {
    let mut sentences = 0;
    for ex in corpus.iter().take(300) {
        let n = ex.reference().unwrap().len();
        let run = |h: Heuristic| decode(count, ex.source(), n, &DecodeConfig::new(h)).map(|t| strip(&t));
        let one = run(Heuristic::FixedT { iterations: 1 }).map_err(e2s)?;
        ensure(one.0.len() == 1, || "T=1 took more than one iteration".into())?;
        for h in [Heuristic::Thresh { tau: 0.0 }, Heuristic::CombThresh { tau: 0.0 }] {
            let other = run(h).map_err(e2s)?;
            ensure(
                other.1 == one.1 && other.0.len() == 1 && set_of(&other.0[0]) == set_of(&one.0[0]),
                || format!("{h} differs from T=1"),
            )?;
        }
        let k1 = run(Heuristic::FixedK { tokens: 1 }).map_err(e2s)?;
        ensure(k1.0.len() == n, || "K=1 not single-token".into())?;
        for h in [Heuristic::CombThresh { tau: 1.0 }, Heuristic::FixedT { iterations: n }] {
            ensure(run(h).map_err(e2s)? == k1, || format!("{h} trace differs from K=1"))?;
        }
        sentences += 1;
    }
    Ok(format!("{sentences} sentences under the count scorer"))
}

fn set_of(step: &[(usize, TokenId)]) -> BTreeSet<(usize, TokenId)> {
    step.iter().copied().collect()
}

fn bleu_crosscheck() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut cases = 0;
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let size = rng.random_range(1..5);
        let v = rng.random_range(2..5);
        let mut hyps = Vec::new();
        let mut refs = Vec::new();
        for _ in 0..size {
            let r: Vec<u32> = (0..rng.random_range(4..12)).map(|_| rng.random_range(0..v)).collect();
            let mut h = r.clone();
            for t in h.iter_mut() {
                if rng.random_bool(0.25) {
                    *t = rng.random_range(0..v);
                }
            }
            h.truncate(rng.random_range(3..=h.len() + 1).min(h.len()));
            hyps.push(h);
            refs.push(r);
        }
        let got = corpus_bleu(&hyps, &refs).map_err(e2s)?;
        worst = worst.max((got - brute_bleu(&hyps, &refs, 4)).abs());
        cases += 1;
    }
    // hand-computed: matches 6/6, 4/5, 2/4, 0/3; smoothed 1, 5/6, 3/5, 1/4; BP exp(1 - 7/6)
    let h = vec![vec![1u32, 2, 3, 4, 2, 3]];
    let r = vec![vec![1u32, 2, 3, 2, 3, 4, 5]];
    let smoothed = corpus_bleu_with(
        &h,
        &r,
        BleuOptions {
            smoothing: true,
            ..Default::default()
        },
    )
    .map_err(e2s)?;
    let hand = 100.0 * (1.0f64 - 7.0 / 6.0).exp() * (5.0 / 6.0 * 3.0 / 5.0 * 1.0 / 4.0f64).powf(0.25);
    ensure((smoothed.score - hand).abs() <= BLEU_TOL, || {
        format!("hand case {} vs {hand}", smoothed.score)
    })?;
    ensure(corpus_bleu(&h, &r).map_err(e2s)? == 0.0, || {
        "zero 4-gram match should score 0".into()
    })?;
    let ident = vec![vec![1u32, 2, 3, 4], vec![5, 6, 7, 8, 9]];
    let id_score = corpus_bleu(&ident, &ident).map_err(e2s)?;
    ensure(id_score == 100.0, || format!("identity scored {id_score}"))?;
    ensure(worst <= BLEU_TOL, || format!("max deviation {worst:e}"))?;
    Ok(format!(
        "{cases} random cases + hand case, max |diff| {worst:.1e}; identity = {id_score}"
    ))
}

fn grid(kind: HeuristicKind) -> Vec<f64> {
    match kind {
        HeuristicKind::FixedT => (1..=SOURCE_LEN.1 + 2).map(|t| t as f64).collect(),
        HeuristicKind::FixedK => (1..=10).map(|k| k as f64).collect(),
        HeuristicKind::Thresh => vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
        _ => vec![
            0.0, 1e-8, 1e-6, 1e-5, 1e-4, 1e-3, 3e-3, 0.01, 0.03, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0,
        ],
    }
}

/// Linear interpolation of BLEU at `speed` along a curve sorted by speed.
fn interpolate(curve: &[(f64, f64)], speed: f64) -> Option<f64> {
    curve.windows(2).find(|w| w[0].0 <= speed && speed <= w[1].0).map(|w| {
        if w[1].0 == w[0].0 {
            w[0].1.max(w[1].1)
        } else {
            w[0].1 + (w[1].1 - w[0].1) * (speed - w[0].0) / (w[1].0 - w[0].0)
        }
    })
}

fn figure_two(count: &CountCmlm, corpus: &[Example]) -> Outcome {
    let base = DecodeConfig::new(Heuristic::FixedK { tokens: 1 }).with_length_beam(LENGTH_BEAM);
    let (_, ar) = evaluate(count, corpus, &base, LengthMode::Predicted, BleuOptions::default()).map_err(e2s)?;
    let mut curves = Vec::new();
    let mut summary = vec![format!("K=1 BLEU {:.2}", ar.bleu)];
    for kind in HeuristicKind::ALL {
        let r = sweep(
            count,
            corpus,
            kind,
            &grid(kind),
            &base,
            LengthMode::Predicted,
            BleuOptions::default(),
        )
        .map_err(e2s)?;
        ensure(r.failures.is_empty() && !r.points.is_empty(), || {
            format!("{kind}: failed points {:?}", r.failures)
        })?;
        let curve: Vec<(f64, f64)> = r.points.iter().map(|p| (p.metrics.speedup, p.metrics.bleu)).collect();
        let (lo, hi) = (curve[0].0, curve[curve.len() - 1].0);
        ensure(lo <= SPAN_LOW && hi >= SPAN_HIGH, || {
            format!("{kind}: speedup span [{lo:.2}, {hi:.2}]")
        })?;
        let slow_bleu = curve[0].1;
        ensure((slow_bleu - ar.bleu).abs() <= AUTOREGRESSIVE_BLEU_TOL, || {
            format!("{kind}: BLEU {slow_bleu:.2} at speedup {lo:.2} vs K=1 {:.2}", ar.bleu)
        })?;
        summary.push(format!("{kind} [{lo:.2},{hi:.2}]"));
        curves.push((kind, curve));
    }
    let find = |k: HeuristicKind| &curves.iter().find(|c| c.0 == k).unwrap().1;
    let (comb, fixed_t) = (find(HeuristicKind::CombThresh), find(HeuristicKind::FixedT));
    let matched: Vec<(f64, f64, f64)> = comb
        .iter()
        .filter(|p| p.0 >= 3.0)
        .filter_map(|&(s, b)| interpolate(fixed_t, s).map(|ft| (s, b, ft)))
        .collect();
    let wins = matched.iter().filter(|m| m.1 >= m.2).count();
    let report: Vec<String> = matched
        .iter()
        .map(|m| format!("{:.2}x {:.2}/{:.2}", m.0, m.1, m.2))
        .collect();
    summary.push(format!(
        "report: comb-thresh >= fixed-T at {wins}/{} matched speedups >= 3 (comb/fixed-T BLEU: {})",
        matched.len(),
        report.join(", ")
    ));
    Ok(summary.join("; "))
}

fn bucket_summary(b: &[LengthBucket]) -> String {
    b.iter()
        .map(|b| format!("{}-{}:{:.2}±{:.2}", b.lo, b.hi, b.mean_iterations, b.std_iterations))
        .collect::<Vec<_>>()
        .join(" ")
}

fn figure_three(count: &CountCmlm, corpus: &[Example]) -> Outcome {
    // fixed-K at five tokens per iteration; the other heuristics are tuned to its speed
    let fixed_k = DecodeConfig::new(Heuristic::FixedK { tokens: 5 });
    let target = measure_speedup(count, corpus, &fixed_k, LengthMode::Oracle).map_err(e2s)?;
    let k_buckets = iterations_vs_length(count, corpus, &fixed_k, true).map_err(e2s)?;
    ensure(k_buckets.iter().all(|b| b.std_iterations == 0.0), || {
        format!("fixed-K within-bucket variance: {}", bucket_summary(&k_buckets))
    })?;

    let base = DecodeConfig::new(Heuristic::FixedK { tokens: 1 });
    let comb = tune_to_speed(
        count,
        corpus,
        HeuristicKind::CombThresh,
        target,
        0.1,
        &base,
        LengthMode::Oracle,
    )
    .map_err(e2s)?;
    let c_buckets = iterations_vs_length(count, corpus, &DecodeConfig::new(comb.heuristic), true).map_err(e2s)?;
    ensure(c_buckets.iter().any(|b| b.std_iterations > 0.0), || {
        format!(
            "comb-thresh has no within-bucket variance: {}",
            bucket_summary(&c_buckets)
        )
    })?;

    let ft = tune_to_speed(
        count,
        corpus,
        HeuristicKind::FixedT,
        target,
        0.5,
        &base,
        LengthMode::Oracle,
    )
    .map_err(e2s)?;
    let Heuristic::FixedT { iterations: t } = ft.heuristic else {
        return Err("fixed-T tuning returned another heuristic".into());
    };
    let decay = DecodeConfig::new(ft.heuristic).with_schedule(FixedTSchedule::Decay);
    let ceil = DecodeConfig::new(ft.heuristic);
    let (mut decay_ok, mut ceil_exact, mut ceil_at_t, mut long) = (true, true, 0, 0);
    for ex in corpus {
        let n = ex.reference().unwrap().len();
        let d = decode_example(count, ex, &decay, LengthMode::Oracle)
            .map_err(e2s)?
            .trace
            .iterations();
        let c = decode_example(count, ex, &ceil, LengthMode::Oracle)
            .map_err(e2s)?
            .trace
            .iterations();
        ceil_exact &= c == n.div_ceil(n.div_ceil(t)) && c <= t;
        if n >= t {
            long += 1;
            decay_ok &= d == t;
            ceil_at_t += (c == t) as usize;
        }
    }
    ensure(decay_ok, || {
        format!("decaying fixed-T T={t} not constant at T for N >= T")
    })?;
    ensure(ceil_exact, || "ceil(N/T) fixed-T iteration counts off".into())?;
    Ok(format!(
        "speed target {target:.2}; fixed-K K=5 {}; comb-thresh {} (speed {:.2}) {}; fixed-T T={t}: decaying schedule = T on all {long} sentences with N >= T, ceil(N/T) schedule = T on {ceil_at_t}/{long} and ceil(N/ceil(N/T)) elsewhere",
        bucket_summary(&k_buckets),
        comb.heuristic,
        comb.dev_speedup,
        bucket_summary(&c_buckets),
    ))
}

fn tuning(count: &CountCmlm, planted: &PlantedMarkovModel) -> Outcome {
    let dev = sample_corpus(planted, 500, SOURCE_LEN.0, SOURCE_LEN.1, 1001);
    let test = sample_corpus(planted, 500, SOURCE_LEN.0, SOURCE_LEN.1, 2002);
    let base = DecodeConfig::new(Heuristic::FixedK { tokens: 1 }).with_length_beam(LENGTH_BEAM);
    let mut lines = Vec::new();
    for kind in [
        HeuristicKind::Thresh,
        HeuristicKind::CombThresh,
        HeuristicKind::FcombThresh,
    ] {
        for target in [2.0, 4.0] {
            let t = tune_tau(count, &dev, kind, target, 0.1, &base, LengthMode::Predicted).map_err(e2s)?;
            let config = DecodeConfig {
                heuristic: t.heuristic,
                ..base
            };
            let on_test = measure_speedup(count, &test, &config, LengthMode::Predicted).map_err(e2s)?;
            ensure((on_test - target).abs() <= TUNE_TEST_TOL, || {
                format!(
                    "{kind} target {target}: {} gives dev {:.2}, test {on_test:.2}",
                    t.heuristic, t.dev_speedup
                )
            })?;
            lines.push(format!("{} dev {:.2} test {on_test:.2}", t.heuristic, t.dev_speedup));
        }
    }
    Ok(lines.join(", "))
}

fn main() {
    let mut suite = Suite { failed: 0 };
    let sec = Duration::from_secs;
    suite.run("Figure 1 replication", sec(1), figure_one);
    suite.run("Chain-rule consistency", sec(30), chain_rule);
    suite.run("Forward-backward oracle", sec(30), forward_backward);
    suite.run("Heuristic unit suite", sec(5), heuristic_units);

    let planted = PlantedMarkovModel::new(&PlantedConfig::default()).expect("default planted model");
    let count = CountCmlm::train(
        &TrainingConfig {
            source_len_min: SOURCE_LEN.0,
            source_len_max: SOURCE_LEN.1,
            ..TrainingConfig::default()
        },
        &planted,
    )
    .expect("count model trains");
    let corpus = sample_corpus(&planted, CORPUS_SIZE, SOURCE_LEN.0, SOURCE_LEN.1, 99);

    suite.run("Schedule arithmetic", sec(120), || schedule_arithmetic(&count, &corpus));
    suite.run("Degenerate equivalence", sec(60), || degenerate(&count, &corpus));
    suite.run("BLEU cross-check", sec(5), bleu_crosscheck);
    suite.run("Figure-2 analog", sec(600), || figure_two(&count, &corpus));
    suite.run("Figure-3 analog", sec(300), || figure_three(&count, &corpus));
    suite.run("tune_tau dev to test", sec(300), || tuning(&count, &planted));

    if suite.failed > 0 {
        println!("{} criteria failed", suite.failed);
        std::process::exit(1);
    }
}
