//! Command implementations. Every command writes the resolved `run.toml`
//! into its output directory before doing any work.
//!
//! CSV columns:
//! - `metrics.csv`, `sweep.csv`: heuristic,param,length_beam,update_strategy,speedup,bleu,total_tokens,total_iterations
//! - `compare_updates.csv`: update_strategy,length_beam,iterations,bleu,speedup
//! - `iters_by_length.csv`: lo,hi,count,mean_iterations,std_iterations
//! - `bleu_curve.csv`: iteration,bleu
//! - `tune.csv`: heuristic,target,tau,dev_speedup,test_speedup,within_tolerance,evaluations

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use cmlm_core::corpus::{format_tokens, sample_corpus, write_corpus};
use cmlm_core::eval::{
    bleu_over_iterations, corpus_metrics, decode_corpus, evaluate, iterations_vs_length, measure_speedup, sweep,
    tune_tau, BleuOptions, MetricsRow,
};
use cmlm_core::inference::LengthMode;
use cmlm_core::scorers::{CountCmlm, PlantedMarkovModel, TrainingConfig};
use cmlm_core::{DecodeConfig, DecodeTrace, Heuristic, HeuristicKind, TokenId, UpdateStrategy};
use serde::Serialize;

use crate::args::{
    Cli, Command, Common, CompareArgs, CorpusArgs, GenCorpusArgs, RenderArgs, SweepArgs, TrainArgs, TuneArgs,
};
use crate::config::{usage, RunConfig, Settings};
use crate::plot::{self, Series};
use crate::render::render;
use crate::scorer::{build, load_corpus, require_corpus, source_vocab};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::TrainScorer(a) => train_scorer(a),
        Command::Decode(a) => decode(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::CompareUpdates(a) => compare_updates(a),
        Command::AnalyzeIters(a) => analyze_iters(a),
        Command::BleuCurve(a) => bleu_curve(a),
        Command::TuneTau(a) => tune(a),
        Command::RenderTrace(a) => render_trace(a),
    }
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

/// Merges config and flags, applies `patch` for command-specific flags,
/// sets up the worker pool and records the resolved configuration.
fn prepare(common: &Common, patch: impl FnOnce(&mut RunConfig)) -> anyhow::Result<Settings> {
    let mut cfg = RunConfig::from_common(common)?;
    patch(&mut cfg);
    let settings = Settings::resolve(&cfg)?;
    if let Some(jobs) = settings.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::debug!("worker pool already initialised: {e}");
        }
    }
    fs::create_dir_all(&settings.out_dir).with_context(|| format!("creating {}", settings.out_dir.display()))?;
    fs::write(settings.out_dir.join("run.toml"), settings.resolved.to_toml())
        .with_context(|| format!("writing run.toml in {}", settings.out_dir.display()))?;
    Ok(settings)
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> anyhow::Result<Vec<T>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| usage(format!("bad {what} value `{}`", v.trim())))
        })
        .collect()
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn print_csv<T: Serialize>(rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn length_mode(s: &Settings) -> LengthMode {
    if s.oracle_lengths {
        LengthMode::Oracle
    } else {
        LengthMode::Predicted
    }
}

/// Grid used when none is given.
pub fn default_grid(kind: HeuristicKind, max_len: usize) -> Vec<f64> {
    match kind {
        HeuristicKind::FixedT => (1..=max_len + 2).map(|t| t as f64).collect(),
        HeuristicKind::FixedK => (1..=10).map(|k| k as f64).collect(),
        HeuristicKind::Thresh => vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
        HeuristicKind::CombThresh | HeuristicKind::FcombThresh => {
            vec![
                0.0, 1e-8, 1e-6, 1e-5, 1e-4, 1e-3, 3e-3, 0.01, 0.03, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0,
            ]
        }
    }
}

fn gen_corpus(a: GenCorpusArgs) -> anyhow::Result<()> {
    let s = prepare(&a.common, |c| {
        set(&mut c.size, a.size);
        set(&mut c.min_len, a.min_len);
        set(&mut c.max_len, a.max_len);
    })?;
    let model = PlantedMarkovModel::new(&s.planted)?;
    let corpus = sample_corpus(&model, s.size, s.min_len, s.max_len, s.seed);
    let path = a.output.unwrap_or_else(|| s.out_dir.join("corpus.tsv"));
    let mut w = create(&path)?;
    write_corpus(&mut w, &corpus)?;
    w.flush()?;
    println!("wrote {} pairs to {}", corpus.len(), path.display());
    Ok(())
}

fn train_scorer(a: TrainArgs) -> anyhow::Result<()> {
    let s = prepare(&a.common, |c| {
        set(&mut c.corpus, a.corpus);
        set(&mut c.examples, a.examples);
        set(&mut c.passes, a.passes);
        set(&mut c.alpha, a.alpha);
        set(&mut c.min_len, a.min_len);
        set(&mut c.max_len, a.max_len);
    })?;
    let target_vocab = s.planted.target_vocab;
    let model = match &s.corpus {
        Some(path) => {
            let corpus = load_corpus(path, TokenId::MAX as usize, target_vocab)?;
            CountCmlm::train_on_corpus(&corpus, target_vocab, s.alpha, s.passes, s.seed)?
        }
        None => {
            let planted = PlantedMarkovModel::new(&s.planted)?;
            let config = TrainingConfig {
                examples: s.examples,
                seed: s.seed,
                source_len_min: s.min_len,
                source_len_max: s.max_len,
                alpha: s.alpha,
            };
            CountCmlm::train(&config, &planted)?
        }
    };
    let path = a.output.unwrap_or_else(|| s.out_dir.join("count_model.json"));
    let mut w = create(&path)?;
    model.save(&mut w)?;
    w.flush()?;
    println!("wrote count model to {}", path.display());
    Ok(())
}

fn decode(a: CorpusArgs) -> anyhow::Result<()> {
    let s = prepare(&a.common, |c| set(&mut c.corpus, a.corpus))?;
    let scorer = build(&s)?;
    let corpus = require_corpus(s.corpus.as_deref(), &s, scorer.as_ref())?;
    let results = decode_corpus(scorer.as_ref(), &corpus, &s.decode, length_mode(&s))?;

    let mut hyps = create(&s.out_dir.join("hypotheses.txt"))?;
    let mut traces = create(&s.out_dir.join("traces.jsonl"))?;
    for r in &results {
        writeln!(hyps, "{}", format_tokens(&r.trace.final_tokens))?;
        serde_json::to_writer(&mut traces, &r.trace)?;
        writeln!(traces)?;
    }
    hyps.flush()?;
    traces.flush()?;

    if corpus.iter().all(|e| e.reference().is_some()) {
        let metrics = corpus_metrics(&results, &corpus, BleuOptions::default())?;
        let row = [MetricsRow::new(&s.decode, &metrics)];
        write_csv(&s.out_dir.join("metrics.csv"), &row)?;
        print_csv(&row)?;
    } else {
        log::warn!("corpus has sentences without references; metrics.csv not written");
    }
    Ok(())
}

#[derive(Serialize)]
struct CurvePoint {
    param: f64,
    speedup: f64,
    bleu: f64,
}

#[derive(Serialize)]
struct Curve {
    heuristic: String,
    points: Vec<CurvePoint>,
}

fn sweep_cmd(a: SweepArgs) -> anyhow::Result<()> {
    if a.all_heuristics && a.grid.is_some() {
        return Err(usage("--grid and --all-heuristics are mutually exclusive"));
    }
    let grid = a.grid.as_deref().map(|g| parse_list::<f64>(g, "grid")).transpose()?;
    let s = prepare(&a.common, |c| {
        set(&mut c.corpus, a.corpus);
        set(&mut c.grid, grid);
    })?;
    let scorer = build(&s)?;
    let corpus = require_corpus(s.corpus.as_deref(), &s, scorer.as_ref())?;
    let kinds: Vec<HeuristicKind> = if a.all_heuristics {
        HeuristicKind::ALL.to_vec()
    } else {
        vec![s.kind]
    };

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut failures = 0;
    for kind in kinds {
        let grid = match (&s.grid, a.all_heuristics) {
            (Some(g), false) => g.clone(),
            _ => default_grid(kind, s.max_len),
        };
        if grid.is_empty() {
            return Err(usage("empty grid"));
        }
        let result = sweep(
            scorer.as_ref(),
            &corpus,
            kind,
            &grid,
            &s.decode,
            length_mode(&s),
            BleuOptions::default(),
        )?;
        failures += result.failures.len();
        rows.extend(result.points.iter().map(|p| p.row()));
        curves.push(Curve {
            heuristic: kind.name().to_string(),
            points: result
                .points
                .iter()
                .map(|p| CurvePoint {
                    param: p.config.heuristic.param(),
                    speedup: p.metrics.speedup,
                    bleu: p.metrics.bleu,
                })
                .collect(),
        });
    }
    if rows.is_empty() {
        bail!("every grid point failed");
    }
    write_csv(&s.out_dir.join("sweep.csv"), &rows)?;
    fs::write(s.out_dir.join("sweep.json"), serde_json::to_string_pretty(&curves)?)?;
    let series: Vec<Series> = curves
        .iter()
        .map(|c| Series {
            label: c.heuristic.clone(),
            points: c.points.iter().map(|p| (p.speedup, p.bleu)).collect(),
        })
        .collect();
    fs::write(
        s.out_dir.join("sweep.svg"),
        plot::scatter("speedup (tokens / iteration)", "BLEU", &series),
    )?;
    print_csv(&rows)?;
    if failures > 0 {
        log::warn!("{failures} grid point(s) failed");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CompareRow {
    update_strategy: String,
    length_beam: usize,
    iterations: usize,
    bleu: f64,
    speedup: f64,
}

fn compare_updates(a: CompareArgs) -> anyhow::Result<()> {
    let beams = a.beams.as_deref().map(|b| parse_list::<usize>(b, "beam")).transpose()?;
    let s = prepare(&a.common, |c| {
        set(&mut c.corpus, a.corpus);
        set(&mut c.iterations, a.iterations);
        set(&mut c.beams, beams);
    })?;
    let scorer = build(&s)?;
    let corpus = require_corpus(s.corpus.as_deref(), &s, scorer.as_ref())?;
    let mut rows = Vec::new();
    for update in UpdateStrategy::ALL {
        for &b in &s.beams {
            let config = DecodeConfig {
                update,
                heuristic: Heuristic::FixedT {
                    iterations: s.iterations,
                },
                length_beam: b,
                ..s.decode
            };
            let (_, m) = evaluate(
                scorer.as_ref(),
                &corpus,
                &config,
                length_mode(&s),
                BleuOptions::default(),
            )?;
            rows.push(CompareRow {
                update_strategy: update.name().to_string(),
                length_beam: b,
                iterations: s.iterations,
                bleu: m.bleu,
                speedup: m.speedup,
            });
        }
    }
    write_csv(&s.out_dir.join("compare_updates.csv"), &rows)?;
    print_csv(&rows)?;
    let bleu = |u: UpdateStrategy, b: usize| {
        rows.iter()
            .find(|r| r.update_strategy == u.name() && r.length_beam == b)
            .map(|r| r.bleu)
    };
    for &b in &s.beams {
        if let (Some(m), Some(ms)) = (bleu(UpdateStrategy::Masked, b), bleu(UpdateStrategy::MaskedSub, b)) {
            println!("b={b}: update-masked minus update-masked-sub BLEU = {:+.3}", m - ms);
        }
    }
    Ok(())
}

fn analyze_iters(a: CorpusArgs) -> anyhow::Result<()> {
    let s = prepare(&a.common, |c| set(&mut c.corpus, a.corpus))?;
    let scorer = build(&s)?;
    let corpus = require_corpus(s.corpus.as_deref(), &s, scorer.as_ref())?;
    let buckets = iterations_vs_length(scorer.as_ref(), &corpus, &s.decode, s.oracle_lengths)?;
    write_csv(&s.out_dir.join("iters_by_length.csv"), &buckets)?;
    print_csv(&buckets)?;
    Ok(())
}

#[derive(Serialize)]
struct CurveRow {
    iteration: usize,
    bleu: f64,
}

fn bleu_curve(a: CorpusArgs) -> anyhow::Result<()> {
    let s = prepare(&a.common, |c| set(&mut c.corpus, a.corpus))?;
    let scorer = build(&s)?;
    let corpus = require_corpus(s.corpus.as_deref(), &s, scorer.as_ref())?;
    let curve = bleu_over_iterations(
        scorer.as_ref(),
        &corpus,
        &s.decode,
        length_mode(&s),
        BleuOptions::default(),
    )?;
    let rows: Vec<CurveRow> = curve
        .points
        .iter()
        .enumerate()
        .map(|(t, &bleu)| CurveRow { iteration: t + 1, bleu })
        .collect();
    write_csv(&s.out_dir.join("bleu_curve.csv"), &rows)?;
    fs::write(s.out_dir.join("bleu_curve.json"), serde_json::to_string_pretty(&curve)?)?;
    print_csv(&rows)?;
    Ok(())
}

#[derive(Serialize)]
struct TuneRow {
    heuristic: String,
    target: f64,
    tau: f64,
    dev_speedup: f64,
    test_speedup: Option<f64>,
    within_tolerance: bool,
    evaluations: usize,
}

fn tune(a: TuneArgs) -> anyhow::Result<()> {
    let targets = a
        .targets
        .as_deref()
        .map(|t| parse_list::<f64>(t, "target"))
        .transpose()?;
    let s = prepare(&a.common, |c| {
        if c.heuristic.is_none() {
            c.heuristic = Some(HeuristicKind::CombThresh.name().to_string());
        }
        set(&mut c.dev, a.dev);
        set(&mut c.test, a.test);
        set(&mut c.targets, targets);
        set(&mut c.tolerance, a.tolerance);
    })?;
    if !s.kind.is_threshold() {
        return Err(usage(format!("{} has no threshold to tune", s.kind)));
    }
    let dev_path: PathBuf = s
        .dev
        .clone()
        .ok_or_else(|| usage("no dev split; pass --dev or set `dev` in the config"))?;
    let scorer = build(&s)?;
    let dev = load_corpus(&dev_path, source_vocab(&s), scorer.target_vocab_size())?;
    let test = s
        .test
        .as_deref()
        .map(|p| load_corpus(p, source_vocab(&s), scorer.target_vocab_size()))
        .transpose()?;
    let mode = length_mode(&s);
    let mut rows = Vec::new();
    for &target in &s.targets {
        let outcome = tune_tau(scorer.as_ref(), &dev, s.kind, target, s.tolerance, &s.decode, mode)?;
        if let Some(w) = &outcome.warning {
            log::warn!("target {target}: {w}");
        }
        let config = DecodeConfig {
            heuristic: outcome.heuristic,
            ..s.decode
        };
        let test_speedup = test
            .as_deref()
            .map(|t| measure_speedup(scorer.as_ref(), t, &config, mode))
            .transpose()?;
        rows.push(TuneRow {
            heuristic: s.kind.name().to_string(),
            target,
            tau: outcome.heuristic.param(),
            dev_speedup: outcome.dev_speedup,
            test_speedup,
            within_tolerance: outcome.within_tolerance,
            evaluations: outcome.evaluations,
        });
    }
    write_csv(&s.out_dir.join("tune.csv"), &rows)?;
    print_csv(&rows)?;
    Ok(())
}

fn render_trace(a: RenderArgs) -> anyhow::Result<()> {
    let file = File::open(&a.traces).with_context(|| format!("opening {}", a.traces.display()))?;
    let line = BufReader::new(file)
        .lines()
        .nth(a.index)
        .transpose()?
        .with_context(|| format!("{} has no trace at index {}", a.traces.display(), a.index))?;
    let trace: DecodeTrace =
        serde_json::from_str(&line).with_context(|| format!("trace {} of {}", a.index, a.traces.display()))?;
    let out = render(&trace, a.format)?;
    match a.output {
        Some(path) => fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{out}"),
    }
    Ok(())
}
