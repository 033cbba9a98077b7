use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "cmlm", version, about = "Semi-autoregressive masked decoding experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a TSV corpus from the planted model.
    GenCorpus(GenCorpusArgs),
    /// Train a count-based CMLM and save it as JSON.
    TrainScorer(TrainArgs),
    /// Decode a corpus, writing hypotheses, traces and a metrics row.
    Decode(CorpusArgs),
    /// Speed-quality curve over a hyperparameter grid.
    Sweep(SweepArgs),
    /// BLEU against length beam for each update strategy under fixed-T.
    CompareUpdates(CompareArgs),
    /// Iteration count statistics by output length.
    AnalyzeIters(CorpusArgs),
    /// Corpus BLEU after each iteration.
    BleuCurve(CorpusArgs),
    /// Tune a threshold on a dev split to hit target speedups.
    TuneTau(TuneArgs),
    /// Show one decode trace iteration by iteration.
    RenderTrace(RenderArgs),
}

/// Flags shared by every command. Each one overrides the value from
/// `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for sampling and training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `planted`, `count:<path>` or `extern:<command line>`.
    #[arg(long)]
    pub scorer: Option<String>,
    /// fixed-T, fixed-K, thresh, comb-thresh or fcomb-thresh.
    #[arg(long)]
    pub heuristic: Option<String>,
    /// Heuristic hyperparameter: T, K or tau.
    #[arg(long)]
    pub param: Option<String>,
    #[arg(long)]
    pub length_beam: Option<usize>,
    /// update-all, update-masked or update-masked-sub.
    #[arg(long)]
    pub update: Option<String>,
    /// Decode at the reference length instead of predicting lengths.
    #[arg(long)]
    pub oracle_lengths: bool,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Iteration cap per decode; defaults to 2N.
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// ceil or decay.
    #[arg(long)]
    pub fixed_t_schedule: Option<String>,
    /// Distribution entries requested from an external scorer.
    #[arg(long)]
    pub extern_topk: Option<usize>,
    #[arg(long)]
    pub extern_timeout_secs: Option<f64>,

    /// Planted model: seed of the chain parameters.
    #[arg(long)]
    pub model_seed: Option<u64>,
    #[arg(long)]
    pub source_vocab: Option<usize>,
    #[arg(long)]
    pub target_vocab: Option<usize>,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub concentration: Option<f64>,
    #[arg(long)]
    pub smoothing: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    /// Number of pairs [default: 1000].
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Defaults to `<out-dir>/corpus.tsv`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Train on this corpus instead of fresh planted samples.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Planted samples to draw [default: 50000].
    #[arg(long)]
    pub examples: Option<usize>,
    /// Random masks drawn per corpus pair [default: 20].
    #[arg(long)]
    pub passes: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Defaults to `<out-dir>/count_model.json`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// TSV corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Comma-separated hyperparameter values; defaults per heuristic.
    #[arg(long)]
    pub grid: Option<String>,
    /// Sweep all five heuristics over their default grids.
    #[arg(long)]
    pub all_heuristics: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Fixed-T iteration count [default: 10].
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Comma-separated length beams [default: 1,2,3,4,5].
    #[arg(long)]
    pub beams: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Dev split; required here or in the config file.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Reports the tuned threshold's speedup on this split too.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Comma-separated target speedups [default: 2,4].
    #[arg(long)]
    pub targets: Option<String>,
    /// [default: 0.1]
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RenderFormat {
    Text,
    Html,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// JSONL traces written by `decode`.
    #[arg(long)]
    pub traces: PathBuf,
    /// Zero-based line in the traces file.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, value_enum, default_value_t = RenderFormat::Text)]
    pub format: RenderFormat,
    /// Write here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}
