//! Run configuration: a TOML file whose keys mirror the command-line flags.
//! Flags override the file; whatever remains unset takes its default. Every
//! command writes the fully resolved configuration next to its outputs so a
//! run can be repeated with `--config`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use cmlm_core::scorers::{ExternalOptions, PlantedConfig, TrainingConfig};
use cmlm_core::{DecodeConfig, FixedTSchedule, Heuristic, HeuristicKind, UpdateStrategy};
use serde::{Deserialize, Serialize};

use crate::args::Common;

/// Bad flags or configuration values; the process exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_vocab: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_vocab: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topics: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concentration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scorer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heuristic: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_beam: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub update: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_lengths: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_t_schedule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extern_topk: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extern_timeout_secs: Option<f64>,
    /// Corpus for commands that read one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Sweep grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    /// Source length range for sampling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    /// Corpus pairs to sample.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    /// Planted samples for training.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub examples: Option<usize>,
    /// Masks per corpus pair for training.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Fixed-T iterations for update comparisons.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beams: Option<Vec<usize>>,
    /// Tuning splits.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub planted: PlantedSection,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("reading {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Values from `cli` replace those in `self`.
    pub fn overlay(mut self, cli: &Common) -> Self {
        fn set<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        set(&mut self.seed, &cli.seed);
        set(&mut self.scorer, &cli.scorer);
        set(&mut self.heuristic, &cli.heuristic);
        set(&mut self.param, &cli.param);
        set(&mut self.length_beam, &cli.length_beam);
        set(&mut self.update, &cli.update);
        if cli.oracle_lengths {
            self.oracle_lengths = Some(true);
        }
        set(&mut self.jobs, &cli.jobs);
        set(&mut self.out_dir, &cli.out_dir);
        set(&mut self.max_iterations, &cli.max_iterations);
        set(&mut self.fixed_t_schedule, &cli.fixed_t_schedule);
        set(&mut self.extern_topk, &cli.extern_topk);
        set(&mut self.extern_timeout_secs, &cli.extern_timeout_secs);
        set(&mut self.planted.seed, &cli.model_seed);
        set(&mut self.planted.source_vocab, &cli.source_vocab);
        set(&mut self.planted.target_vocab, &cli.target_vocab);
        set(&mut self.planted.topics, &cli.topics);
        set(&mut self.planted.concentration, &cli.concentration);
        set(&mut self.planted.smoothing, &cli.smoothing);
        self
    }

    /// Reads `--config` if given and applies the flags on top.
    pub fn from_common(cli: &Common) -> anyhow::Result<Self> {
        let base = match &cli.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        Ok(base.overlay(cli))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScorerSpec {
    Planted,
    Count(PathBuf),
    Extern(String),
}

impl FromStr for ScorerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "planted" {
            return Ok(Self::Planted);
        }
        if let Some(path) = s.strip_prefix("count:").filter(|p| !p.is_empty()) {
            return Ok(Self::Count(PathBuf::from(path)));
        }
        if let Some(cmd) = s.strip_prefix("extern:").filter(|c| !c.trim().is_empty()) {
            return Ok(Self::Extern(cmd.to_string()));
        }
        Err(format!(
            "unknown scorer `{s}`; expected planted, count:<path> or extern:<command>"
        ))
    }
}

impl fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Planted => f.write_str("planted"),
            Self::Count(p) => write!(f, "count:{}", p.display()),
            Self::Extern(c) => write!(f, "extern:{c}"),
        }
    }
}

pub fn default_param(kind: HeuristicKind) -> &'static str {
    match kind {
        HeuristicKind::FixedT => "10",
        HeuristicKind::FixedK => "2",
        HeuristicKind::Thresh => "0.5",
        HeuristicKind::CombThresh | HeuristicKind::FcombThresh => "0.1",
    }
}

/// Everything a command needs, with defaults applied.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub scorer: ScorerSpec,
    pub kind: HeuristicKind,
    pub decode: DecodeConfig,
    pub oracle_lengths: bool,
    pub jobs: Option<usize>,
    pub out_dir: PathBuf,
    pub planted: PlantedConfig,
    pub external: ExternalOptions,
    pub corpus: Option<PathBuf>,
    pub grid: Option<Vec<f64>>,
    pub min_len: usize,
    pub max_len: usize,
    pub size: usize,
    pub examples: usize,
    pub passes: usize,
    pub alpha: f64,
    pub iterations: usize,
    pub beams: Vec<usize>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub targets: Vec<f64>,
    pub tolerance: f64,
    /// The configuration with every default written out.
    pub resolved: RunConfig,
}

impl Settings {
    pub fn resolve(cfg: &RunConfig) -> anyhow::Result<Self> {
        let scorer: ScorerSpec = cfg.scorer.as_deref().unwrap_or("planted").parse().map_err(usage)?;
        let kind: HeuristicKind = cfg.heuristic.as_deref().unwrap_or("fixed-T").parse().map_err(usage)?;
        let param = cfg.param.clone().unwrap_or_else(|| default_param(kind).to_string());
        let heuristic: Heuristic = kind.with_param(&param).map_err(usage)?;
        let update: UpdateStrategy = cfg
            .update
            .as_deref()
            .unwrap_or("update-masked-sub")
            .parse()
            .map_err(usage)?;
        let schedule: FixedTSchedule = cfg
            .fixed_t_schedule
            .as_deref()
            .unwrap_or("ceil")
            .parse()
            .map_err(usage)?;
        let length_beam = cfg.length_beam.unwrap_or(1);
        if length_beam == 0 {
            return Err(usage("--length-beam must be >= 1"));
        }
        if cfg.max_iterations == Some(0) {
            return Err(usage("--max-iterations must be >= 1"));
        }
        if cfg.jobs == Some(0) {
            return Err(usage("--jobs must be >= 1"));
        }
        let decode = DecodeConfig {
            update,
            heuristic,
            length_beam,
            max_iterations: cfg.max_iterations,
            fixed_t_schedule: schedule,
        };
        decode.validate().map_err(usage)?;

        let d = PlantedConfig::default();
        let p = &cfg.planted;
        let planted = PlantedConfig {
            seed: p.seed.unwrap_or(d.seed),
            source_vocab: p.source_vocab.unwrap_or(d.source_vocab),
            target_vocab: p.target_vocab.unwrap_or(d.target_vocab),
            topics: p.topics.unwrap_or(d.topics),
            concentration: p.concentration.unwrap_or(d.concentration),
            smoothing: p.smoothing.unwrap_or(d.smoothing),
        };
        let timeout = cfg.extern_timeout_secs.unwrap_or(30.0);
        if !(timeout > 0.0 && timeout.is_finite()) {
            return Err(usage("--extern-timeout-secs must be positive"));
        }
        let external = ExternalOptions {
            topk: cfg.extern_topk.unwrap_or(8).max(1),
            timeout: Duration::from_secs_f64(timeout),
        };
        let min_len = cfg.min_len.unwrap_or(6);
        let max_len = cfg.max_len.unwrap_or(24);
        if min_len == 0 || max_len < min_len {
            return Err(usage(format!("invalid length range {min_len}..={max_len}")));
        }
        let training = TrainingConfig::default();
        let size = cfg.size.unwrap_or(1000);
        let examples = cfg.examples.unwrap_or(training.examples);
        let passes = cfg.passes.unwrap_or(20);
        let alpha = cfg.alpha.unwrap_or(training.alpha);
        let iterations = cfg.iterations.unwrap_or(10);
        let beams = cfg.beams.clone().unwrap_or_else(|| vec![1, 2, 3, 4, 5]);
        let targets = cfg.targets.clone().unwrap_or_else(|| vec![2.0, 4.0]);
        let tolerance = cfg.tolerance.unwrap_or(0.1);
        if size == 0 || examples == 0 || passes == 0 {
            return Err(usage("--size, --examples and --passes must be >= 1"));
        }
        if !(alpha > 0.0) {
            return Err(usage("--alpha must be positive"));
        }
        if iterations == 0 || beams.is_empty() || beams.contains(&0) {
            return Err(usage("iterations and length beams must be >= 1"));
        }
        if targets.is_empty() || !(tolerance > 0.0) {
            return Err(usage("tuning needs at least one target and a positive tolerance"));
        }
        let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        let seed = cfg.seed.unwrap_or(0);

        let resolved = RunConfig {
            seed: Some(seed),
            scorer: Some(scorer.to_string()),
            heuristic: Some(kind.name().to_string()),
            param: Some(param),
            length_beam: Some(length_beam),
            update: Some(update.name().to_string()),
            oracle_lengths: Some(cfg.oracle_lengths.unwrap_or(false)),
            jobs: cfg.jobs,
            out_dir: Some(out_dir.clone()),
            max_iterations: cfg.max_iterations,
            fixed_t_schedule: Some(cfg.fixed_t_schedule.clone().unwrap_or_else(|| "ceil".into())),
            extern_topk: Some(external.topk),
            extern_timeout_secs: Some(timeout),
            corpus: cfg.corpus.clone(),
            grid: cfg.grid.clone(),
            min_len: Some(min_len),
            max_len: Some(max_len),
            size: Some(size),
            examples: Some(examples),
            passes: Some(passes),
            alpha: Some(alpha),
            iterations: Some(iterations),
            beams: Some(beams.clone()),
            dev: cfg.dev.clone(),
            test: cfg.test.clone(),
            targets: Some(targets.clone()),
            tolerance: Some(tolerance),
            planted: PlantedSection {
                seed: Some(planted.seed),
                source_vocab: Some(planted.source_vocab),
                target_vocab: Some(planted.target_vocab),
                topics: Some(planted.topics),
                concentration: Some(planted.concentration),
                smoothing: Some(planted.smoothing),
            },
        };
        Ok(Self {
            seed,
            scorer,
            kind,
            decode,
            oracle_lengths: cfg.oracle_lengths.unwrap_or(false),
            jobs: cfg.jobs,
            out_dir,
            planted,
            external,
            corpus: cfg.corpus.clone(),
            grid: cfg.grid.clone(),
            min_len,
            max_len,
            size,
            examples,
            passes,
            alpha,
            iterations,
            beams,
            dev: cfg.dev.clone(),
            test: cfg.test.clone(),
            targets,
            tolerance,
            resolved,
        })
    }
}
