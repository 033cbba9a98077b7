use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::Context;
use cmlm_core::corpus::read_corpus;
use cmlm_core::scorers::{CountCmlm, ExternalScorer, PlantedMarkovModel, Scorer};
use cmlm_core::{Example, TokenId};

use crate::config::{usage, ScorerSpec, Settings};

pub fn build(settings: &Settings) -> anyhow::Result<Box<dyn Scorer>> {
    Ok(match &settings.scorer {
        ScorerSpec::Planted => Box::new(PlantedMarkovModel::new(&settings.planted)?),
        ScorerSpec::Count(path) => {
            let file = File::open(path).with_context(|| format!("opening count model {}", path.display()))?;
            Box::new(CountCmlm::load(BufReader::new(file)).with_context(|| format!("loading {}", path.display()))?)
        }
        ScorerSpec::Extern(cmd) => Box::new(ExternalScorer::spawn(cmd, settings.external)?),
    })
}

/// Only the planted model has a known source vocabulary; other scorers
/// accept any id.
pub fn source_vocab(settings: &Settings) -> usize {
    match settings.scorer {
        ScorerSpec::Planted => settings.planted.source_vocab,
        _ => TokenId::MAX as usize,
    }
}

pub fn load_corpus(path: &Path, source_vocab: usize, target_vocab: usize) -> anyhow::Result<Vec<Example>> {
    let file = File::open(path).with_context(|| format!("opening corpus {}", path.display()))?;
    read_corpus(BufReader::new(file), source_vocab, target_vocab).with_context(|| format!("reading {}", path.display()))
}

/// The corpus named by `path`, which must be set.
pub fn require_corpus(path: Option<&Path>, settings: &Settings, scorer: &dyn Scorer) -> anyhow::Result<Vec<Example>> {
    let path = path.ok_or_else(|| usage("no corpus given; pass --corpus or set `corpus` in the config"))?;
    load_corpus(path, source_vocab(settings), scorer.target_vocab_size())
}
