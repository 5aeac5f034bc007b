// SPDX-License-Identifier: Apache-2.0

//! Curriculum builders.
//!
//! A curriculum is an ordered list of epochs, each an ordered list of
//! doc_ids, compiled from a corpus, optional scores and a seed. Every builder
//! is a pure function of its inputs. Randomness comes from
//! [`crate::rng::stream`] keyed by `(seed, strategy name, epoch)`, so any
//! single epoch can be regenerated on its own. Score ties are always broken
//! by ascending doc_id.
//!
//! Strategies fall into four coverage classes:
//!
//! | class | strategies | epoch contents |
//! |-------|------------|----------------|
//! | epoch-wise | `C_rand`, `C_desc`, `C_asc`, `C_block_*`, `C_conv_*`, `C_A`, `C_MATTR`, `C_PPL` | a permutation of the corpus |
//! | filtered | `C_50` | the retained top fraction, cycled to the corpus word count |
//! | cumulative | `C_E_desc`, `C_E_asc` | one word-balanced score segment each, partitioning the corpus |
//! | staged | `C_source` | one stage per block of epochs |

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Stage};
use crate::defaults;
use crate::heuristics::ScoreTable;
use crate::influence::{self, AggregateInfluence, InfluenceError, InfluenceMatrix};
use crate::rng;
use crate::segment::balanced_split;

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("missing score for doc_id {0}")]
    MissingScore(u64),
    #[error("{0} requires {1}")]
    MissingInput(Strategy, &'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("retained set empty")]
    EmptyRetainedSet,
    #[error("{segments} segments requested for {documents} documents")]
    TooManySegments { segments: usize, documents: usize },
    #[error("stage {0} is present in the corpus but missing from the stage order")]
    StageNotOrdered(Stage),
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error(transparent)]
    Influence(#[from] InfluenceError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "asc")]
    Ascending,
    #[serde(rename = "desc")]
    Descending,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Ascending => Direction::Descending,
            Direction::Descending => Direction::Ascending,
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            Direction::Ascending => "asc",
            Direction::Descending => "desc",
        }
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "asc" | "ascending" => Ok(Direction::Ascending),
            "desc" | "descending" => Ok(Direction::Descending),
            _ => Err(format!("unknown direction {s:?} (expected asc or desc)")),
        }
    }
}

/// The fourteen curricula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Random,
    Sorted(Direction),
    BlockShuffled(Direction),
    ConvolvedBlockShuffled(Direction),
    FilteredTopK,
    Cumulative(Direction),
    Alternating,
    Source,
    Mattr,
    Perplexity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    EpochWise,
    Filtered,
    Cumulative,
    Staged,
}

impl Strategy {
    pub const ALL: [Strategy; 14] = [
        Strategy::Sorted(Direction::Descending),
        Strategy::Sorted(Direction::Ascending),
        Strategy::BlockShuffled(Direction::Descending),
        Strategy::BlockShuffled(Direction::Ascending),
        Strategy::ConvolvedBlockShuffled(Direction::Descending),
        Strategy::ConvolvedBlockShuffled(Direction::Ascending),
        Strategy::FilteredTopK,
        Strategy::Cumulative(Direction::Descending),
        Strategy::Cumulative(Direction::Ascending),
        Strategy::Alternating,
        Strategy::Random,
        Strategy::Source,
        Strategy::Mattr,
        Strategy::Perplexity,
    ];

    pub fn name(self) -> String {
        match self {
            Strategy::Random => "C_rand".into(),
            Strategy::Sorted(d) => format!("C_{}", d.suffix()),
            Strategy::BlockShuffled(d) => format!("C_block_{}", d.suffix()),
            Strategy::ConvolvedBlockShuffled(d) => format!("C_conv_{}", d.suffix()),
            Strategy::FilteredTopK => "C_50".into(),
            Strategy::Cumulative(d) => format!("C_E_{}", d.suffix()),
            Strategy::Alternating => "C_A".into(),
            Strategy::Source => "C_source".into(),
            Strategy::Mattr => "C_MATTR".into(),
            Strategy::Perplexity => "C_PPL".into(),
        }
    }

    pub fn coverage(self) -> Coverage {
        match self {
            Strategy::FilteredTopK => Coverage::Filtered,
            Strategy::Cumulative(_) => Coverage::Cumulative,
            Strategy::Source => Coverage::Staged,
            _ => Coverage::EpochWise,
        }
    }

    pub fn needs_influence(self) -> bool {
        matches!(
            self,
            Strategy::Sorted(_)
                | Strategy::BlockShuffled(_)
                | Strategy::ConvolvedBlockShuffled(_)
                | Strategy::FilteredTopK
                | Strategy::Cumulative(_)
                | Strategy::Alternating
        )
    }

    pub fn needs_scores(self) -> bool {
        matches!(self, Strategy::Mattr | Strategy::Perplexity)
    }

    /// Parse a full name (`C_E_desc`) or a family name plus direction
    /// (`C_E` with `desc`). Family names: `C_sorted`, `C_block`, `C_conv`, `C_E`.
    pub fn parse(name: &str, direction: Option<Direction>) -> Result<Self, CurriculumError> {
        if let Some(s) = Strategy::ALL.into_iter().find(|s| s.name() == name) {
            return match (s, direction) {
                (Strategy::Sorted(d), Some(x))
                | (Strategy::BlockShuffled(d), Some(x))
                | (Strategy::ConvolvedBlockShuffled(d), Some(x))
                | (Strategy::Cumulative(d), Some(x))
                    if d != x =>
                {
                    Err(CurriculumError::InvalidParameter(format!(
                        "{name} conflicts with direction {}",
                        x.suffix()
                    )))
                }
                _ => Ok(s),
            };
        }
        let family: Option<fn(Direction) -> Strategy> = match name {
            "C_sorted" => Some(Strategy::Sorted),
            "C_block" => Some(Strategy::BlockShuffled),
            "C_conv" => Some(Strategy::ConvolvedBlockShuffled),
            "C_E" => Some(Strategy::Cumulative),
            _ => None,
        };
        match (family, direction) {
            (Some(f), Some(d)) => Ok(f(d)),
            (Some(_), None) => Err(CurriculumError::InvalidParameter(format!(
                "{name} needs a direction"
            ))),
            (None, _) => Err(CurriculumError::UnknownStrategy(name.to_owned())),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Strategy {
    type Err = CurriculumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::parse(s, None)
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

/// Strategy parameters. Defaults are the reference-scale constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategySpec {
    pub block_size: usize,
    pub segments: usize,
    pub keep_fraction: f64,
    pub epochs: usize,
    pub epochs_per_stage: usize,
    pub mu: f64,
    pub sigma: f64,
    /// `C_rand`: fresh shuffle per pass (true) or one shuffle reused.
    pub reshuffle: bool,
    /// `C_A`: start the alternation at the highest-influence segment.
    pub alternate_start_high: bool,
    pub stage_order: Vec<Stage>,
}

impl Default for StrategySpec {
    fn default() -> Self {
        StrategySpec {
            block_size: defaults::BLOCK_SIZE,
            segments: defaults::SEGMENTS,
            keep_fraction: defaults::KEEP_FRACTION,
            epochs: defaults::EPOCHS,
            epochs_per_stage: defaults::EPOCHS_PER_STAGE,
            mu: defaults::LOGNORM_MU,
            sigma: defaults::LOGNORM_SIGMA,
            reshuffle: true,
            alternate_start_high: true,
            stage_order: Stage::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumManifest {
    pub strategy: Strategy,
    pub seed: u64,
    pub params: StrategySpec,
    pub budget: u64,
    pub corpus_name: String,
    pub corpus_hash: String,
    pub word_counts: Vec<u64>,
    /// Set when the budget cut the final epoch short or dropped epochs.
    pub truncated: bool,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub epochs: Vec<Vec<u64>>,
}

impl CurriculumManifest {
    pub fn total_words(&self) -> u64 {
        self.word_counts.iter().sum()
    }

    pub fn flatten(&self) -> Vec<u64> {
        self.epochs.iter().flatten().copied().collect()
    }
}

/// Per-epoch score columns aligned to corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochScores {
    columns: Vec<Vec<f64>>,
}

impl EpochScores {
    /// Align `(doc_ids, columns)` to corpus order; every corpus document
    /// must have a score in every column.
    pub fn aligned(corpus: &Corpus, doc_ids: &[u64], columns: Vec<Vec<f64>>) -> Result<Self, CurriculumError> {
        if columns.is_empty() {
            return Err(CurriculumError::InvalidParameter("no score columns".into()));
        }
        let index: HashMap<u64, usize> = doc_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut out = vec![Vec::with_capacity(corpus.len()); columns.len()];
        for d in corpus.documents() {
            let &row = index.get(&d.doc_id).ok_or(CurriculumError::MissingScore(d.doc_id))?;
            for (dst, src) in out.iter_mut().zip(&columns) {
                let v = *src.get(row).ok_or(CurriculumError::MissingScore(d.doc_id))?;
                if !v.is_finite() {
                    return Err(CurriculumError::InvalidParameter(format!(
                        "non-finite score for doc_id {}",
                        d.doc_id
                    )));
                }
                dst.push(v);
            }
        }
        Ok(EpochScores { columns: out })
    }

    pub fn from_influence(corpus: &Corpus, phi: &InfluenceMatrix) -> Result<Self, CurriculumError> {
        let cols = (0..phi.n_checkpoints()).map(|t| phi.column(t)).collect();
        EpochScores::aligned(corpus, phi.doc_ids(), cols)
    }

    pub fn from_aggregate(corpus: &Corpus, agg: &AggregateInfluence) -> Result<Self, CurriculumError> {
        EpochScores::aligned(corpus, &agg.doc_ids, vec![agg.values.clone()])
    }

    /// One static column reused for every epoch.
    pub fn from_static(corpus: &Corpus, doc_ids: &[u64], values: Vec<f64>) -> Result<Self, CurriculumError> {
        EpochScores::aligned(corpus, doc_ids, vec![values])
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Column for epoch `t`; epochs past the last column reuse the last one.
    pub fn for_epoch(&self, t: usize) -> &[f64] {
        &self.columns[t.min(self.columns.len() - 1)]
    }
}

/// Corpus positions ordered by score in `direction`, ties by doc_id.
fn sorted_positions(corpus: &Corpus, scores: &[f64], direction: Direction) -> Vec<usize> {
    let docs = corpus.documents();
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| {
        let by_score = match direction {
            Direction::Ascending => scores[a].total_cmp(&scores[b]),
            Direction::Descending => scores[b].total_cmp(&scores[a]),
        };
        by_score.then(docs[a].doc_id.cmp(&docs[b].doc_id))
    });
    order
}

fn ids(corpus: &Corpus, positions: &[usize]) -> Vec<u64> {
    positions.iter().map(|&p| corpus.documents()[p].doc_id).collect()
}

fn assemble(
    strategy: Strategy,
    corpus: &Corpus,
    params: &StrategySpec,
    seed: u64,
    budget: u64,
    epochs: Vec<Vec<u64>>,
    warnings: Vec<String>,
) -> CurriculumManifest {
    let word_counts = epochs
        .iter()
        .map(|e| e.iter().map(|&id| corpus.words_of(id)).sum())
        .collect();
    let manifest = CurriculumManifest {
        strategy,
        seed,
        params: params.clone(),
        budget,
        corpus_name: corpus.name().to_owned(),
        corpus_hash: corpus.content_hash(),
        word_counts,
        truncated: false,
        warnings,
        epochs,
    };
    enforce_budget(manifest, budget, corpus)
}

fn require(cond: bool, msg: impl Into<String>) -> Result<(), CurriculumError> {
    if cond {
        Ok(())
    } else {
        Err(CurriculumError::InvalidParameter(msg.into()))
    }
}

/// `C_rand`: independent seeded shuffles of the whole corpus.
pub fn build_random(
    corpus: &Corpus,
    params: &StrategySpec,
    seed: u64,
    budget: u64,
) -> Result<CurriculumManifest, CurriculumError> {
    require(params.epochs >= 1, "epochs must be >= 1")?;
    let name = Strategy::Random.name();
    let epochs = (0..params.epochs)
        .map(|e| {
            let mut order = corpus.doc_ids();
            let stream = if params.reshuffle { e as u64 } else { 0 };
            rng::shuffle_with(&mut order, seed, &name, stream);
            order
        })
        .collect();
    Ok(assemble(Strategy::Random, corpus, params, seed, budget, epochs, vec![]))
}

fn sorted_epochs(corpus: &Corpus, scores: &EpochScores, direction: Direction, epochs: usize) -> Vec<Vec<u64>> {
    (0..epochs)
        .map(|t| ids(corpus, &sorted_positions(corpus, scores.for_epoch(t), direction)))
        .collect()
}

/// `C_desc` / `C_asc` (and the static-score baselines): epoch `t` is the
/// corpus sorted by score column `t`.
pub fn build_sorted(
    corpus: &Corpus,
    scores: &EpochScores,
    direction: Direction,
    params: &StrategySpec,
    budget: u64,
) -> Result<CurriculumManifest, CurriculumError> {
    require(params.epochs >= 1, "epochs must be >= 1")?;
    let epochs = sorted_epochs(corpus, scores, direction, params.epochs);
    Ok(assemble(Strategy::Sorted(direction), corpus, params, 0, budget, epochs, vec![]))
}

fn block_shuffled_epochs(
    corpus: &Corpus,
    scores: &EpochScores,
    direction: Direction,
    params: &StrategySpec,
    seed: u64,
    domain: &str,
) -> Vec<Vec<u64>> {
    (0..params.epochs)
        .map(|t| {
            let mut order = ids(corpus, &sorted_positions(corpus, scores.for_epoch(t), direction));
            let mut rng = rng::stream(seed, domain, t as u64);
            for block in order.chunks_mut(params.block_size) {
                rand::seq::SliceRandom::shuffle(block, &mut rng);
            }
            order
        })
        .collect()
}

/// `C_block_*`: sorted epochs, shuffled within consecutive blocks.
pub fn build_block_shuffled(
    corpus: &Corpus,
    scores: &EpochScores,
    direction: Direction,
    params: &StrategySpec,
    seed: u64,
    budget: u64,
) -> Result<CurriculumManifest, CurriculumError> {
    require(params.epochs >= 1, "epochs must be >= 1")?;
    require(params.block_size >= 1, "block_size must be >= 1")?;
    let strategy = Strategy::BlockShuffled(direction);
    let epochs = block_shuffled_epochs(corpus, scores, direction, params, seed, &strategy.name());
    Ok(assemble(strategy, corpus, params, seed, budget, epochs, vec![]))
}

/// `C_conv_*`: `Φ` smoothed with the lognormal filter, then block-shuffled.
pub fn build_convolved_block_shuffled(
    corpus: &Corpus,
    phi: &InfluenceMatrix,
    direction: Direction,
    params: &StrategySpec,
    seed: u64,
    budget: u64,
) -> Result<CurriculumManifest, CurriculumError> {
    require(params.epochs >= 1, "epochs must be >= 1")?;
    require(params.block_size >= 1, "block_size must be >= 1")?;
    let h = influence::make_lognorm_filter(phi.n_checkpoints(), params.mu, params.sigma)?;
    let smoothed = influence::convolve(phi, &h)?;
    let scores = EpochScores::from_influence(corpus, &smoothed)?;
    let strategy = Strategy::ConvolvedBlockShuffled(direction);
    let epochs = block_shuffled_epochs(corpus, &scores, direction, params, seed, &strategy.name());
    Ok(assemble(strategy, corpus, params, seed, budget, epochs, vec![]))
}

/// Number of documents `C_50` keeps per epoch.
pub fn retained_count(n_docs: usize, keep_fraction: f64) -> usize {
    ((keep_fraction * n_docs as f64).ceil() as usize).min(n_docs)
}

/// doc_ids of the top `keep_fraction` by `scores` (descending, ties by doc_id).
pub fn retained_set(corpus: &Corpus, scores: &[f64], keep_fraction: f64) -> Vec<u64> {
    let k = retained_count(corpus.len(), keep_fraction);
    let order = sorted_positions(corpus, scores, Direction::Descending);
    ids(corpus, &order[..k])
}

/// `C_50`: per epoch keep the most influential fraction, shuffle it once
/// and cycle through it until the epoch shows at least as many words as
/// the full corpus.
pub fn build_filtered_topk(
    corpus: &Corpus,
    scores: &EpochScores,
    params: &StrategySpec,
    seed: u64,
    budget: u64,
) -> Result<CurriculumManifest, CurriculumError> {
    require(params.epochs >= 1, "epochs must be >= 1")?;
    require(
        params.keep_fraction > 0.0 && params.keep_fraction <= 1.0,
        format!("keep_fraction must be in (0, 1], got {}", params.keep_fraction),
    )?;
    let target = corpus.total_words();
    let name = Strategy::FilteredTopK.name();
    let mut epochs = Vec::with_capacity(params.epochs);
    for t in 0..params.epochs {
        let mut kept = retained_set(corpus, scores.for_epoch(t), params.keep_fraction);
        if kept.is_empty() {
            return Err(CurriculumError::EmptyRetainedSet);
        }
        rng::shuffle_with(&mut kept, seed, &name, t as u64);
        let mut epoch = Vec::new();
        let mut words = 0;
        for &id in kept.iter().cycle() {
            if words >= target {
                break;
            }
            words += corpus.words_of(id);
            epoch.push(id);
        }
        epochs.push(epoch);
    }
    Ok(assemble(Strategy::FilteredTopK, corpus, params, seed, budget, epochs, vec![]))
}

/// Word-balanced contiguous segments of the corpus sorted by `scores`.
fn score_segments(
    corpus: &Corpus,
    scores: &[f64],
    direction: Direction,
    m: usize,
) -> Result<Vec<Vec<u64>>, CurriculumError> {
    if m == 0 {
        return Err(CurriculumError::InvalidParameter("segments must be >= 1".into()));
    }
    if m > corpus.len() {
        return Err(CurriculumError::TooManySegments {
            segments: m,
            documents: corpus.len(),
        });
    }
    let order = ids(corpus, &sorted_positions(corpus, scores, direction));
    let weights: Vec<u64> = order.iter().map(|&id| corpus.words_of(id)).collect();
    Ok(balanced_split(&weights, m)
        .into_iter()
        .map(|r| order[r].to_vec())
        .collect())
}

/// `C_E_*`: sort by aggregate influence, split into `segments` word-balanced
/// pieces; epoch `k` is a shuffle of piece `k`.
pub fn build_cumulative_segments(
    corpus: &Corpus,
    agg: &EpochScores,
    direction: Direction,
    params: &StrategySpec,
    seed: u64,
    budget: u64,
) -> Result<CurriculumManifest, CurriculumError> {
    let strategy = Strategy::Cumulative(direction);
    let name = strategy.name();
    let mut segments = score_segments(corpus, agg.for_epoch(0), direction, params.segments)?;
    for (k, seg) in segments.iter_mut().enumerate() {
        rng::shuffle_with(seg, seed, &name, k as u64);
    }
    let mut params = params.clone();
    params.epochs = params.segments;
    Ok(assemble(strategy, corpus, &params, seed, budget, segments, vec![]))
}

/// Visit order of `m` ascending segments: alternate between the ends.
pub fn alternating_order(m: usize, start_high: bool) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    let (mut lo, mut hi) = (0usize, m);
    let mut take_high = start_high;
    while lo < hi {
        if take_high {
            hi -= 1;
            out.push(hi);
        } else {
            out.push(lo);
            lo += 1;
        }
        take_high = !take_high;
    }
    out
}

/// `C_A`: ascending aggregate segments visited high, low, next-high, …;
/// every epoch repeats that order with fresh within-segment shuffles.
pub fn build_alternating(
    corpus: &Corpus,
    agg: &EpochScores,
    params: &StrategySpec,
    seed: u64,
    budget: u64,
) -> Result<CurriculumManifest, CurriculumError> {
    require(params.epochs >= 1, "epochs must be >= 1")?;
    let segments = score_segments(corpus, agg.for_epoch(0), Direction::Ascending, params.segments)?;
    let visit = alternating_order(segments.len(), params.alternate_start_high);
    let name = Strategy::Alternating.name();
    let epochs = (0..params.epochs)
        .map(|e| {
            let mut rng = rng::stream(seed, &name, e as u64);
            let mut epoch = Vec::with_capacity(corpus.len());
            for &s in &visit {
                let mut seg = segments[s].clone();
                rand::seq::SliceRandom::shuffle(seg.as_mut_slice(), &mut rng);
                epoch.extend(seg);
            }
            epoch
        })
        .collect();
    Ok(assemble(Strategy::Alternating, corpus, params, seed, budget, epochs, vec![]))
}

/// `C_source`: `epochs_per_stage` shuffled epochs for each stage in
/// `stage_order`. Stages without documents still get (empty) epochs so
/// epoch indices line up with other curricula.
pub fn build_source_stages(
    corpus: &Corpus,
    params: &StrategySpec,
    seed: u64,
    budget: u64,
) -> Result<CurriculumManifest, CurriculumError> {
    require(params.epochs_per_stage >= 1, "epochs_per_stage must be >= 1")?;
    let order = &params.stage_order;
    for stage in corpus.stages_present() {
        if !order.contains(&stage) {
            return Err(CurriculumError::StageNotOrdered(stage));
        }
    }
    let name = Strategy::Source.name();
    let mut epochs = Vec::new();
    let mut warnings = Vec::new();
    for &stage in order {
        let members: Vec<u64> = corpus
            .documents()
            .iter()
            .filter(|d| d.stage == stage)
            .map(|d| d.doc_id)
            .collect();
        if members.is_empty() {
            warnings.push(format!(
                "stage {stage} has no documents; epochs {}..{} are empty",
                epochs.len(),
                epochs.len() + params.epochs_per_stage
            ));
        }
        for _ in 0..params.epochs_per_stage {
            let mut e = members.clone();
            rng::shuffle_with(&mut e, seed, &name, epochs.len() as u64);
            epochs.push(e);
        }
    }
    let mut params = params.clone();
    params.epochs = order.len() * params.epochs_per_stage;
    Ok(assemble(Strategy::Source, corpus, &params, seed, budget, epochs, warnings))
}

/// `C_MATTR`: ascending MATTR every epoch.
pub fn build_mattr(
    corpus: &Corpus,
    table: &ScoreTable,
    params: &StrategySpec,
    budget: u64,
) -> Result<CurriculumManifest, CurriculumError> {
    let scores = EpochScores::from_static(corpus, &table.doc_ids(), table.mattr())?;
    let mut m = build_sorted(corpus, &scores, Direction::Ascending, params, budget)?;
    m.strategy = Strategy::Mattr;
    Ok(m)
}

/// `C_PPL`: ascending unigram perplexity every epoch.
pub fn build_perplexity(
    corpus: &Corpus,
    table: &ScoreTable,
    params: &StrategySpec,
    budget: u64,
) -> Result<CurriculumManifest, CurriculumError> {
    let scores = EpochScores::from_static(corpus, &table.doc_ids(), table.perplexity())?;
    let mut m = build_sorted(corpus, &scores, Direction::Ascending, params, budget)?;
    m.strategy = Strategy::Perplexity;
    Ok(m)
}

/// Cut the manifest at document granularity so the cumulative word count
/// stays within `max_words`. Documents after the first one that would
/// overflow are dropped, along with all later epochs.
pub fn enforce_budget(mut manifest: CurriculumManifest, max_words: u64, corpus: &Corpus) -> CurriculumManifest {
    manifest.budget = max_words;
    let mut used = 0u64;
    for e in 0..manifest.epochs.len() {
        let epoch = &manifest.epochs[e];
        let mut keep = epoch.len();
        let mut words = 0u64;
        for (i, &id) in epoch.iter().enumerate() {
            let w = corpus.words_of(id);
            if used + words + w > max_words {
                keep = i;
                break;
            }
            words += w;
        }
        if keep < epoch.len() {
            manifest.epochs[e].truncate(keep);
            manifest.epochs.truncate(if keep == 0 { e } else { e + 1 });
            manifest.truncated = true;
            break;
        }
        used += words;
    }
    manifest.word_counts = manifest
        .epochs
        .iter()
        .map(|e| e.iter().map(|&id| corpus.words_of(id)).sum())
        .collect();
    manifest
}

/// Scores and matrices a strategy may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct CurriculumInputs<'a> {
    pub phi: Option<&'a InfluenceMatrix>,
    pub scores: Option<&'a ScoreTable>,
}

/// Build any of the fourteen strategies.
pub fn build(
    strategy: Strategy,
    corpus: &Corpus,
    inputs: CurriculumInputs<'_>,
    params: &StrategySpec,
    seed: u64,
    budget: u64,
) -> Result<CurriculumManifest, CurriculumError> {
    let phi = || inputs.phi.ok_or(CurriculumError::MissingInput(strategy, "an influence matrix"));
    let table = || inputs.scores.ok_or(CurriculumError::MissingInput(strategy, "a score table"));
    let mut manifest = match strategy {
        Strategy::Random => build_random(corpus, params, seed, budget)?,
        Strategy::Sorted(d) => {
            let s = EpochScores::from_influence(corpus, phi()?)?;
            build_sorted(corpus, &s, d, params, budget)?
        }
        Strategy::BlockShuffled(d) => {
            let s = EpochScores::from_influence(corpus, phi()?)?;
            build_block_shuffled(corpus, &s, d, params, seed, budget)?
        }
        Strategy::ConvolvedBlockShuffled(d) => {
            build_convolved_block_shuffled(corpus, phi()?, d, params, seed, budget)?
        }
        Strategy::FilteredTopK => {
            let s = EpochScores::from_influence(corpus, phi()?)?;
            build_filtered_topk(corpus, &s, params, seed, budget)?
        }
        Strategy::Cumulative(d) => {
            let agg = EpochScores::from_aggregate(corpus, &influence::aggregate(phi()?))?;
            build_cumulative_segments(corpus, &agg, d, params, seed, budget)?
        }
        Strategy::Alternating => {
            let agg = EpochScores::from_aggregate(corpus, &influence::aggregate(phi()?))?;
            build_alternating(corpus, &agg, params, seed, budget)?
        }
        Strategy::Source => build_source_stages(corpus, params, seed, budget)?,
        Strategy::Mattr => build_mattr(corpus, table()?, params, budget)?,
        Strategy::Perplexity => build_perplexity(corpus, table()?, params, budget)?,
    };
    manifest.seed = seed;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub epoch: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.epoch {
            Some(e) => write!(f, "epoch {e}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, epoch: Option<usize>, message: impl Into<String>) {
        self.violations.push(Violation {
            epoch,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return writeln!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

fn multiset(epoch: &[u64]) -> HashMap<u64, usize> {
    let mut m = HashMap::new();
    for &id in epoch {
        *m.entry(id).or_insert(0) += 1;
    }
    m
}

/// Check every manifest invariant of the strategy's coverage class.
pub fn validate_manifest(manifest: &CurriculumManifest, corpus: &Corpus) -> ValidationReport {
    let mut r = ValidationReport::default();
    let n_epochs = manifest.epochs.len();
    let last_partial = |e: usize| manifest.truncated && e + 1 == n_epochs;

    if manifest.corpus_hash != corpus.content_hash() {
        r.push(None, "manifest was built for a different corpus");
    }
    if manifest.word_counts.len() != n_epochs {
        r.push(None, format!("{} word counts for {n_epochs} epochs", manifest.word_counts.len()));
    }
    for (e, epoch) in manifest.epochs.iter().enumerate() {
        if let Some(bad) = epoch.iter().find(|id| !corpus.contains(**id)) {
            r.push(Some(e), format!("unknown doc_id {bad}"));
        }
        let words: u64 = epoch.iter().map(|&id| corpus.words_of(id)).sum();
        if manifest.word_counts.get(e).is_some_and(|&w| w != words) {
            r.push(Some(e), format!("declared {} words, counted {words}", manifest.word_counts[e]));
        }
    }
    let total: u64 = manifest.epochs.iter().flatten().map(|&id| corpus.words_of(id)).sum();
    if total > manifest.budget {
        r.push(None, format!("{total} words exceed budget {}", manifest.budget));
    }
    let expected_epochs = manifest.params.epochs;
    if (!manifest.truncated && n_epochs != expected_epochs) || n_epochs > expected_epochs {
        r.push(None, format!("{n_epochs} epochs, expected {expected_epochs}"));
    }

    let all: HashSet<u64> = corpus.doc_ids().into_iter().collect();
    match manifest.strategy.coverage() {
        Coverage::EpochWise => {
            for (e, epoch) in manifest.epochs.iter().enumerate() {
                let counts = multiset(epoch);
                let dup = counts.values().any(|&c| c > 1);
                let complete = epoch.len() == all.len() && counts.len() == all.len();
                if dup || (!last_partial(e) && !complete) {
                    r.push(Some(e), "not a permutation");
                }
            }
        }
        Coverage::Filtered => {
            let k = retained_count(corpus.len(), manifest.params.keep_fraction);
            let target = corpus.total_words();
            let max_len = corpus.max_doc_len();
            for (e, epoch) in manifest.epochs.iter().enumerate() {
                let counts = multiset(epoch);
                if last_partial(e) {
                    if counts.len() > k {
                        r.push(Some(e), format!("{} distinct documents, retained set has {k}", counts.len()));
                    }
                    continue;
                }
                if counts.len() != k {
                    r.push(Some(e), format!("{} distinct documents, expected {k}", counts.len()));
                }
                let (lo, hi) = (counts.values().min(), counts.values().max());
                if let (Some(lo), Some(hi)) = (lo, hi) {
                    if hi - lo > 1 {
                        r.push(Some(e), "retained documents not cycled evenly");
                    }
                }
                let words: u64 = epoch.iter().map(|&id| corpus.words_of(id)).sum();
                if words < target || words >= target + max_len {
                    r.push(
                        Some(e),
                        format!("word count {words} outside [{target}, {})", target + max_len),
                    );
                }
            }
        }
        Coverage::Cumulative => {
            let mut owner: HashMap<u64, usize> = HashMap::new();
            for (e, epoch) in manifest.epochs.iter().enumerate() {
                for &id in epoch {
                    if let Some(prev) = owner.insert(id, e) {
                        r.push(Some(e), format!("partition violated: doc_id {id} also in epoch {prev}"));
                    }
                }
            }
            if !manifest.truncated && owner.len() != all.len() {
                r.push(None, format!("epochs cover {} of {} documents", owner.len(), all.len()));
            }
        }
        Coverage::Staged => {
            let eps = manifest.params.epochs_per_stage.max(1);
            for (e, epoch) in manifest.epochs.iter().enumerate() {
                let Some(&stage) = manifest.params.stage_order.get(e / eps) else {
                    r.push(Some(e), "epoch beyond the stage order");
                    continue;
                };
                if let Some(id) = epoch
                    .iter()
                    .find(|id| corpus.get(**id).is_some_and(|d| d.stage != stage))
                {
                    r.push(Some(e), format!("doc_id {id} is not in stage {stage}"));
                }
                let members = corpus.documents().iter().filter(|d| d.stage == stage).count();
                let counts = multiset(epoch);
                let dup = counts.values().any(|&c| c > 1);
                if dup || (!last_partial(e) && epoch.len() != members) {
                    r.push(Some(e), format!("not a permutation of stage {stage}"));
                }
            }
        }
    }
    r
}

pub const MANIFEST_MAGIC: [u8; 4] = *b"CMAN";
pub const MANIFEST_VERSION: u32 = 1;

/// Binary manifest file.
///
/// `b"CMAN"`, version (u32), header length (u32), UTF-8 JSON header
/// (strategy, seed, params, budget, corpus name and hash, word counts,
/// truncation flag, warnings), epoch count (u32), then per epoch a u32
/// document count followed by that many u64 doc_ids. Little-endian
/// throughout.
pub fn manifest_bytes(manifest: &CurriculumManifest) -> Vec<u8> {
    let header = serde_json::to_vec(manifest).expect("manifest header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + manifest.epochs.iter().map(|e| 4 + 8 * e.len()).sum::<usize>());
    out.extend_from_slice(&MANIFEST_MAGIC);
    out.extend_from_slice(&MANIFEST_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(manifest.epochs.len() as u32).to_le_bytes());
    for epoch in &manifest.epochs {
        out.extend_from_slice(&(epoch.len() as u32).to_le_bytes());
        for id in epoch {
            out.extend_from_slice(&id.to_le_bytes());
        }
    }
    out
}

pub fn parse_manifest(bytes: &[u8]) -> Result<CurriculumManifest, String> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], String> {
        let s = bytes.get(pos..pos + n).ok_or("truncated manifest")?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MANIFEST_MAGIC {
        return Err("bad magic".into());
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let version = u32_at(take(4)?);
    if version != MANIFEST_VERSION {
        return Err(format!("version mismatch (found {version})"));
    }
    let hlen = u32_at(take(4)?) as usize;
    let mut manifest: CurriculumManifest =
        serde_json::from_slice(take(hlen)?).map_err(|e| format!("bad header: {e}"))?;
    let n = u32_at(take(4)?) as usize;
    let mut epochs = Vec::with_capacity(n);
    for _ in 0..n {
        let len = u32_at(take(4)?) as usize;
        let raw = take(8 * len)?;
        epochs.push(
            raw.chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    if pos != bytes.len() {
        return Err("trailing bytes after epochs".into());
    }
    manifest.epochs = epochs;
    Ok(manifest)
}

pub fn write_manifest(manifest: &CurriculumManifest, path: impl AsRef<Path>) -> Result<(), CurriculumError> {
    let path = path.as_ref();
    fs::write(path, manifest_bytes(manifest)).map_err(|source| CurriculumError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<CurriculumManifest, CurriculumError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CurriculumError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&bytes).map_err(|message| CurriculumError::Format {
        path: path.to_path_buf(),
        message,
    })
}

/// Plain-text export for diffing: `#` header lines, then `# epoch k`
/// separators with one doc_id per line.
pub fn write_manifest_text(manifest: &CurriculumManifest, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "# strategy {}", manifest.strategy)?;
    writeln!(w, "# seed {}", manifest.seed)?;
    writeln!(w, "# budget {}", manifest.budget)?;
    writeln!(w, "# corpus {} {}", manifest.corpus_name, manifest.corpus_hash)?;
    writeln!(
        w,
        "# params {}",
        serde_json::to_string(&manifest.params).expect("params serialize")
    )?;
    if manifest.truncated {
        writeln!(w, "# truncated")?;
    }
    for warning in &manifest.warnings {
        writeln!(w, "# warning {warning}")?;
    }
    for (e, epoch) in manifest.epochs.iter().enumerate() {
        writeln!(w, "# epoch {e} words {}", manifest.word_counts[e])?;
        for id in epoch {
            writeln!(w, "{id}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn corpus(words: &[usize]) -> Corpus {
        let docs = words
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let stage = Stage::ALL[i % 5];
                let text = vec!["w"; w].join(" ");
                Document::new(i as u64 + 1, format!("src{}", i % 5), stage, &text)
            })
            .collect();
        Corpus::new("t", docs).unwrap()
    }

    fn spec(epochs: usize) -> StrategySpec {
        StrategySpec {
            epochs,
            ..StrategySpec::default()
        }
    }

    fn static_scores(c: &Corpus, v: &[f64]) -> EpochScores {
        EpochScores::from_static(c, &c.doc_ids(), v.to_vec()).unwrap()
    }

    const BIG: u64 = u64::MAX;

    #[test]
    fn strategy_names_round_trip() {
        let names: HashSet<String> = Strategy::ALL.iter().map(|s| s.name()).collect();
        assert_eq!(names.len(), 14);
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!(
            Strategy::parse("C_E", Some(Direction::Descending)).unwrap(),
            Strategy::Cumulative(Direction::Descending)
        );
        assert!(Strategy::parse("C_E", None).is_err());
        assert!(Strategy::parse("C_E_asc", Some(Direction::Descending)).is_err());
        assert!(Strategy::parse("C_nope", None).is_err());
    }

    #[test]
    fn default_spec_uses_reference_constants() {
        let s = StrategySpec::default();
        assert_eq!((s.block_size, s.segments, s.epochs, s.epochs_per_stage), (1000, 10, 10, 2));
        assert_eq!(s.keep_fraction, 0.5);
    }

    #[test]
    fn random_is_seeded() {
        let c = corpus(&[3; 12]);
        let a = build_random(&c, &spec(10), 7, BIG).unwrap();
        assert_eq!(a, build_random(&c, &spec(10), 7, BIG).unwrap());
        assert_ne!(a.epochs, build_random(&c, &spec(10), 8, BIG).unwrap().epochs);
        assert_eq!(a.epochs.len(), 10);
        assert_ne!(a.epochs[0], a.epochs[1]);
        assert!(validate_manifest(&a, &c).is_ok());
        let single = build_random(&c, &StrategySpec { reshuffle: false, ..spec(3) }, 7, BIG).unwrap();
        assert!(single.epochs.iter().all(|e| *e == single.epochs[0]));
    }

    #[test]
    fn random_single_document() {
        let c = corpus(&[5]);
        let m = build_random(&c, &spec(4), 1, BIG).unwrap();
        assert!(m.epochs.iter().all(|e| e == &vec![1]));
    }

    #[test]
    fn sorted_orders_and_ties() {
        let c = corpus(&[1, 1, 1]);
        let m = build_sorted(&c, &static_scores(&c, &[0.9, 0.1, 0.5]), Direction::Descending, &spec(1), BIG).unwrap();
        assert_eq!(m.epochs[0], vec![1, 3, 2]);
        let m = build_sorted(&c, &static_scores(&c, &[0.2; 3]), Direction::Descending, &spec(1), BIG).unwrap();
        assert_eq!(m.epochs[0], vec![1, 2, 3]);
        let m = build_sorted(&c, &static_scores(&c, &[0.2; 3]), Direction::Ascending, &spec(1), BIG).unwrap();
        assert_eq!(m.epochs[0], vec![1, 2, 3]);
    }

    #[test]
    fn sorted_epoch_uses_its_own_column() {
        let c = corpus(&[1, 1, 1, 1]);
        let cols = vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.4, 0.3, 0.2, 0.1]];
        let s = EpochScores::aligned(&c, &c.doc_ids(), cols.clone()).unwrap();
        let a = build_sorted(&c, &s, Direction::Descending, &spec(2), BIG).unwrap();
        let mut perturbed = cols;
        perturbed[0] = vec![0.9, 0.0, 0.5, 0.7];
        let s2 = EpochScores::aligned(&c, &c.doc_ids(), perturbed).unwrap();
        let b = build_sorted(&c, &s2, Direction::Descending, &spec(2), BIG).unwrap();
        assert_ne!(a.epochs[0], b.epochs[0]);
        assert_eq!(a.epochs[1], b.epochs[1]);
        // epochs past the last column reuse it
        let c3 = build_sorted(&c, &s, Direction::Descending, &spec(4), BIG).unwrap();
        assert_eq!(c3.epochs[3], a.epochs[1]);
    }

    #[test]
    fn missing_score_is_an_error() {
        let c = corpus(&[1, 1, 1]);
        let err = EpochScores::from_static(&c, &[1, 2], vec![0.0, 1.0]).unwrap_err();
        assert!(matches!(err, CurriculumError::MissingScore(3)));
    }

    #[test]
    fn block_size_one_matches_sorted() {
        let c = corpus(&[2; 9]);
        let v: Vec<f64> = (0..9).map(|i| ((i * 5) % 9) as f64).collect();
        let s = static_scores(&c, &v);
        let p = StrategySpec { block_size: 1, ..spec(3) };
        let a = build_block_shuffled(&c, &s, Direction::Descending, &p, 4, BIG).unwrap();
        let b = build_sorted(&c, &s, Direction::Descending, &p, BIG).unwrap();
        assert_eq!(a.epochs, b.epochs);
    }

    #[test]
    fn blocks_hold_the_sorted_partition() {
        let c = corpus(&[2; 23]);
        let v: Vec<f64> = (0..23).map(|i| ((i * 7) % 23) as f64).collect();
        let s = static_scores(&c, &v);
        let p = StrategySpec { block_size: 5, ..spec(2) };
        let m = build_block_shuffled(&c, &s, Direction::Ascending, &p, 9, BIG).unwrap();
        let sorted = build_sorted(&c, &s, Direction::Ascending, &p, BIG).unwrap();
        for (got, want) in m.epochs.iter().zip(&sorted.epochs) {
            for (gb, wb) in got.chunks(5).zip(want.chunks(5)) {
                let mut g = gb.to_vec();
                let mut w = wb.to_vec();
                g.sort();
                w.sort();
                assert_eq!(g, w);
            }
        }
        assert_ne!(m.epochs[0], sorted.epochs[0]);
        let whole = StrategySpec { block_size: 100, ..spec(1) };
        let full = build_block_shuffled(&c, &s, Direction::Ascending, &whole, 9, BIG).unwrap();
        assert!(validate_manifest(&full, &c).is_ok());
    }

    #[test]
    fn filtered_cycles_retained_documents() {
        let c = corpus(&[10; 4]);
        let s = static_scores(&c, &[0.4, 0.1, 0.3, 0.2]);
        let p = StrategySpec { keep_fraction: 0.5, ..spec(2) };
        let m = build_filtered_topk(&c, &s, &p, 3, BIG).unwrap();
        for e in &m.epochs {
            assert_eq!(e.len(), 4);
            let counts = multiset(e);
            assert_eq!(counts.get(&1), Some(&2));
            assert_eq!(counts.get(&3), Some(&2));
            assert_eq!(&e[..2], &e[2..]);
        }
        assert_eq!(m.word_counts, vec![40, 40]);
        assert!(validate_manifest(&m, &c).is_ok());
    }

    #[test]
    fn filtered_keep_all_is_a_shuffle() {
        let c = corpus(&[3, 5, 7, 2, 9]);
        let s = static_scores(&c, &[0.1, 0.2, 0.3, 0.4, 0.5]);
        let m = build_filtered_topk(&c, &s, &StrategySpec { keep_fraction: 1.0, ..spec(2) }, 3, BIG).unwrap();
        for (e, w) in m.epochs.iter().zip(&m.word_counts) {
            let mut sorted = e.clone();
            sorted.sort();
            assert_eq!(sorted, c.doc_ids());
            assert_eq!(*w, c.total_words());
        }
        assert!(build_filtered_topk(&c, &s, &StrategySpec { keep_fraction: 0.0, ..spec(1) }, 3, BIG).is_err());
    }

    #[test]
    fn cumulative_partitions_corpus() {
        let c = corpus(&[4, 8, 1, 3, 9, 2, 7, 5, 6, 3, 2]);
        let v: Vec<f64> = (0..11).map(|i| (i as f64 * 1.7).sin()).collect();
        let agg = static_scores(&c, &v);
        let p = StrategySpec { segments: 4, ..spec(10) };
        let m = build_cumulative_segments(&c, &agg, Direction::Descending, &p, 2, BIG).unwrap();
        assert_eq!(m.epochs.len(), 4);
        let mut all: Vec<u64> = m.flatten();
        all.sort();
        assert_eq!(all, c.doc_ids());
        assert!(validate_manifest(&m, &c).is_ok());
        // the first descending segment holds the top score
        let top = c.doc_ids()[v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0];
        assert!(m.epochs[0].contains(&top));

        let one = build_cumulative_segments(&c, &agg, Direction::Ascending, &StrategySpec { segments: 1, ..spec(1) }, 2, BIG).unwrap();
        assert_eq!(one.epochs.len(), 1);
        assert_eq!(one.epochs[0].len(), 11);
        let err = build_cumulative_segments(&c, &agg, Direction::Ascending, &StrategySpec { segments: 12, ..spec(1) }, 2, BIG);
        assert!(matches!(err, Err(CurriculumError::TooManySegments { .. })));
    }

    #[test]
    fn alternation_order() {
        assert_eq!(alternating_order(4, true), vec![3, 0, 2, 1]);
        assert_eq!(alternating_order(5, true), vec![4, 0, 3, 1, 2]);
        assert_eq!(alternating_order(4, false), vec![0, 3, 1, 2]);
        assert_eq!(alternating_order(1, true), vec![0]);
    }

    #[test]
    fn alternating_visits_segments_in_order() {
        let c = corpus(&[1; 8]);
        let v: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let agg = static_scores(&c, &v);
        let p = StrategySpec { segments: 4, ..spec(3) };
        let m = build_alternating(&c, &agg, &p, 5, BIG).unwrap();
        // ascending segments {1,2} {3,4} {5,6} {7,8}; visit s4 s1 s3 s2
        for e in &m.epochs {
            let blocks: Vec<Vec<u64>> = e.chunks(2).map(|b| { let mut b = b.to_vec(); b.sort(); b }).collect();
            assert_eq!(blocks, vec![vec![7, 8], vec![1, 2], vec![5, 6], vec![3, 4]]);
        }
        assert!(validate_manifest(&m, &c).is_ok());
        let single = build_alternating(&c, &agg, &StrategySpec { segments: 1, ..spec(3) }, 5, BIG).unwrap();
        assert!(validate_manifest(&single, &c).is_ok());
        assert_ne!(single.epochs[0], single.epochs[1]);
    }

    #[test]
    fn source_stages() {
        let c = corpus(&[2; 15]);
        let m = build_source_stages(&c, &spec(0), 1, BIG).unwrap();
        assert_eq!(m.epochs.len(), 10);
        for (e, epoch) in m.epochs.iter().enumerate() {
            let stage = Stage::ALL[e / 2];
            assert!(epoch.iter().all(|id| c.get(*id).unwrap().stage == stage));
            assert_eq!(epoch.len(), 3);
        }
        assert!(validate_manifest(&m, &c).is_ok());
    }

    #[test]
    fn source_with_missing_stages_warns() {
        let docs = (0..4).map(|i| Document::new(i, "childes", Stage::C1, "a b")).collect();
        let c = Corpus::new("c1", docs).unwrap();
        let m = build_source_stages(&c, &spec(0), 1, BIG).unwrap();
        assert_eq!(m.epochs.len(), 10);
        assert_eq!(m.epochs.iter().filter(|e| !e.is_empty()).count(), 2);
        assert_eq!(m.warnings.len(), 4);
        assert!(validate_manifest(&m, &c).is_ok());

        let p = StrategySpec { stage_order: vec![Stage::C2], ..spec(0) };
        assert!(matches!(build_source_stages(&c, &p, 1, BIG), Err(CurriculumError::StageNotOrdered(Stage::C1))));
    }

    #[test]
    fn budget_truncation() {
        let c = corpus(&[3, 4, 5, 6]);
        let full = build_random(&c, &spec(4), 1, BIG).unwrap();
        let total = full.total_words();
        assert_eq!(enforce_budget(full.clone(), total, &c), CurriculumManifest { budget: total, ..full.clone() });

        let half = enforce_budget(full.clone(), total / 2, &c);
        assert!(half.truncated);
        assert!(half.total_words() <= total / 2);
        let next = full.flatten()[half.flatten().len()];
        assert!(half.total_words() + c.words_of(next) > total / 2);
        assert!(half.epochs.len() <= 3);
        assert!(validate_manifest(&half, &c).is_ok());

        // exact epoch boundary drops the empty remainder
        let two = enforce_budget(full.clone(), 2 * c.total_words(), &c);
        assert_eq!(two.epochs.len(), 2);
        assert!(two.truncated);
    }

    #[test]
    fn default_budget_leaves_ten_passes_untouched() {
        // 10 passes over a corpus of 10M words fit in 100M exactly
        let c = corpus(&[1_000_000; 10]);
        let m = build_random(&c, &spec(10), 1, defaults::WORD_BUDGET).unwrap();
        assert!(!m.truncated);
        assert_eq!(m.total_words(), defaults::WORD_BUDGET);
    }

    #[test]
    fn validator_catches_violations() {
        let c = corpus(&[2; 6]);
        let mut m = build_random(&c, &spec(4), 1, BIG).unwrap();
        m.epochs[3].pop();
        m.word_counts[3] -= 2;
        let r = validate_manifest(&m, &c);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].to_string(), "epoch 3: not a permutation");

        let agg = static_scores(&c, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut e = build_cumulative_segments(&c, &agg, Direction::Ascending, &StrategySpec { segments: 3, ..spec(3) }, 1, BIG).unwrap();
        let moved = e.epochs[0][0];
        e.epochs[1].push(moved);
        e.word_counts[1] += 2;
        let r = validate_manifest(&e, &c);
        assert!(r.violations.iter().any(|v| v.message.starts_with("partition violated")), "{r}");

        let mut b = build_random(&c, &spec(1), 1, 10).unwrap();
        b.budget = 4;
        assert!(!validate_manifest(&b, &c).is_ok());
    }

    #[test]
    fn dispatcher_requires_inputs() {
        let c = corpus(&[2; 6]);
        let err = build(Strategy::Cumulative(Direction::Descending), &c, CurriculumInputs::default(), &spec(2), 1, BIG);
        assert!(matches!(err, Err(CurriculumError::MissingInput(..))));
        let err = build(Strategy::Mattr, &c, CurriculumInputs::default(), &spec(2), 1, BIG);
        assert!(matches!(err, Err(CurriculumError::MissingInput(..))));
    }

    #[test]
    fn manifest_file_round_trip() {
        let c = corpus(&[2, 3, 4, 5, 6]);
        let m = build_source_stages(&c, &spec(0), 9, 20).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cman");
        write_manifest(&m, &p).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), m);
        let bytes = manifest_bytes(&m);
        assert!(parse_manifest(&bytes[..bytes.len() - 1]).is_err());
        let mut text = Vec::new();
        write_manifest_text(&m, &mut text).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert!(text.starts_with("# strategy C_source\n# seed 9\n"));
        assert!(text.contains("# epoch 0 words"));
    }
}
