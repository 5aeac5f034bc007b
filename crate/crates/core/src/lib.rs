// SPDX-License-Identifier: Apache-2.0

//! Influence-based curriculum compilation.
//!
//! The crate turns per-checkpoint gradient dumps into average-influence
//! scores, compiles scored corpora into deterministic training-order
//! manifests, and compares curricula with composition, divergence and
//! rank-correlation metrics.
//!
//! Module map:
//!
//! * [`corpus`]: stage-labelled documents, manifest IO, equitoken synthesis, stratification.
//! * [`gradstore`]: the little-endian `GDMP` gradient dump format.
//! * [`influence`]: normalized-gradient average influence, aggregation, lognormal smoothing.
//! * [`heuristics`]: MATTR and static unigram perplexity scorers.
//! * [`curricula`]: the fourteen curriculum builders, budget enforcement, manifest validation.
//! * [`analysis`]: composition timelines, mean JSD, Kendall tau-b, Spearman, loss ratio.

pub mod analysis;
pub mod corpus;
pub mod curricula;
pub mod gradstore;
pub mod heuristics;
pub mod influence;
pub mod rng;
pub mod segment;

pub use analysis::{AnalysisError, CompositionTimeline, LossSeries};
pub use corpus::{Corpus, CorpusError, Document, Stage};
pub use curricula::{
    CurriculumError, CurriculumManifest, Direction, Strategy, StrategySpec, ValidationReport,
};
pub use gradstore::{CheckpointGradients, CheckpointSet, DumpError, DumpHeader};
pub use heuristics::{HeuristicError, ScoreTable, UnigramModel};
pub use influence::{AggregateInfluence, InfluenceError, InfluenceMatrix, LognormFilter};

/// Reference-scale defaults shared by the CLI and the builders.
pub mod defaults {
    pub const CHECKPOINTS: usize = 10;
    pub const MATTR_WINDOW: usize = 5;
    pub const BLOCK_SIZE: usize = 1000;
    pub const SEGMENTS: usize = 10;
    pub const KEEP_FRACTION: f64 = 0.5;
    pub const EPOCHS: usize = 10;
    pub const EPOCHS_PER_STAGE: usize = 2;
    pub const TIMELINE_SEGMENTS: usize = 1000;
    pub const WORD_BUDGET: u64 = 100_000_000;
    pub const EQUITOKEN_LEN: usize = 100;
    pub const UNIGRAM_ALPHA: f64 = 1.0;
    pub const LOGNORM_MU: f64 = 0.0;
    pub const LOGNORM_SIGMA: f64 = 1.0;
    pub const CHUNK_SIZE: usize = 4096;
}
