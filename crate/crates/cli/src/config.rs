// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use curriculum_core::analysis::Balance;
use curriculum_core::{defaults, StrategySpec};
use serde::{Deserialize, Serialize};

/// Everything a pipeline run needs, loadable from a TOML file. Command-line
/// flags override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    pub dumps: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub budget: u64,
    pub influence: InfluenceSettings,
    pub heuristics: HeuristicSettings,
    pub strategy: StrategySpec,
    pub analysis: AnalysisSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfluenceSettings {
    pub include_self: bool,
    pub chunk_size: usize,
    /// Per-checkpoint learning-rate weights; empty means all 1.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicSettings {
    pub window: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub segments: usize,
    pub balance: Balance,
    pub jsd: bool,
    pub tau: bool,
    pub loss_logs: Vec<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: None,
            dumps: None,
            out_dir: None,
            seed: 0,
            budget: defaults::WORD_BUDGET,
            influence: InfluenceSettings::default(),
            heuristics: HeuristicSettings::default(),
            strategy: StrategySpec::default(),
            analysis: AnalysisSettings::default(),
        }
    }
}

impl Default for InfluenceSettings {
    fn default() -> Self {
        InfluenceSettings {
            include_self: true,
            chunk_size: defaults::CHUNK_SIZE,
            weights: Vec::new(),
        }
    }
}

impl Default for HeuristicSettings {
    fn default() -> Self {
        HeuristicSettings {
            window: defaults::MATTR_WINDOW,
            alpha: defaults::UNIGRAM_ALPHA,
        }
    }
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            segments: defaults::TIMELINE_SEGMENTS,
            balance: Balance::Words,
            jsd: true,
            tau: true,
            loss_logs: Vec::new(),
        }
    }
}

impl PipelineConfig {
    /// Parse a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.corpus.as_mut().map(rebase);
        cfg.dumps.as_mut().map(rebase);
        cfg.out_dir.as_mut().map(rebase);
        cfg.analysis.loss_logs.iter_mut().for_each(rebase);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Fail early on any input path that does not exist.
    pub fn check_paths(&self) -> Result<()> {
        let inputs = self
            .corpus
            .iter()
            .chain(&self.dumps)
            .chain(&self.analysis.loss_logs);
        for p in inputs {
            if !p.exists() {
                bail!("{} does not exist", p.display());
            }
        }
        Ok(())
    }
}
