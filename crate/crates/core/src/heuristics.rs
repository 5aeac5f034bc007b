// SPDX-License-Identifier: Apache-2.0

//! Model-agnostic difficulty scores: moving-average type-token ratio and
//! perplexity under a frozen add-alpha unigram model.

use std::collections::HashMap;
use std::fs;
use std::hash::Hash;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Corpus;

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("empty token sequence")]
    EmptyTokens,
    #[error("window must be >= 1")]
    ZeroWindow,
    #[error("smoothing alpha must be finite and >= 0, got {0}")]
    BadAlpha(f64),
    #[error("zero-probability token {0:?}")]
    ZeroProbability(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Mean distinct-token fraction over every length-`window` sliding window.
/// Sequences shorter than the window score their plain type-token ratio.
pub fn mattr<T: Eq + Hash>(tokens: &[T], window: usize) -> Result<f64, HeuristicError> {
    if tokens.is_empty() {
        return Err(HeuristicError::EmptyTokens);
    }
    if window == 0 {
        return Err(HeuristicError::ZeroWindow);
    }
    let w = window.min(tokens.len());
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for t in &tokens[..w] {
        *counts.entry(t).or_default() += 1;
    }
    let mut distinct_sum = counts.len();
    let n_windows = tokens.len() - w + 1;
    for i in w..tokens.len() {
        let out = &tokens[i - w];
        let c = counts.get_mut(out).unwrap();
        *c -= 1;
        if *c == 0 {
            counts.remove(out);
        }
        *counts.entry(&tokens[i]).or_default() += 1;
        distinct_sum += counts.len();
    }
    Ok(distinct_sum as f64 / (n_windows * w) as f64)
}

/// Frozen unigram counts with add-alpha smoothing over the vocabulary plus
/// one shared unknown slot:
/// `p(w) = (count(w) + alpha) / (total + alpha * (V + 1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramModel {
    counts: HashMap<String, u64>,
    total: u64,
    alpha: f64,
}

impl UnigramModel {
    pub fn from_counts(counts: HashMap<String, u64>, alpha: f64) -> Result<Self, HeuristicError> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(HeuristicError::BadAlpha(alpha));
        }
        let counts: HashMap<String, u64> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        let total = counts.values().sum();
        Ok(UnigramModel {
            counts,
            total,
            alpha,
        })
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    fn denominator(&self) -> f64 {
        self.total as f64 + self.alpha * (self.vocab_size() as f64 + 1.0)
    }

    pub fn prob(&self, token: &str) -> f64 {
        (self.count(token) as f64 + self.alpha) / self.denominator()
    }

    pub fn unknown_prob(&self) -> f64 {
        self.alpha / self.denominator()
    }
}

/// Count every token of `corpus`.
pub fn train_unigram(corpus: &Corpus, alpha: f64) -> Result<UnigramModel, HeuristicError> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for d in corpus.documents() {
        for t in &d.tokens {
            *counts.entry(t.clone()).or_default() += 1;
        }
    }
    UnigramModel::from_counts(counts, alpha)
}

/// `exp(-(1/n) Σ ln p(w))` over `tokens`.
pub fn perplexity<S: AsRef<str>>(model: &UnigramModel, tokens: &[S]) -> Result<f64, HeuristicError> {
    if tokens.is_empty() {
        return Err(HeuristicError::EmptyTokens);
    }
    let mut log_sum = 0.0;
    for t in tokens {
        let p = model.prob(t.as_ref());
        if p <= 0.0 {
            return Err(HeuristicError::ZeroProbability(t.as_ref().to_owned()));
        }
        log_sum += p.ln();
    }
    Ok((-log_sum / tokens.len() as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DocScore {
    pub doc_id: u64,
    pub mattr: f64,
    pub perplexity: f64,
}

/// Per-document heuristic scores in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<DocScore>,
}

impl ScoreTable {
    pub fn doc_ids(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.doc_id).collect()
    }

    pub fn mattr(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mattr).collect()
    }

    pub fn perplexity(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.perplexity).collect()
    }
}

/// Score every document: MATTR with `window`, perplexity under a unigram
/// model trained on the whole corpus with smoothing `alpha`.
pub fn score_corpus(corpus: &Corpus, window: usize, alpha: f64) -> Result<ScoreTable, HeuristicError> {
    let model = train_unigram(corpus, alpha)?;
    let rows = corpus
        .documents()
        .par_iter()
        .map(|d| {
            Ok(DocScore {
                doc_id: d.doc_id,
                mattr: mattr(&d.tokens, window)?,
                perplexity: perplexity(&model, &d.tokens)?,
            })
        })
        .collect::<Result<Vec<_>, HeuristicError>>()?;
    Ok(ScoreTable { rows })
}

/// Tab-separated `doc_id  mattr  perplexity` with a header line.
pub fn write_scores(table: &ScoreTable, path: impl AsRef<Path>) -> Result<(), HeuristicError> {
    let path = path.as_ref();
    let mut out = String::from("doc_id\tmattr\tperplexity\n");
    for r in &table.rows {
        out.push_str(&format!("{}\t{}\t{}\n", r.doc_id, r.mattr, r.perplexity));
    }
    fs::write(path, out).map_err(|source| HeuristicError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreTable, HeuristicError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| HeuristicError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |line: usize, message: String| HeuristicError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.starts_with("doc_id") || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(parse_err(i + 1, format!("expected 3 fields, got {}", f.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| parse_err(i + 1, e.to_string()));
        rows.push(DocScore {
            doc_id: f[0].trim().parse().map_err(|e| parse_err(i + 1, format!("doc_id: {e}")))?,
            mattr: num(f[1])?,
            perplexity: num(f[2])?,
        });
    }
    Ok(ScoreTable { rows })
}
