// SPDX-License-Identifier: Apache-2.0

//! Average training-data influence from normalized gradients.
//!
//! For checkpoint `t` and document `z`, the average influence is the mean
//! dot product between `z`'s unit gradient and the unit gradients of every
//! document in the corpus, which collapses to a single dot product with the
//! mean unit gradient. Stacking one column per checkpoint gives the
//! influence matrix `Φ` (documents × checkpoints).
//!
//! Reductions are 64-bit with a fixed order: rows are summed sequentially
//! inside fixed-size chunks and chunk partials are combined by a pairwise
//! tree in chunk order. Results are therefore bit-identical for a given
//! chunk size no matter how many worker threads run.

use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::defaults;
use crate::gradstore::{CheckpointGradients, CheckpointSet, DumpError};

#[derive(Debug, Error)]
pub enum InfluenceError {
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error("self-exclusion undefined for a single-document corpus")]
    SelfExclusionUndefined,
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Unit-norm gradient rows of one checkpoint, widened to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGradients {
    checkpoint_index: u32,
    doc_ids: Vec<u64>,
    dim: usize,
    rows: Vec<f64>,
    nonzero: Vec<bool>,
}

impl NormalizedGradients {
    pub fn checkpoint_index(&self) -> u32 {
        self.checkpoint_index
    }

    pub fn doc_ids(&self) -> &[u64] {
        &self.doc_ids
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows that were all zero and stay zero after normalization.
    pub fn zero_rows(&self) -> usize {
        self.nonzero.iter().filter(|nz| !**nz).count()
    }
}

/// Scale every row to unit Euclidean norm. Zero rows stay zero.
pub fn normalize_rows(grads: &CheckpointGradients) -> NormalizedGradients {
    let dim = grads.feature_dim();
    let mut rows = Vec::with_capacity(grads.values().len());
    let mut nonzero = Vec::with_capacity(grads.n_documents());
    for row in grads.rows() {
        let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if norm > 0.0 {
            rows.extend(row.iter().map(|&v| v as f64 / norm));
            nonzero.push(true);
        } else {
            rows.extend(std::iter::repeat_n(0.0, dim));
            nonzero.push(false);
        }
    }
    NormalizedGradients {
        checkpoint_index: grads.checkpoint_index(),
        doc_ids: grads.doc_ids().to_vec(),
        dim,
        rows,
        nonzero,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn tree_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Mean of the unit rows, reduced chunk by chunk.
pub fn mean_gradient(grads: &NormalizedGradients, chunk_size: usize) -> Vec<f64> {
    let d = grads.dim;
    let chunk = chunk_size.max(1) * d;
    let partials: Vec<Vec<f64>> = grads
        .rows
        .par_chunks(chunk)
        .map(|block| {
            let mut acc = vec![0.0; d];
            for row in block.chunks_exact(d) {
                acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
            acc
        })
        .collect();
    let n = grads.len() as f64;
    let mut mean = tree_sum(partials);
    mean.iter_mut().for_each(|v| *v /= n);
    mean
}

/// Average influence of every document at one checkpoint, via the mean
/// gradient. With `include_self = false` the document's own term is
/// removed, giving the mean over all other documents.
pub fn influence_column(
    grads: &NormalizedGradients,
    include_self: bool,
) -> Result<Vec<f64>, InfluenceError> {
    influence_column_chunked(grads, include_self, defaults::CHUNK_SIZE)
}

pub fn influence_column_chunked(
    grads: &NormalizedGradients,
    include_self: bool,
    chunk_size: usize,
) -> Result<Vec<f64>, InfluenceError> {
    let n = grads.len();
    if !include_self && n < 2 {
        return Err(InfluenceError::SelfExclusionUndefined);
    }
    let mean = mean_gradient(grads, chunk_size);
    let nf = n as f64;
    let column = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = dot(grads.row(i), &mean);
            if include_self {
                s
            } else {
                let own = if grads.nonzero[i] { 1.0 } else { 0.0 };
                (nf * s - own) / (nf - 1.0)
            }
        })
        .collect();
    Ok(column)
}

/// Quadratic reference for [`influence_column`]: explicit pairwise dot
/// products averaged per document.
pub fn pairwise_oracle(
    grads: &NormalizedGradients,
    include_self: bool,
) -> Result<Vec<f64>, InfluenceError> {
    let n = grads.len();
    if !include_self && n < 2 {
        return Err(InfluenceError::SelfExclusionUndefined);
    }
    let denom = if include_self { n } else { n - 1 } as f64;
    Ok((0..n)
        .map(|i| {
            let mut sum = 0.0;
            for j in 0..n {
                if include_self || i != j {
                    sum += dot(grads.row(i), grads.row(j));
                }
            }
            sum / denom
        })
        .collect())
}

/// `Φ`: one row per document, one column per checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    doc_ids: Vec<u64>,
    checkpoint_indices: Vec<u32>,
    values: Vec<f64>,
    self_term_included: bool,
}

impl InfluenceMatrix {
    /// `values` is row-major, `doc_ids.len()` × `checkpoint_indices.len()`.
    pub fn new(
        doc_ids: Vec<u64>,
        checkpoint_indices: Vec<u32>,
        values: Vec<f64>,
        self_term_included: bool,
    ) -> Result<Self, InfluenceError> {
        if doc_ids.is_empty() || checkpoint_indices.is_empty() {
            return Err(InfluenceError::Shape("empty influence matrix".into()));
        }
        if values.len() != doc_ids.len() * checkpoint_indices.len() {
            return Err(InfluenceError::Shape(format!(
                "{} values for {}x{}",
                values.len(),
                doc_ids.len(),
                checkpoint_indices.len()
            )));
        }
        Ok(InfluenceMatrix {
            doc_ids,
            checkpoint_indices,
            values,
            self_term_included,
        })
    }

    pub fn from_columns(
        doc_ids: Vec<u64>,
        checkpoint_indices: Vec<u32>,
        columns: &[Vec<f64>],
        self_term_included: bool,
    ) -> Result<Self, InfluenceError> {
        let n = doc_ids.len();
        if columns.len() != checkpoint_indices.len() || columns.iter().any(|c| c.len() != n) {
            return Err(InfluenceError::Shape("ragged columns".into()));
        }
        let t = columns.len();
        let mut values = vec![0.0; n * t];
        for (j, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                values[i * t + j] = *v;
            }
        }
        InfluenceMatrix::new(doc_ids, checkpoint_indices, values, self_term_included)
    }

    pub fn doc_ids(&self) -> &[u64] {
        &self.doc_ids
    }

    pub fn checkpoint_indices(&self) -> &[u32] {
        &self.checkpoint_indices
    }

    pub fn self_term_included(&self) -> bool {
        self.self_term_included
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn n_checkpoints(&self) -> usize {
        self.checkpoint_indices.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, doc: usize, checkpoint: usize) -> f64 {
        self.values[doc * self.n_checkpoints() + checkpoint]
    }

    pub fn row(&self, doc: usize) -> &[f64] {
        let t = self.n_checkpoints();
        &self.values[doc * t..(doc + 1) * t]
    }

    pub fn column(&self, checkpoint: usize) -> Vec<f64> {
        (0..self.n_docs()).map(|i| self.get(i, checkpoint)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceConfig {
    pub include_self: bool,
    pub chunk_size: usize,
}

impl Default for InfluenceConfig {
    fn default() -> Self {
        InfluenceConfig {
            include_self: true,
            chunk_size: defaults::CHUNK_SIZE,
        }
    }
}

/// Compute `Φ` for every checkpoint of `set`, scaling column `t` by the
/// checkpoint weight. Columns are computed in parallel.
pub fn influence_matrix(
    set: &CheckpointSet,
    config: InfluenceConfig,
) -> Result<InfluenceMatrix, InfluenceError> {
    let columns = set
        .checkpoints()
        .par_iter()
        .zip(set.weights())
        .map(|(ckpt, &w)| {
            let g = normalize_rows(ckpt);
            let mut col = influence_column_chunked(&g, config.include_self, config.chunk_size)?;
            if w != 1.0 {
                col.iter_mut().for_each(|v| *v *= w);
            }
            Ok(col)
        })
        .collect::<Result<Vec<_>, InfluenceError>>()?;
    let indices = set.checkpoints().iter().map(|c| c.checkpoint_index()).collect();
    InfluenceMatrix::from_columns(set.doc_ids().to_vec(), indices, &columns, config.include_self)
}

/// Per-document influence summed over checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateInfluence {
    pub doc_ids: Vec<u64>,
    pub values: Vec<f64>,
}

pub fn aggregate(phi: &InfluenceMatrix) -> AggregateInfluence {
    AggregateInfluence {
        doc_ids: phi.doc_ids.clone(),
        values: (0..phi.n_docs()).map(|i| phi.row(i).iter().sum()).collect(),
    }
}

/// Causal smoothing taps over the checkpoint axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LognormFilter {
    taps: Vec<f64>,
    mu: f64,
    sigma: f64,
}

impl LognormFilter {
    /// Arbitrary taps; must be non-negative and sum to 1 within 1e-12.
    pub fn from_taps(taps: Vec<f64>) -> Result<Self, InfluenceError> {
        if taps.is_empty() {
            return Err(InfluenceError::InvalidFilter("no taps".into()));
        }
        if taps.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(InfluenceError::InvalidFilter("taps must be finite and >= 0".into()));
        }
        let sum: f64 = taps.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(InfluenceError::InvalidFilter(format!("taps sum to {sum}")));
        }
        Ok(LognormFilter {
            taps,
            mu: f64::NAN,
            sigma: f64::NAN,
        })
    }

    /// `h(0) = 1`, all other taps 0.
    pub fn identity(len: usize) -> Self {
        let mut taps = vec![0.0; len.max(1)];
        taps[0] = 1.0;
        LognormFilter {
            taps,
            mu: f64::NAN,
            sigma: f64::NAN,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Lognormal density at `k + 1` for `k = 0..len`, normalized to sum 1.
///
/// Evaluated in log space and shifted by the maximum so that extreme
/// parameters cannot underflow every tap.
pub fn make_lognorm_filter(len: usize, mu: f64, sigma: f64) -> Result<LognormFilter, InfluenceError> {
    if len == 0 {
        return Err(InfluenceError::InvalidFilter("length must be >= 1".into()));
    }
    if sigma.is_nan() || sigma <= 0.0 || !sigma.is_finite() || !mu.is_finite() {
        return Err(InfluenceError::InvalidFilter(format!(
            "need finite mu and sigma > 0 (mu={mu}, sigma={sigma})"
        )));
    }
    // the 1/(sigma*sqrt(2pi)) factor cancels in the normalization
    let log_density: Vec<f64> = (1..=len)
        .map(|x| {
            let lx = (x as f64).ln();
            -lx - (lx - mu).powi(2) / (2.0 * sigma * sigma)
        })
        .collect();
    let peak = log_density.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_density.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(LognormFilter {
        taps: raw.into_iter().map(|v| v / total).collect(),
        mu,
        sigma,
    })
}

/// Causal convolution along the checkpoint axis:
/// `out[i][t] = Σ_k Φ[i][t-k] · h(k)`, terms with `t - k < 0` are zero.
pub fn convolve(phi: &InfluenceMatrix, h: &LognormFilter) -> Result<InfluenceMatrix, InfluenceError> {
    let t_len = phi.n_checkpoints();
    if h.len() > t_len {
        return Err(InfluenceError::InvalidFilter(format!(
            "filter has {} taps for {} checkpoints",
            h.len(),
            t_len
        )));
    }
    let mut values = Vec::with_capacity(phi.values.len());
    for i in 0..phi.n_docs() {
        let row = phi.row(i);
        for t in 0..t_len {
            let mut acc = 0.0;
            for (k, tap) in h.taps.iter().enumerate().take(t + 1) {
                acc += row[t - k] * tap;
            }
            values.push(acc);
        }
    }
    InfluenceMatrix::new(
        phi.doc_ids.clone(),
        phi.checkpoint_indices.clone(),
        values,
        phi.self_term_included,
    )
}

pub const PHI_MAGIC: [u8; 4] = *b"PHIM";
pub const PHI_VERSION: u32 = 1;

/// Binary `Φ` export.
///
/// Header mirrors the gradient dump: magic `b"PHIM"`, version, number of
/// documents, number of checkpoints, flags (bit 0: self term included), all
/// u32 LE. Then `n` u64 doc_ids, `T` u32 checkpoint indices and the
/// row-major f64 values, all little-endian.
pub fn write_phi(phi: &InfluenceMatrix, path: impl AsRef<Path>) -> Result<(), InfluenceError> {
    let path = path.as_ref();
    let io = |source| InfluenceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    let mut buf = Vec::with_capacity(20 + phi.doc_ids.len() * 8 + phi.values.len() * 8);
    buf.extend_from_slice(&PHI_MAGIC);
    buf.extend_from_slice(&PHI_VERSION.to_le_bytes());
    buf.extend_from_slice(&(phi.n_docs() as u32).to_le_bytes());
    buf.extend_from_slice(&(phi.n_checkpoints() as u32).to_le_bytes());
    buf.extend_from_slice(&u32::from(phi.self_term_included).to_le_bytes());
    phi.doc_ids.iter().for_each(|id| buf.extend_from_slice(&id.to_le_bytes()));
    phi.checkpoint_indices
        .iter()
        .for_each(|t| buf.extend_from_slice(&t.to_le_bytes()));
    phi.values.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
    w.write_all(&buf).map_err(io)?;
    w.flush().map_err(|source| InfluenceError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_phi(path: impl AsRef<Path>) -> Result<InfluenceMatrix, InfluenceError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| InfluenceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let bad = |message: &str| InfluenceError::Format {
        path: path.to_path_buf(),
        message: message.to_owned(),
    };
    if bytes.len() < 20 {
        return Err(bad("file shorter than header"));
    }
    if bytes[0..4] != PHI_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != PHI_VERSION {
        return Err(bad("version mismatch"));
    }
    let (n, t, flags) = (word(8) as usize, word(12) as usize, word(16));
    let expected = 20 + 8 * n + 4 * t + 8 * n * t;
    if bytes.len() < expected {
        return Err(bad("truncated payload"));
    }
    if bytes.len() > expected {
        return Err(bad("trailing bytes after payload"));
    }
    let mut off = 20;
    let doc_ids = (0..n)
        .map(|i| u64::from_le_bytes(bytes[off + 8 * i..off + 8 * i + 8].try_into().unwrap()))
        .collect();
    off += 8 * n;
    let indices = (0..t).map(|i| word(off + 4 * i)).collect();
    off += 4 * t;
    let values: Vec<f64> = (0..n * t)
        .map(|i| f64::from_le_bytes(bytes[off + 8 * i..off + 8 * i + 8].try_into().unwrap()))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite value"));
    }
    InfluenceMatrix::new(doc_ids, indices, values, flags & 1 == 1)
}

/// Tab-separated table: `doc_id`, one column per checkpoint, `aggregate`.
pub fn write_phi_table(phi: &InfluenceMatrix, path: impl AsRef<Path>) -> Result<(), InfluenceError> {
    let path = path.as_ref();
    let io = |source| InfluenceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let agg = aggregate(phi);
    let mut out = String::from("doc_id");
    for t in &phi.checkpoint_indices {
        out.push_str(&format!("\tckpt_{t}"));
    }
    out.push_str("\taggregate\n");
    for i in 0..phi.n_docs() {
        out.push_str(&phi.doc_ids[i].to_string());
        for v in phi.row(i) {
            out.push_str(&format!("\t{v}"));
        }
        out.push_str(&format!("\t{}\n", agg.values[i]));
    }
    fs::write(path, out).map_err(io)
}
