// SPDX-License-Identifier: Apache-2.0

//! Binary gradient dumps, one file per checkpoint.
//!
//! Layout (all integers and floats little-endian):
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 4 | magic `b"GDMP"` |
//! | 4  | 4 | format version (u32, currently 1) |
//! | 8  | 4 | checkpoint index (u32) |
//! | 12 | 4 | number of documents `n` (u32, >= 1) |
//! | 16 | 4 | feature dimension `d` (u32, >= 1) |
//! | 20 | 4·n·d | row-major f32 payload, row `i` is document `i` of the corpus |
//!
//! Next to `ckpt.gdmp` sits the row map `ckpt.gdmp.rows`: one line per row,
//! `"<row_position> <doc_id>"`, rows in ascending order.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"GDMP";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;
pub const DUMP_EXTENSION: &str = "gdmp";

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: bad magic {found:?}")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: version mismatch (found {found}, expected {FORMAT_VERSION})")]
    VersionMismatch { path: PathBuf, found: u32 },
    #[error("{path}: invalid header: {message}")]
    InvalidHeader { path: PathBuf, message: String },
    #[error("{path}: truncated payload ({rows_read} of {expected_rows} rows)")]
    TruncatedPayload {
        path: PathBuf,
        expected_rows: u32,
        rows_read: u32,
    },
    #[error("{path}: trailing bytes after payload")]
    TrailingBytes { path: PathBuf },
    #[error("{path}: non-finite value at row {row}, column {col}")]
    NonFinite { path: PathBuf, row: usize, col: usize },
    #[error("{path}: row map line {line}: {message}")]
    RowMap {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("header/row count mismatch: {0}")]
    Shape(String),
    #[error("inconsistent checkpoint set: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpHeader {
    pub format_version: u32,
    pub checkpoint_index: u32,
    pub n_documents: u32,
    pub feature_dim: u32,
}

impl DumpHeader {
    pub fn new(checkpoint_index: u32, n_documents: u32, feature_dim: u32) -> Self {
        DumpHeader {
            format_version: FORMAT_VERSION,
            checkpoint_index,
            n_documents,
            feature_dim,
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&self.format_version.to_le_bytes());
        out[8..12].copy_from_slice(&self.checkpoint_index.to_le_bytes());
        out[12..16].copy_from_slice(&self.n_documents.to_le_bytes());
        out[16..20].copy_from_slice(&self.feature_dim.to_le_bytes());
        out
    }

    fn from_bytes(buf: &[u8; HEADER_LEN], path: &Path) -> Result<Self, DumpError> {
        let word = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap());
        let magic: [u8; 4] = buf[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(DumpError::BadMagic {
                path: path.to_path_buf(),
                found: magic,
            });
        }
        let h = DumpHeader {
            format_version: word(4),
            checkpoint_index: word(8),
            n_documents: word(12),
            feature_dim: word(16),
        };
        if h.format_version != FORMAT_VERSION {
            return Err(DumpError::VersionMismatch {
                path: path.to_path_buf(),
                found: h.format_version,
            });
        }
        if h.n_documents == 0 || h.feature_dim == 0 {
            return Err(DumpError::InvalidHeader {
                path: path.to_path_buf(),
                message: format!("n_documents={} feature_dim={}", h.n_documents, h.feature_dim),
            });
        }
        Ok(h)
    }

    pub fn payload_len(&self) -> u64 {
        4 * self.n_documents as u64 * self.feature_dim as u64
    }
}

/// Gradient rows of one checkpoint, in corpus manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointGradients {
    header: DumpHeader,
    rows: Vec<f32>,
    doc_ids: Vec<u64>,
}

impl CheckpointGradients {
    /// `rows` is row-major with `doc_ids.len()` rows of `feature_dim` values.
    pub fn new(
        checkpoint_index: u32,
        doc_ids: Vec<u64>,
        feature_dim: usize,
        rows: Vec<f32>,
    ) -> Result<Self, DumpError> {
        if doc_ids.is_empty() || feature_dim == 0 {
            return Err(DumpError::Shape("need at least one row and one feature".into()));
        }
        if rows.len() != doc_ids.len() * feature_dim {
            return Err(DumpError::Shape(format!(
                "{} values for {} rows of dimension {}",
                rows.len(),
                doc_ids.len(),
                feature_dim
            )));
        }
        let n = u32::try_from(doc_ids.len()).map_err(|_| DumpError::Shape("too many rows".into()))?;
        let d = u32::try_from(feature_dim).map_err(|_| DumpError::Shape("dimension too large".into()))?;
        let mut seen = std::collections::HashSet::with_capacity(doc_ids.len());
        if let Some(dup) = doc_ids.iter().find(|id| !seen.insert(**id)) {
            return Err(DumpError::Shape(format!("duplicate doc_id {dup} in row map")));
        }
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            return Err(DumpError::NonFinite {
                path: PathBuf::from("<memory>"),
                row: pos / feature_dim,
                col: pos % feature_dim,
            });
        }
        Ok(CheckpointGradients {
            header: DumpHeader::new(checkpoint_index, n, d),
            rows,
            doc_ids,
        })
    }

    pub fn header(&self) -> &DumpHeader {
        &self.header
    }

    pub fn checkpoint_index(&self) -> u32 {
        self.header.checkpoint_index
    }

    pub fn n_documents(&self) -> usize {
        self.header.n_documents as usize
    }

    pub fn feature_dim(&self) -> usize {
        self.header.feature_dim as usize
    }

    pub fn doc_ids(&self) -> &[u64] {
        &self.doc_ids
    }

    pub fn values(&self) -> &[f32] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.feature_dim();
        &self.rows[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.rows.chunks_exact(self.feature_dim())
    }

    /// doc_id → row position.
    pub fn row_index(&self) -> HashMap<u64, usize> {
        self.doc_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect()
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DumpError + '_ {
    move |source| DumpError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn row_map_path(dump_path: &Path) -> PathBuf {
    let mut s = dump_path.as_os_str().to_owned();
    s.push(".rows");
    PathBuf::from(s)
}

/// Write `grads` to `path` and its row map to `path.rows`.
pub fn write_dump(grads: &CheckpointGradients, path: impl AsRef<Path>) -> Result<(), DumpError> {
    let path = path.as_ref();
    let h = grads.header;
    if grads.rows.len() as u64 * 4 != h.payload_len() || grads.doc_ids.len() != h.n_documents as usize {
        return Err(DumpError::Shape(format!(
            "header says {}x{}, have {} values and {} ids",
            h.n_documents,
            h.feature_dim,
            grads.rows.len(),
            grads.doc_ids.len()
        )));
    }
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    w.write_all(&h.to_bytes()).map_err(io_err(path))?;
    for v in &grads.rows {
        w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;

    let map_path = row_map_path(path);
    let mut m = BufWriter::new(fs::File::create(&map_path).map_err(io_err(&map_path))?);
    for (i, id) in grads.doc_ids.iter().enumerate() {
        writeln!(m, "{i} {id}").map_err(io_err(&map_path))?;
    }
    m.flush().map_err(io_err(&map_path))
}

/// Sequential row reader over one dump file.
pub struct DumpReader<R> {
    inner: R,
    header: DumpHeader,
    path: PathBuf,
    next_row: u32,
    buf: Vec<u8>,
}

impl DumpReader<BufReader<fs::File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DumpError> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(io_err(path))?;
        DumpReader::new(BufReader::new(file), path)
    }
}

impl<R: Read> DumpReader<R> {
    pub fn new(mut inner: R, path: &Path) -> Result<Self, DumpError> {
        let mut hbuf = [0u8; HEADER_LEN];
        if !read_full(&mut inner, &mut hbuf).map_err(io_err(path))? {
            return Err(DumpError::InvalidHeader {
                path: path.to_path_buf(),
                message: "file shorter than header".into(),
            });
        }
        let header = DumpHeader::from_bytes(&hbuf, path)?;
        Ok(DumpReader {
            inner,
            header,
            path: path.to_path_buf(),
            next_row: 0,
            buf: vec![0u8; 4 * header.feature_dim as usize],
        })
    }

    pub fn header(&self) -> &DumpHeader {
        &self.header
    }

    /// Read the next row into `out`. Returns `Ok(false)` once all rows are read
    /// and the file has been checked for trailing bytes.
    pub fn read_row(&mut self, out: &mut Vec<f32>) -> Result<bool, DumpError> {
        if self.next_row == self.header.n_documents {
            let mut probe = [0u8; 1];
            let extra = self.inner.read(&mut probe).map_err(io_err(&self.path))?;
            if extra != 0 {
                return Err(DumpError::TrailingBytes {
                    path: self.path.clone(),
                });
            }
            return Ok(false);
        }
        let complete = read_full(&mut self.inner, &mut self.buf).map_err(io_err(&self.path))?;
        if !complete {
            return Err(DumpError::TruncatedPayload {
                path: self.path.clone(),
                expected_rows: self.header.n_documents,
                rows_read: self.next_row,
            });
        }
        out.clear();
        for (col, chunk) in self.buf.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(DumpError::NonFinite {
                    path: self.path.clone(),
                    row: self.next_row as usize,
                    col,
                });
            }
            out.push(v);
        }
        self.next_row += 1;
        Ok(true)
    }
}

/// Fill `buf` completely; `Ok(false)` on early EOF.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => return Ok(false),
            Ok(k) => filled += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

fn read_row_map(path: &Path, expected: usize) -> Result<Vec<u64>, DumpError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut ids = Vec::with_capacity(expected);
    let bad = |line: usize, message: String| DumpError::RowMap {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(pos), Some(id), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad(i + 1, "expected \"row_position doc_id\"".into()));
        };
        let pos: usize = pos.parse().map_err(|e| bad(i + 1, format!("row position: {e}")))?;
        let id: u64 = id.parse().map_err(|e| bad(i + 1, format!("doc_id: {e}")))?;
        if pos != ids.len() {
            return Err(bad(i + 1, format!("expected row {}, found {pos}", ids.len())));
        }
        ids.push(id);
    }
    if ids.len() != expected {
        return Err(bad(ids.len() + 1, format!("{} rows mapped, header has {expected}", ids.len())));
    }
    Ok(ids)
}

/// Read and validate a dump and its row map.
pub fn read_dump(path: impl AsRef<Path>) -> Result<CheckpointGradients, DumpError> {
    let path = path.as_ref();
    let mut reader = DumpReader::open(path)?;
    let h = *reader.header();
    let mut rows = Vec::with_capacity((h.n_documents as usize) * (h.feature_dim as usize));
    let mut row = Vec::with_capacity(h.feature_dim as usize);
    while reader.read_row(&mut row)? {
        rows.extend_from_slice(&row);
    }
    let doc_ids = read_row_map(&row_map_path(path), h.n_documents as usize)?;
    let grads = CheckpointGradients::new(h.checkpoint_index, doc_ids, h.feature_dim as usize, rows)
        .map_err(|e| match e {
            DumpError::Shape(m) => DumpError::RowMap {
                path: row_map_path(path),
                line: 0,
                message: m,
            },
            other => other,
        })?;
    Ok(grads)
}

/// All checkpoints of one surrogate run.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSet {
    checkpoints: Vec<CheckpointGradients>,
    weights: Vec<f64>,
}

impl CheckpointSet {
    /// Checkpoints must share documents and dimension and be ordered by
    /// strictly increasing checkpoint index. Weights default to 1.
    pub fn new(checkpoints: Vec<CheckpointGradients>) -> Result<Self, DumpError> {
        let first = checkpoints
            .first()
            .ok_or_else(|| DumpError::Inconsistent("no checkpoints".into()))?;
        for pair in checkpoints.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.checkpoint_index() <= a.checkpoint_index() {
                return Err(DumpError::Inconsistent(format!(
                    "checkpoint {} follows {}",
                    b.checkpoint_index(),
                    a.checkpoint_index()
                )));
            }
        }
        for c in &checkpoints[1..] {
            if c.feature_dim() != first.feature_dim() || c.n_documents() != first.n_documents() {
                return Err(DumpError::Inconsistent(format!(
                    "checkpoint {} is {}x{}, checkpoint {} is {}x{}",
                    c.checkpoint_index(),
                    c.n_documents(),
                    c.feature_dim(),
                    first.checkpoint_index(),
                    first.n_documents(),
                    first.feature_dim()
                )));
            }
            if c.doc_ids() != first.doc_ids() {
                return Err(DumpError::Inconsistent(format!(
                    "checkpoint {} rows are not aligned with checkpoint {}",
                    c.checkpoint_index(),
                    first.checkpoint_index()
                )));
            }
        }
        let weights = vec![1.0; checkpoints.len()];
        Ok(CheckpointSet {
            checkpoints,
            weights,
        })
    }

    /// Per-checkpoint learning-rate weights applied to influence columns.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, DumpError> {
        if weights.len() != self.checkpoints.len() {
            return Err(DumpError::Inconsistent(format!(
                "{} weights for {} checkpoints",
                weights.len(),
                self.checkpoints.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DumpError::Inconsistent("weights must be finite and >= 0".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn checkpoints(&self) -> &[CheckpointGradients] {
        &self.checkpoints
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn doc_ids(&self) -> &[u64] {
        self.checkpoints[0].doc_ids()
    }
}

/// Read every `*.gdmp` file in `dir` (in parallel) into a checkpoint set
/// ordered by checkpoint index.
pub fn read_dump_dir(dir: impl AsRef<Path>) -> Result<CheckpointSet, DumpError> {
    let dir = dir.as_ref();
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let p = entry.map_err(io_err(dir))?.path();
        if p.extension().is_some_and(|e| e == DUMP_EXTENSION) {
            paths.push(p);
        }
    }
    paths.sort();
    let mut checkpoints = paths
        .par_iter()
        .map(read_dump)
        .collect::<Result<Vec<_>, _>>()?;
    checkpoints.sort_by_key(|c| c.checkpoint_index());
    CheckpointSet::new(checkpoints)
}
