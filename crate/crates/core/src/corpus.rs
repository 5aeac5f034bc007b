// SPDX-License-Identifier: Apache-2.0

//! Stage-labelled document collections.
//!
//! # Corpus manifest format
//!
//! A corpus manifest is UTF-8 JSON Lines. The first non-blank line is a
//! header object, every following non-blank line is one document record:
//!
//! ```text
//! {"corpus":"toy","documents":2,"total_words":7}
//! {"doc_id":0,"source":"childes","stage":"C1","text":"look at the doggy"}
//! {"doc_id":1,"source":"gutenberg","stage":"C5","text_file":"texts/g.txt","byte_range":[0,17]}
//! ```
//!
//! Header fields: `corpus` (name), `documents` (record count) and
//! `total_words`; both counts are checked against the records. Record
//! fields:
//!
//! * `doc_id`: non-negative integer, unique within the corpus.
//! * `source`: source dataset name.
//! * `stage`: one of `C1`..`C5`.
//! * `text`: inline document text, or
//! * `text_file` (relative to the manifest directory) with an optional
//!   half-open `byte_range` `[start, end)`; the slice must be valid UTF-8.
//! * `word_count` (optional): checked against the tokenized text.
//!
//! Words are whitespace-delimited tokens of the raw text. No lowercasing or
//! punctuation stripping is applied, so word counts here agree with the
//! counts used by gradient extraction and budget accounting.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate doc_id {doc_id}")]
    DuplicateDocId { line: usize, doc_id: u64 },
    #[error("line {line}: unknown stage label {label:?}")]
    UnknownStage { line: usize, label: String },
    #[error("line {line}: doc_id {doc_id} has no words")]
    EmptyDocument { line: usize, doc_id: u64 },
    #[error("line {line}: doc_id {doc_id} declares {declared} words but has {actual}")]
    WordCountMismatch {
        line: usize,
        doc_id: u64,
        declared: usize,
        actual: usize,
    },
    #[error("header declares {field} = {declared} but records give {actual}")]
    HeaderMismatch {
        field: &'static str,
        declared: u64,
        actual: u64,
    },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("stage {stage} has {available} words, {needed} requested (shortfall {shortfall})")]
    InsufficientWords {
        stage: Stage,
        needed: u64,
        available: u64,
        shortfall: u64,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Source-difficulty stage, from child-directed speech (C1) to written
/// English (C5).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    C1,
    C2,
    C3,
    C4,
    C5,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::C1, Stage::C2, Stage::C3, Stage::C4, Stage::C5];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Stage::C1 => "C1",
            Stage::C2 => "C2",
            Stage::C3 => "C3",
            Stage::C4 => "C4",
            Stage::C5 => "C5",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C1" => Ok(Stage::C1),
            "C2" => Ok(Stage::C2),
            "C3" => Ok(Stage::C3),
            "C4" => Ok(Stage::C4),
            "C5" => Ok(Stage::C5),
            _ => Err(format!("unknown stage label {s:?}")),
        }
    }
}

/// Split raw text into word tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: u64,
    pub source_name: String,
    pub stage: Stage,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(doc_id: u64, source_name: impl Into<String>, stage: Stage, text: &str) -> Self {
        Document {
            doc_id,
            source_name: source_name.into(),
            stage,
            tokens: tokenize(text),
        }
    }

    pub fn word_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// An immutable, validated document collection. Document order is the
/// canonical identity order: gradient dump rows and influence rows follow it.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    documents: Vec<Document>,
    total_words: u64,
    positions: HashMap<u64, usize>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, documents: Vec<Document>) -> Result<Self, CorpusError> {
        if documents.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut positions = HashMap::with_capacity(documents.len());
        for (i, d) in documents.iter().enumerate() {
            if positions.insert(d.doc_id, i).is_some() {
                return Err(CorpusError::InvalidArgument(format!(
                    "duplicate doc_id {} at position {i}",
                    d.doc_id
                )));
            }
            if d.tokens.is_empty() {
                return Err(CorpusError::InvalidArgument(format!(
                    "doc_id {} has no words",
                    d.doc_id
                )));
            }
        }
        let total_words = documents.iter().map(|d| d.word_count() as u64).sum();
        Ok(Corpus {
            name: name.into(),
            documents,
            total_words,
            positions,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn total_words(&self) -> u64 {
        self.total_words
    }

    pub fn doc_ids(&self) -> Vec<u64> {
        self.documents.iter().map(|d| d.doc_id).collect()
    }

    pub fn position(&self, doc_id: u64) -> Option<usize> {
        self.positions.get(&doc_id).copied()
    }

    pub fn get(&self, doc_id: u64) -> Option<&Document> {
        self.position(doc_id).map(|i| &self.documents[i])
    }

    pub fn contains(&self, doc_id: u64) -> bool {
        self.positions.contains_key(&doc_id)
    }

    pub fn max_doc_len(&self) -> u64 {
        self.documents
            .iter()
            .map(|d| d.word_count() as u64)
            .max()
            .unwrap_or(0)
    }

    /// Word count of `doc_id`, or 0 for unknown ids.
    pub fn words_of(&self, doc_id: u64) -> u64 {
        self.get(doc_id).map_or(0, |d| d.word_count() as u64)
    }

    pub fn stage_words(&self) -> [u64; Stage::COUNT] {
        let mut out = [0u64; Stage::COUNT];
        for d in &self.documents {
            out[d.stage.index()] += d.word_count() as u64;
        }
        out
    }

    pub fn stages_present(&self) -> Vec<Stage> {
        let words = self.stage_words();
        Stage::ALL
            .into_iter()
            .filter(|s| words[s.index()] > 0)
            .collect()
    }

    /// Hex SHA-256 over the canonical inline serialization.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.name.as_bytes());
        hasher.update([0u8]);
        for d in &self.documents {
            hasher.update(d.doc_id.to_le_bytes());
            hasher.update(d.source_name.as_bytes());
            hasher.update([0u8]);
            hasher.update(d.stage.label().as_bytes());
            for t in &d.tokens {
                hasher.update(t.as_bytes());
                hasher.update(b" ");
            }
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestHeader {
    corpus: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    documents: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    total_words: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRecord {
    doc_id: u64,
    source: String,
    stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    byte_range: Option<[u64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    word_count: Option<usize>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text_file(
    base: &Path,
    file: &Path,
    range: Option<[u64; 2]>,
    line: usize,
) -> Result<String, CorpusError> {
    let path = base.join(file);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let slice = match range {
        None => &bytes[..],
        Some([start, end]) => {
            let (s, e) = (start as usize, end as usize);
            if s > e || e > bytes.len() {
                return Err(CorpusError::Malformed {
                    line,
                    message: format!(
                        "byte_range [{start}, {end}) outside {} ({} bytes)",
                        path.display(),
                        bytes.len()
                    ),
                });
            }
            &bytes[s..e]
        }
    };
    String::from_utf8(slice.to_vec()).map_err(|e| CorpusError::Malformed {
        line,
        message: format!("text slice is not UTF-8: {e}"),
    })
}

/// Load and validate a corpus manifest.
pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = manifest_path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let mut header: Option<ManifestHeader> = None;
    let mut documents = Vec::new();
    let mut seen = HashSet::new();

    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            let h: ManifestHeader =
                serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                    line: lineno,
                    message: format!("bad header: {e}"),
                })?;
            header = Some(h);
            continue;
        }
        let rec: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: lineno,
                message: e.to_string(),
            })?;
        if !seen.insert(rec.doc_id) {
            return Err(CorpusError::DuplicateDocId {
                line: lineno,
                doc_id: rec.doc_id,
            });
        }
        let stage = rec
            .stage
            .parse::<Stage>()
            .map_err(|_| CorpusError::UnknownStage {
                line: lineno,
                label: rec.stage.clone(),
            })?;
        let text = match (rec.text, rec.text_file) {
            (Some(t), None) => {
                if rec.byte_range.is_some() {
                    return Err(CorpusError::Malformed {
                        line: lineno,
                        message: "byte_range requires text_file".into(),
                    });
                }
                t
            }
            (None, Some(f)) => read_text_file(base, &f, rec.byte_range, lineno)?,
            _ => {
                return Err(CorpusError::Malformed {
                    line: lineno,
                    message: "exactly one of text or text_file is required".into(),
                })
            }
        };
        let doc = Document::new(rec.doc_id, rec.source, stage, &text);
        if doc.tokens.is_empty() {
            return Err(CorpusError::EmptyDocument {
                line: lineno,
                doc_id: doc.doc_id,
            });
        }
        if let Some(declared) = rec.word_count {
            if declared != doc.word_count() {
                return Err(CorpusError::WordCountMismatch {
                    line: lineno,
                    doc_id: doc.doc_id,
                    declared,
                    actual: doc.word_count(),
                });
            }
        }
        documents.push(doc);
    }

    let header = header.ok_or(CorpusError::EmptyCorpus)?;
    if documents.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let corpus = Corpus::new(header.corpus, documents)?;
    if let Some(n) = header.documents {
        if n != corpus.len() as u64 {
            return Err(CorpusError::HeaderMismatch {
                field: "documents",
                declared: n,
                actual: corpus.len() as u64,
            });
        }
    }
    if let Some(w) = header.total_words {
        if w != corpus.total_words() {
            return Err(CorpusError::HeaderMismatch {
                field: "total_words",
                declared: w,
                actual: corpus.total_words(),
            });
        }
    }
    Ok(corpus)
}

/// Write `corpus` as a manifest with inline text.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let header = ManifestHeader {
        corpus: corpus.name.clone(),
        documents: Some(corpus.len() as u64),
        total_words: Some(corpus.total_words),
    };
    let mut emit = |value: String| writeln!(w, "{value}").map_err(io_err(path));
    emit(serde_json::to_string(&header).expect("header serializes"))?;
    for d in &corpus.documents {
        let rec = ManifestRecord {
            doc_id: d.doc_id,
            source: d.source_name.clone(),
            stage: d.stage.label().to_owned(),
            text: Some(d.text()),
            text_file: None,
            byte_range: None,
            word_count: Some(d.word_count()),
        };
        emit(serde_json::to_string(&rec).expect("record serializes"))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquitokenReport {
    pub groups: usize,
    pub documents: usize,
    pub dropped_words: u64,
}

/// Rebuild `corpus` from fixed-length documents.
///
/// Documents are grouped by `(source, stage)` in order of first appearance;
/// each group's token stream is concatenated in document order and cut into
/// documents of exactly `target_len` words. A trailing remainder shorter
/// than `target_len` is dropped. New doc_ids count up from 0.
pub fn synth_equitoken(
    corpus: &Corpus,
    target_len: usize,
) -> Result<(Corpus, EquitokenReport), CorpusError> {
    if target_len == 0 {
        return Err(CorpusError::InvalidArgument("target_len must be >= 1".into()));
    }
    let mut order: Vec<(&str, Stage)> = Vec::new();
    let mut streams: HashMap<(&str, Stage), Vec<&String>> = HashMap::new();
    for d in corpus.documents() {
        let key = (d.source_name.as_str(), d.stage);
        let stream = streams.entry(key).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        stream.extend(d.tokens.iter());
    }

    let mut docs = Vec::new();
    let mut dropped = 0u64;
    for key in &order {
        let stream = &streams[key];
        let chunks = stream.chunks_exact(target_len);
        dropped += chunks.remainder().len() as u64;
        for chunk in chunks {
            docs.push(Document {
                doc_id: docs.len() as u64,
                source_name: key.0.to_owned(),
                stage: key.1,
                tokens: chunk.iter().map(|t| (*t).clone()).collect(),
            });
        }
    }
    let report = EquitokenReport {
        groups: order.len(),
        documents: docs.len(),
        dropped_words: dropped,
    };
    let out = Corpus::new(format!("{}-equitoken{}", corpus.name(), target_len), docs)?;
    Ok((out, report))
}

/// Sample an equal number of words per stage.
///
/// For each stage present, documents are visited in a seeded shuffled order
/// and taken until the next one would push the stage total past
/// `words_per_stage`. Selected documents keep their ids and their relative
/// corpus order.
pub fn stratify(corpus: &Corpus, words_per_stage: u64, seed: u64) -> Result<Corpus, CorpusError> {
    if words_per_stage == 0 {
        return Err(CorpusError::InvalidArgument(
            "words_per_stage must be >= 1".into(),
        ));
    }
    let available = corpus.stage_words();
    for stage in corpus.stages_present() {
        let have = available[stage.index()];
        if have < words_per_stage {
            return Err(CorpusError::InsufficientWords {
                stage,
                needed: words_per_stage,
                available: have,
                shortfall: words_per_stage - have,
            });
        }
    }

    let mut keep = vec![false; corpus.len()];
    for stage in corpus.stages_present() {
        let mut members: Vec<usize> = corpus
            .documents()
            .iter()
            .enumerate()
            .filter(|(_, d)| d.stage == stage)
            .map(|(i, _)| i)
            .collect();
        rng::shuffle_with(&mut members, seed, "stratify", stage.index() as u64);
        let mut words = 0u64;
        for i in members {
            let w = corpus.documents()[i].word_count() as u64;
            if words + w > words_per_stage {
                break;
            }
            words += w;
            keep[i] = true;
        }
    }
    let docs = corpus
        .documents()
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(d, _)| d.clone())
        .collect();
    Corpus::new(format!("{}-stratified", corpus.name()), docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: usize, tag: &str) -> String {
        (0..n).map(|i| format!("{tag}{i}")).collect::<Vec<_>>().join(" ")
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn loads_three_document_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{{\"corpus\":\"toy\",\"documents\":3,\"total_words\":12}}\n\
             {{\"doc_id\":0,\"source\":\"childes\",\"stage\":\"C1\",\"text\":\"{}\",\"word_count\":4}}\n\
             {{\"doc_id\":1,\"source\":\"childes\",\"stage\":\"C1\",\"text\":\"{}\"}}\n\
             {{\"doc_id\":2,\"source\":\"gutenberg\",\"stage\":\"C5\",\"text\":\"{}\"}}\n",
            words(4, "a"),
            words(2, "b"),
            words(6, "c")
        );
        let c = load_corpus(write(dir.path(), "m.jsonl", &body)).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.total_words(), 12);
        assert_eq!(c.doc_ids(), vec![0, 1, 2]);
        assert_eq!(c.documents()[2].stage, Stage::C5);
    }

    #[test]
    fn duplicate_doc_id_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let body = "{\"corpus\":\"x\"}\n\
                    {\"doc_id\":7,\"source\":\"s\",\"stage\":\"C1\",\"text\":\"a b\"}\n\
                    {\"doc_id\":7,\"source\":\"s\",\"stage\":\"C2\",\"text\":\"c\"}\n";
        let err = load_corpus(write(dir.path(), "m.jsonl", body)).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateDocId { line: 3, doc_id: 7 }));
        assert!(err.to_string().contains("duplicate doc_id"));
    }

    #[test]
    fn empty_manifest_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_corpus(write(dir.path(), "a.jsonl", "")).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
        let err = load_corpus(write(dir.path(), "b.jsonl", "{\"corpus\":\"x\"}\n")).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
    }

    #[test]
    fn unknown_stage_and_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let body = "{\"corpus\":\"x\"}\n{\"doc_id\":1,\"source\":\"s\",\"stage\":\"C9\",\"text\":\"a\"}\n";
        let err = load_corpus(write(dir.path(), "a.jsonl", body)).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownStage { line: 2, .. }));

        let body = "{\"corpus\":\"x\"}\n\n{\"doc_id\":1,\"source\":\"s\"\n";
        let err = load_corpus(write(dir.path(), "b.jsonl", body)).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 3, .. }));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_corpus("/nonexistent/corpus.jsonl").unwrap_err();
        assert!(matches!(err, CorpusError::Io { .. }));
    }

    #[test]
    fn header_counts_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let body = "{\"corpus\":\"x\",\"total_words\":5}\n{\"doc_id\":1,\"source\":\"s\",\"stage\":\"C1\",\"text\":\"a b\"}\n";
        let err = load_corpus(write(dir.path(), "a.jsonl", body)).unwrap_err();
        assert!(matches!(err, CorpusError::HeaderMismatch { field: "total_words", .. }));
    }

    #[test]
    fn file_reference_matches_inline_text() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "texts.txt", "xx one two three yy");
        let by_ref = "{\"corpus\":\"x\"}\n{\"doc_id\":1,\"source\":\"s\",\"stage\":\"C4\",\"text_file\":\"texts.txt\",\"byte_range\":[3,16]}\n";
        let inline = "{\"corpus\":\"x\"}\n{\"doc_id\":1,\"source\":\"s\",\"stage\":\"C4\",\"text\":\"one two three\"}\n";
        let a = load_corpus(write(dir.path(), "a.jsonl", by_ref)).unwrap();
        let b = load_corpus(write(dir.path(), "b.jsonl", inline)).unwrap();
        assert_eq!(a, b);

        let bad = "{\"corpus\":\"x\"}\n{\"doc_id\":1,\"source\":\"s\",\"stage\":\"C4\",\"text_file\":\"texts.txt\",\"byte_range\":[3,99]}\n";
        assert!(matches!(
            load_corpus(write(dir.path(), "c.jsonl", bad)).unwrap_err(),
            CorpusError::Malformed { line: 2, .. }
        ));
    }

    #[test]
    fn equitoken_slices_and_drops_remainder() {
        let c = Corpus::new(
            "t",
            vec![
                Document::new(0, "s", Stage::C1, &words(130, "a")),
                Document::new(1, "s", Stage::C1, &words(100, "b")),
            ],
        )
        .unwrap();
        let (out, rep) = synth_equitoken(&c, 100).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(rep.dropped_words, 30);
        assert!(out.documents().iter().all(|d| d.word_count() == 100));
        assert_eq!(out.doc_ids(), vec![0, 1]);
        // second synthetic document straddles the original boundary
        assert_eq!(out.documents()[1].tokens[0], "a100");
        assert_eq!(out.documents()[1].tokens[30], "b0");

        let exact = Corpus::new("t", vec![Document::new(4, "s", Stage::C2, &words(100, "a"))]).unwrap();
        let (out, rep) = synth_equitoken(&exact, 100).unwrap();
        assert_eq!((out.len(), rep.dropped_words), (1, 0));
    }

    #[test]
    fn equitoken_never_mixes_stages() {
        let c = Corpus::new(
            "t",
            vec![
                Document::new(0, "s", Stage::C1, &words(3, "a")),
                Document::new(1, "s", Stage::C2, &words(3, "b")),
            ],
        )
        .unwrap();
        let err = synth_equitoken(&c, 4).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyCorpus));
        let (out, _) = synth_equitoken(&c, 3).unwrap();
        assert_eq!(out.documents()[0].stage, Stage::C1);
        assert_eq!(out.documents()[1].stage, Stage::C2);
    }

    fn staged_corpus() -> Corpus {
        let mut docs = Vec::new();
        for (s, stage) in Stage::ALL.into_iter().enumerate() {
            for j in 0..20 {
                let id = (s * 100 + j) as u64;
                docs.push(Document::new(id, "src", stage, &words(30 + (j * 7) % 41, "w")));
            }
        }
        Corpus::new("staged", docs).unwrap()
    }

    #[test]
    fn stratify_fills_each_stage_greedily() {
        let c = staged_corpus();
        let out = stratify(&c, 500, 3).unwrap();
        let max = c.max_doc_len();
        for w in out.stage_words() {
            assert!(w <= 500 && w + max >= 500, "stage total {w}");
        }
        assert_eq!(out, stratify(&c, 500, 3).unwrap());
        assert_ne!(out.doc_ids(), stratify(&c, 500, 4).unwrap().doc_ids());
        // canonical order preserved
        let ids = out.doc_ids();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn stratify_names_short_stage() {
        let c = staged_corpus();
        let supply = c.stage_words()[0];
        let err = stratify(&c, supply + 10, 1).unwrap_err();
        match err {
            CorpusError::InsufficientWords { stage, shortfall, .. } => {
                assert_eq!(stage, Stage::C1);
                assert_eq!(shortfall, 10);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let c = staged_corpus();
        let p = dir.path().join("c.jsonl");
        write_corpus(&c, &p).unwrap();
        assert_eq!(load_corpus(&p).unwrap(), c);
    }
}
