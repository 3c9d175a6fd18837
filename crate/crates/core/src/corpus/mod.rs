//! Document ingestion, paragraph segmentation and embedding.

pub mod hashing;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agents::{Provider, ProviderError};
use crate::text::top_terms;

/// Default minimum paragraph length in characters; shorter units are merged.
pub const DEFAULT_MIN_CHARS: usize = 40;
const EMBED_BATCH: usize = 64;
const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus path {0} does not exist")]
    MissingPath(PathBuf),
    #[error("empty corpus: no documents under {0}")]
    EmptyCorpus(PathBuf),
    #[error("{path}:{line}: malformed JSONL record: {message}")]
    MalformedRecord { path: PathBuf, line: usize, message: String },
    #[error("document {0} has an empty body")]
    EmptyDocument(String),
    #[error("duplicate document id {0}")]
    DuplicateId(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("embedding paragraph {doc_id}#{index}: {source}")]
    Embedding { doc_id: String, index: usize, source: ProviderError },
    #[error("need at least 2 paragraphs to build a corpus, got {0}")]
    TooFewParagraphs(usize),
    #[error("invalid embedded corpus: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values`; fails on a zero or non-finite vector.
    pub fn unit(mut values: Vec<f64>) -> Option<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let norm = hashing::normalize(&mut values);
        (norm > 0.0).then_some(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Paragraphs and their embeddings, index-aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCorpus")]
pub struct EmbeddedCorpus {
    pub k: usize,
    pub paragraphs: Vec<Paragraph>,
    pub vectors: Vec<EmbeddingVector>,
}

#[derive(Deserialize)]
struct RawCorpus {
    k: usize,
    paragraphs: Vec<Paragraph>,
    vectors: Vec<EmbeddingVector>,
}

impl TryFrom<RawCorpus> for EmbeddedCorpus {
    type Error = CorpusError;

    fn try_from(raw: RawCorpus) -> Result<Self, Self::Error> {
        EmbeddedCorpus::new(raw.k, raw.paragraphs, raw.vectors)
    }
}

impl EmbeddedCorpus {
    pub fn new(k: usize, paragraphs: Vec<Paragraph>, vectors: Vec<EmbeddingVector>) -> Result<Self, CorpusError> {
        if paragraphs.len() != vectors.len() {
            return Err(CorpusError::Invalid(format!(
                "{} paragraphs but {} vectors",
                paragraphs.len(),
                vectors.len()
            )));
        }
        if paragraphs.len() < 2 {
            return Err(CorpusError::TooFewParagraphs(paragraphs.len()));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.dim() != k {
                return Err(CorpusError::Invalid(format!("vector {i} has dimension {}, expected {k}", v.dim())));
            }
            if (v.norm() - 1.0).abs() > NORM_TOL {
                return Err(CorpusError::Invalid(format!("vector {i} is not unit norm")));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &paragraphs {
            if p.text.trim().is_empty() {
                return Err(CorpusError::Invalid(format!("paragraph {}#{} is empty", p.doc_id, p.index)));
            }
            if !seen.insert((p.doc_id.as_str(), p.index)) {
                return Err(CorpusError::Invalid(format!("duplicate paragraph {}#{}", p.doc_id, p.index)));
            }
        }
        Ok(Self { k, paragraphs, vectors })
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.vectors.iter().map(|v| v.values().to_vec()).collect()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

/// Reads a directory of `.txt`/`.md`/`.jsonl` files, or a single such file.
/// Plain files become one document each, keyed by file stem; JSONL files
/// contribute one document per `{id, text, title?}` record. Documents are
/// returned sorted by id.
pub fn ingest_corpus(path: &Path) -> Result<Vec<Document>, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::MissingPath(path.to_path_buf()));
    }
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in fs::read_dir(path).map_err(io_err(path))? {
            let entry = entry.map_err(io_err(path))?;
            let p = entry.path();
            let hidden = p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'));
            if p.is_file() && !hidden {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }

    let mut docs = Vec::new();
    for file in &files {
        match file.extension().and_then(|e| e.to_str()) {
            Some("txt" | "md") => {
                let body = fs::read_to_string(file).map_err(io_err(file))?;
                let id = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                if body.trim().is_empty() {
                    log::warn!("skipping empty document {}", file.display());
                    continue;
                }
                docs.push(Document { title: id.clone(), id, body });
            }
            Some("jsonl") => docs.extend(read_jsonl(file)?),
            _ => log::debug!("ignoring {}", file.display()),
        }
    }
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus(path.to_path_buf()));
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    for pair in docs.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(CorpusError::DuplicateId(pair[0].id.clone()));
        }
    }
    Ok(docs)
}

fn read_jsonl(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    let mut docs = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::MalformedRecord {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let record: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let id = record["id"].as_str().filter(|s| !s.is_empty()).ok_or_else(|| malformed("missing `id`".into()))?;
        let text = record["text"].as_str().ok_or_else(|| malformed("missing `text`".into()))?;
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyDocument(id.to_string()));
        }
        let title = record["title"].as_str().unwrap_or(id);
        docs.push(Document { id: id.to_string(), title: title.to_string(), body: text.to_string() });
    }
    Ok(docs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentOptions {
    pub min_chars: usize,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self { min_chars: DEFAULT_MIN_CHARS }
    }
}

/// Splits on blank lines and trims each unit. Units shorter than
/// `min_chars` are merged into the following unit, or into the preceding
/// one when they come last.
pub fn segment_paragraphs(doc: &Document, opts: SegmentOptions) -> Result<Vec<Paragraph>, CorpusError> {
    let mut units: Vec<String> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in doc.body.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                units.push(current.join("\n").trim().to_string());
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        units.push(current.join("\n").trim().to_string());
    }
    if units.is_empty() {
        return Err(CorpusError::EmptyDocument(doc.id.clone()));
    }

    let mut merged: Vec<String> = Vec::new();
    let mut carry: Option<String> = None;
    let last = units.len() - 1;
    for (i, unit) in units.into_iter().enumerate() {
        let text = match carry.take() {
            Some(prev) => format!("{prev}\n\n{unit}"),
            None => unit,
        };
        if text.chars().count() >= opts.min_chars {
            merged.push(text);
        } else if i < last {
            carry = Some(text);
        } else if let Some(prev) = merged.last_mut() {
            prev.push_str("\n\n");
            prev.push_str(&text);
        } else {
            merged.push(text);
        }
    }

    Ok(merged
        .into_iter()
        .enumerate()
        .map(|(index, text)| Paragraph { doc_id: doc.id.clone(), index, text })
        .collect())
}

pub fn segment_corpus(docs: &[Document], opts: SegmentOptions) -> Result<Vec<Paragraph>, CorpusError> {
    let mut out = Vec::new();
    for doc in docs {
        out.extend(segment_paragraphs(doc, opts)?);
    }
    Ok(out)
}

/// Embeds every paragraph through `provider`, batching requests and
/// reassembling results in paragraph order.
pub fn embed(paragraphs: Vec<Paragraph>, provider: &dyn Provider) -> Result<EmbeddedCorpus, CorpusError> {
    if paragraphs.len() < 2 {
        return Err(CorpusError::TooFewParagraphs(paragraphs.len()));
    }
    let batches: Vec<Vec<Vec<f64>>> = paragraphs
        .par_chunks(EMBED_BATCH)
        .map(|chunk| {
            let texts: Vec<String> = chunk.iter().map(|p| p.text.clone()).collect();
            provider.embed_texts(&texts).map_err(|source| {
                let at = match &source {
                    ProviderError::DimensionMismatch { index, .. } => &chunk[(*index).min(chunk.len() - 1)],
                    _ => &chunk[0],
                };
                CorpusError::Embedding { doc_id: at.doc_id.clone(), index: at.index, source }
            })
        })
        .collect::<Result<_, _>>()?;

    let mut vectors = Vec::with_capacity(paragraphs.len());
    let mut k = None;
    for (p, raw) in paragraphs.iter().zip(batches.into_iter().flatten()) {
        let expected = *k.get_or_insert(raw.len());
        if raw.len() != expected {
            return Err(CorpusError::Embedding {
                doc_id: p.doc_id.clone(),
                index: p.index,
                source: ProviderError::DimensionMismatch { index: vectors.len(), expected, found: raw.len() },
            });
        }
        let v = EmbeddingVector::unit(raw).ok_or_else(|| CorpusError::Embedding {
            doc_id: p.doc_id.clone(),
            index: p.index,
            source: ProviderError::Transport { attempts: 1, message: "provider returned a zero vector".into() },
        })?;
        vectors.push(v);
    }
    if vectors.len() != paragraphs.len() {
        return Err(CorpusError::Invalid(format!(
            "provider returned {} vectors for {} paragraphs",
            vectors.len(),
            paragraphs.len()
        )));
    }
    EmbeddedCorpus::new(k.unwrap_or(0), paragraphs, vectors)
}

/// Short description of a corpus for complexity inference.
pub fn corpus_digest(docs: &[Document]) -> String {
    let words: usize = docs.iter().map(|d| d.body.split_whitespace().count()).sum();
    let top = top_terms(docs.iter().map(|d| d.body.as_str()), 20);
    format!("{} documents, {} words. Frequent terms: {}.", docs.len(), words, top.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::MockProvider;

    fn doc(body: &str) -> Document {
        Document { id: "d".into(), title: "d".into(), body: body.into() }
    }

    fn texts(ps: &[Paragraph]) -> Vec<&str> {
        ps.iter().map(|p| p.text.as_str()).collect()
    }

    #[test]
    fn splits_on_blank_lines() {
        let ps = segment_paragraphs(&doc("A\n\nB"), SegmentOptions { min_chars: 1 }).unwrap();
        assert_eq!(texts(&ps), vec!["A", "B"]);
        assert_eq!(ps[1].index, 1);
    }

    #[test]
    fn single_block_is_one_paragraph() {
        let ps = segment_paragraphs(&doc("one line\nanother line"), SegmentOptions::default()).unwrap();
        assert_eq!(ps.len(), 1);
    }

    #[test]
    fn short_head_merges_forward() {
        let long = "x".repeat(300);
        let ps = segment_paragraphs(&doc(&format!("Hi\n\n{long}")), SegmentOptions::default()).unwrap();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].text, format!("Hi\n\n{long}"));
    }

    #[test]
    fn short_tail_merges_backward() {
        let long = "y".repeat(50);
        let ps = segment_paragraphs(&doc(&format!("{long}\n\n  \n\nEnd.")), SegmentOptions::default()).unwrap();
        assert_eq!(texts(&ps), vec![format!("{long}\n\nEnd.").as_str()]);
    }

    #[test]
    fn whitespace_body_is_rejected() {
        assert!(matches!(
            segment_paragraphs(&doc(" \n\n\t"), SegmentOptions::default()),
            Err(CorpusError::EmptyDocument(_))
        ));
    }

    #[test]
    fn embedding_is_deterministic_and_unit_norm() {
        let paragraphs: Vec<Paragraph> = ["pool kids family fun", "wifi desk meeting room"]
            .iter()
            .enumerate()
            .map(|(i, t)| Paragraph { doc_id: "d".into(), index: i, text: t.to_string() })
            .collect();
        let provider = MockProvider::default();
        let a = embed(paragraphs.clone(), &provider).unwrap();
        let b = embed(paragraphs, &provider).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.k, 256);
        assert!(a.vectors.iter().all(|v| (v.norm() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn embedding_needs_two_paragraphs() {
        let one = vec![Paragraph { doc_id: "d".into(), index: 0, text: "solo".into() }];
        assert!(matches!(embed(one, &MockProvider::default()), Err(CorpusError::TooFewParagraphs(1))));
    }
}
