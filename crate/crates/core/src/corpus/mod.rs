//! Labeled documents, dataset ingestion, labeling procedures and
//! deterministic split generation.

mod io;
mod labeling;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_corpus, parse_csv, parse_jsonl, write_jsonl, Format, PrivacyTag, Schema};
pub use labeling::{filter_top_k_authors, majority_guess, threshold_sentiment_label};
pub use split::{make_splits, split_indices, SplitCell, SplitIndices, SplitPair, SplitSpec};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("row {row}: missing mandatory field `{field}`")]
    MissingField { row: usize, field: String },
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document `{id}` has label `{label}` outside the declared label set")]
    UnknownLabel { id: String, label: String },
    #[error("documents without a privacy label: {0:?}")]
    MissingPrivacyLabel(Vec<String>),
    #[error("score `{field}` missing or non-numeric for documents: {ids:?}")]
    MissingScore { field: String, ids: Vec<String> },
    #[error("requested top {k} authors but only {available} distinct authors exist")]
    TooFewAuthors { k: usize, available: usize },
    #[error("split fraction {fraction} of {n} documents rounds to an empty split")]
    EmptySplit { fraction: f64, n: usize },
    #[error("invalid split spec: {0}")]
    InvalidSplitSpec(String),
    #[error("corpus is empty")]
    Empty,
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Lowercased word tokens.
///
/// Splits on whitespace and on every character that is not alphanumeric
/// (Unicode punctuation and symbols), then lowercases. Punctuation is not kept
/// as a token, so counts can differ slightly from tokenizers that emit it.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub utility_label: String,
    pub privacy_label: Option<String>,
    /// Precomputed numeric side information (sentiment compound score, ...).
    pub scores: BTreeMap<String, f64>,
    /// Set for documents privatized in vector space; such documents carry no text.
    pub vector: Option<Vec<f64>>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, utility_label: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            utility_label: utility_label.into(),
            privacy_label: None,
            scores: BTreeMap::new(),
            vector: None,
        }
    }

    pub fn with_privacy_label(mut self, label: impl Into<String>) -> Self {
        self.privacy_label = Some(label.into());
        self
    }

    pub fn with_score(mut self, name: impl Into<String>, value: f64) -> Self {
        self.scores.insert(name.into(), value);
        self
    }

    pub fn tokens(&self) -> Vec<String> {
        tokenize(&self.text)
    }
}

/// An immutable labeled collection of documents.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    documents: Vec<Document>,
    utility_labels: Vec<String>,
    privacy_labels: Vec<String>,
}

impl Corpus {
    /// Builds a corpus with explicit label sets, checking id uniqueness and
    /// label membership.
    pub fn new(
        name: impl Into<String>,
        documents: Vec<Document>,
        utility_labels: Vec<String>,
        privacy_labels: Vec<String>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        let util: HashSet<&str> = utility_labels.iter().map(String::as_str).collect();
        let privacy: HashSet<&str> = privacy_labels.iter().map(String::as_str).collect();
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
            if !util.contains(doc.utility_label.as_str()) {
                return Err(CorpusError::UnknownLabel { id: doc.id.clone(), label: doc.utility_label.clone() });
            }
            if let Some(p) = &doc.privacy_label {
                if !privacy.contains(p.as_str()) {
                    return Err(CorpusError::UnknownLabel { id: doc.id.clone(), label: p.clone() });
                }
            }
        }
        Ok(Corpus { name: name.into(), documents, utility_labels, privacy_labels })
    }

    /// Builds a corpus whose label sets are the sorted observed values.
    pub fn from_documents(name: impl Into<String>, documents: Vec<Document>) -> Result<Self> {
        let util: BTreeSet<String> = documents.iter().map(|d| d.utility_label.clone()).collect();
        let privacy: BTreeSet<String> = documents.iter().filter_map(|d| d.privacy_label.clone()).collect();
        Corpus::new(name, documents, util.into_iter().collect(), privacy.into_iter().collect())
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

    pub fn utility_labels(&self) -> &[String] {
        &self.utility_labels
    }

    pub fn privacy_labels(&self) -> &[String] {
        &self.privacy_labels
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Replaces the documents, keeping name and label sets.
    pub fn with_documents(&self, documents: Vec<Document>) -> Result<Self> {
        Corpus::new(self.name.clone(), documents, self.utility_labels.clone(), self.privacy_labels.clone())
    }

    /// Selects documents by position, keeping the declared label sets.
    pub fn select(&self, indices: &[usize]) -> Corpus {
        Corpus {
            name: self.name.clone(),
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
            utility_labels: self.utility_labels.clone(),
            privacy_labels: self.privacy_labels.clone(),
        }
    }

    /// Mean token count per document (0 for an empty corpus).
    pub fn avg_words(&self) -> f64 {
        if self.documents.is_empty() {
            return 0.0;
        }
        let total: usize = self.documents.iter().map(|d| d.tokens().len()).sum();
        total as f64 / self.documents.len() as f64
    }
}
