//! Word vectors, exact nearest-neighbor lists, document vectors and rank
//! queries. All distances are Euclidean.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Document;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected {expected} components, found {found}")]
    Dimension { line: usize, expected: usize, found: usize },
    #[error("embedding table is empty")]
    Empty,
    #[error("neighbor list length {k} exceeds vocabulary size {vocab}")]
    ListTooLong { k: usize, vocab: usize },
    #[error("target `{0}` is not in the pool")]
    TargetAbsent(String),
    #[error("vector has {found} components, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Dense `V x d` word-vector matrix with a word index.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    words: Vec<String>,
    vocab: HashMap<String, usize>,
    data: Vec<f64>,
    dim: usize,
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` rows. Duplicate words keep their
    /// first vector.
    pub fn from_rows<I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut table = EmbeddingTable { words: Vec::new(), vocab: HashMap::new(), data: Vec::new(), dim: 0 };
        for (i, (word, vec)) in rows.into_iter().enumerate() {
            table.push(word, vec, i + 1)?;
        }
        if table.words.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        Ok(table)
    }

    fn push(&mut self, word: String, vec: Vec<f64>, line: usize) -> Result<()> {
        if self.words.is_empty() {
            if vec.is_empty() {
                return Err(EmbeddingError::Parse { line, message: "row has no vector components".into() });
            }
            self.dim = vec.len();
        } else if vec.len() != self.dim {
            return Err(EmbeddingError::Dimension { line, expected: self.dim, found: vec.len() });
        }
        if vec.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::Parse { line, message: format!("non-finite component for `{word}`") });
        }
        if self.vocab.contains_key(&word) {
            log::warn!("line {line}: duplicate embedding for `{word}`, keeping the first");
            return Ok(());
        }
        self.vocab.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(&vec);
        Ok(())
    }

    /// Parses the plain-text `word v1 v2 ... vd` format. Blank lines are skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut table = EmbeddingTable { words: Vec::new(), vocab: HashMap::new(), data: Vec::new(), dim: 0 };
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| EmbeddingError::Parse { line: line_no, message: e.to_string() })?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let vec = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| EmbeddingError::Parse { line: line_no, message: e.to_string() })?;
            table.push(word.to_string(), vec, line_no)?;
        }
        if table.words.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.vocab.get(word).copied()
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn vector(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word).map(|i| self.vector(i))
    }

    /// Content hash over words and vector bits; keys the neighbor-list cache.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for (i, w) in self.words.iter().enumerate() {
            h.update((w.len() as u64).to_le_bytes());
            h.update(w.as_bytes());
            for v in self.vector(i) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|source| EmbeddingError::Io { path: path.to_path_buf(), source })?;
    EmbeddingTable::parse(BufReader::new(file))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Per-word lists of the `k_list` nearest words, ascending by distance, each
/// starting with the word itself.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    k_list: usize,
    words: Vec<String>,
    vocab: HashMap<String, usize>,
    lists: Vec<Vec<Neighbor>>,
}

/// Exact brute-force k-NN over the whole table. Equal distances are ordered
/// with the query word first, then by table index.
pub fn build_neighbor_index(t: &EmbeddingTable, k_list: usize) -> Result<NeighborIndex> {
    if k_list == 0 || k_list > t.len() {
        return Err(EmbeddingError::ListTooLong { k: k_list, vocab: t.len() });
    }
    let lists = (0..t.len())
        .into_par_iter()
        .map(|w| {
            let q = t.vector(w);
            let key = |j: usize, d: f64| (d, j != w, j);
            let mut cand: Vec<(f64, usize)> = (0..t.len()).map(|j| (squared_distance(q, t.vector(j)), j)).collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| key(a.1, a.0).partial_cmp(&key(b.1, b.0)).unwrap();
            if k_list < cand.len() {
                cand.select_nth_unstable_by(k_list - 1, cmp);
                cand.truncate(k_list);
            }
            cand.sort_by(cmp);
            cand.into_iter().map(|(d, j)| Neighbor { index: j, distance: d.sqrt() }).collect()
        })
        .collect();
    Ok(NeighborIndex { k_list, words: t.words.clone(), vocab: t.vocab.clone(), lists })
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    fingerprint: String,
    k_list: usize,
    vocab_size: usize,
}

#[derive(Serialize, Deserialize)]
struct CacheRow {
    word: String,
    neighbors: Vec<(usize, f64)>,
}

impl NeighborIndex {
    pub fn k_list(&self) -> usize {
        self.k_list
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.vocab.get(word).copied()
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn neighbors(&self, index: usize) -> &[Neighbor] {
        &self.lists[index]
    }

    pub fn neighbors_of(&self, word: &str) -> Option<&[Neighbor]> {
        self.index_of(word).map(|i| self.neighbors(i))
    }

    pub fn cache_file_name(fingerprint: &str, k_list: usize) -> String {
        format!("neighbors-{}-k{k_list}.jsonl", &fingerprint[..16.min(fingerprint.len())])
    }

    /// Writes the JSONL sidecar: a header row, then one row per word.
    pub fn save(&self, path: &Path, fingerprint: &str) -> Result<()> {
        let io = |source| EmbeddingError::Io { path: path.to_path_buf(), source };
        let file = File::create(path).map_err(io)?;
        let mut out = BufWriter::new(file);
        let header = CacheHeader { fingerprint: fingerprint.to_string(), k_list: self.k_list, vocab_size: self.len() };
        write_json_line(&mut out, &header).map_err(io)?;
        for (w, list) in self.words.iter().zip(&self.lists) {
            let row = CacheRow { word: w.clone(), neighbors: list.iter().map(|n| (n.index, n.distance)).collect() };
            write_json_line(&mut out, &row).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Loads a sidecar if it matches `fingerprint` and `k_list`; `None` on
    /// any mismatch or parse failure.
    pub fn load(path: &Path, fingerprint: &str, k_list: usize) -> Option<NeighborIndex> {
        let file = File::open(path).ok()?;
        let mut lines = BufReader::new(file).lines();
        let header: CacheHeader = serde_json::from_str(&lines.next()?.ok()?).ok()?;
        if header.fingerprint != fingerprint || header.k_list != k_list {
            return None;
        }
        let mut words = Vec::with_capacity(header.vocab_size);
        let mut lists = Vec::with_capacity(header.vocab_size);
        for line in lines {
            let row: CacheRow = serde_json::from_str(&line.ok()?).ok()?;
            if row.neighbors.len() != k_list {
                return None;
            }
            words.push(row.word);
            lists.push(row.neighbors.into_iter().map(|(index, distance)| Neighbor { index, distance }).collect());
        }
        if words.len() != header.vocab_size {
            return None;
        }
        let vocab = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Some(NeighborIndex { k_list, words, vocab, lists })
    }

    /// Reuses a cached index from `cache_dir` when present, otherwise builds
    /// and stores one.
    pub fn load_or_build(t: &EmbeddingTable, k_list: usize, cache_dir: Option<&Path>) -> Result<NeighborIndex> {
        let Some(dir) = cache_dir else { return build_neighbor_index(t, k_list) };
        let fp = t.fingerprint();
        let path = dir.join(Self::cache_file_name(&fp, k_list));
        if let Some(idx) = Self::load(&path, &fp, k_list) {
            return Ok(idx);
        }
        let idx = build_neighbor_index(t, k_list)?;
        std::fs::create_dir_all(dir).map_err(|source| EmbeddingError::Io { path: dir.to_path_buf(), source })?;
        idx.save(&path, &fp)?;
        Ok(idx)
    }
}

fn write_json_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocEmbedding {
    pub vector: Vec<f64>,
    pub in_vocab: usize,
    pub oov: usize,
}

impl DocEmbedding {
    /// True when no token was in vocabulary and the vector is all zeros.
    pub fn is_empty(&self) -> bool {
        self.in_vocab == 0
    }
}

/// Mean vector of the in-vocabulary tokens. Accumulates per vocabulary
/// entry, so the result is bit-identical under any token order.
pub fn embed_tokens<S: AsRef<str>>(tokens: &[S], t: &EmbeddingTable) -> DocEmbedding {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut oov = 0;
    for tok in tokens {
        match t.index_of(tok.as_ref()) {
            Some(i) => *counts.entry(i).or_default() += 1,
            None => oov += 1,
        }
    }
    let in_vocab: usize = counts.values().sum();
    let mut vector = vec![0.0; t.dim()];
    if in_vocab > 0 {
        for (&i, &c) in &counts {
            for (acc, v) in vector.iter_mut().zip(t.vector(i)) {
                *acc += c as f64 * v;
            }
        }
        for v in &mut vector {
            *v /= in_vocab as f64;
        }
    }
    DocEmbedding { vector, in_vocab, oov }
}

pub fn document_embedding(doc: &Document, t: &EmbeddingTable) -> DocEmbedding {
    embed_tokens(&doc.tokens(), t)
}

/// The vector a document contributes to vector-space evaluation: its
/// privatized vector when it carries one, otherwise its mean word embedding.
pub fn document_vector(doc: &Document, t: &EmbeddingTable) -> Vec<f64> {
    match &doc.vector {
        Some(v) => v.clone(),
        None => document_embedding(doc, t).vector,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rank {
    /// 1-based rank.
    Within(usize),
    BeyondCap,
}

impl Rank {
    /// Numeric score; a rank beyond the cap scores as the cap itself.
    pub fn score(self, cap: usize) -> usize {
        match self {
            Rank::Within(k) => k,
            Rank::BeyondCap => cap,
        }
    }
}

/// Rank of `target_id` among `pool` by distance to `query`.
///
/// Entries at exactly the target's distance rank ahead of it when their id
/// sorts before the target id, so the result does not depend on pool order.
pub fn knn_rank_of<S, V>(query: &[f64], target_id: &str, pool: &[(S, V)], cap: usize) -> Result<Rank>
where
    S: AsRef<str>,
    V: AsRef<[f64]>,
{
    let (_, target_vec) = pool
        .iter()
        .find(|(id, _)| id.as_ref() == target_id)
        .ok_or_else(|| EmbeddingError::TargetAbsent(target_id.to_string()))?;
    for (_, v) in pool {
        if v.as_ref().len() != query.len() {
            return Err(EmbeddingError::DimensionMismatch { expected: query.len(), found: v.as_ref().len() });
        }
    }
    let target_d = squared_distance(query, target_vec.as_ref());
    let mut ahead = 0usize;
    for (id, v) in pool {
        let id = id.as_ref();
        if id == target_id {
            continue;
        }
        let d = squared_distance(query, v.as_ref());
        if d < target_d || (d == target_d && id < target_id) {
            ahead += 1;
            if ahead >= cap {
                return Ok(Rank::BeyondCap);
            }
        }
    }
    Ok(Rank::Within(ahead + 1))
}
