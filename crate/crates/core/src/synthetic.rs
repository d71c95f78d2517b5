//! Seeded synthetic corpora with author- and label-correlated vocabulary,
//! plus a matching clustered embedding table.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::write_jsonl;
use crate::corpus::{Corpus, Document};
use crate::embeddings::EmbeddingTable;
use crate::seeding::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub documents: usize,
    pub authors: usize,
    pub utility_labels: usize,
    pub vocab_size: usize,
    pub dim: usize,
    pub clusters: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Size of each author's and each utility label's preferred word list.
    pub topic_words: usize,
    /// Probability that a token is drawn from the author's list.
    pub author_rate: f64,
    /// Probability that a token is drawn from the label's list.
    pub label_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            documents: 1000,
            authors: 10,
            utility_labels: 2,
            vocab_size: 2000,
            dim: 16,
            clusters: 20,
            min_words: 8,
            max_words: 24,
            topic_words: 40,
            author_rate: 0.3,
            label_rate: 0.3,
            seed: 42,
        }
    }
}

pub struct SyntheticData {
    pub corpus: Corpus,
    pub table: EmbeddingTable,
}

pub fn word_name(i: usize) -> String {
    format!("w{i:05}")
}

/// Cluster centers have component scale 0.1, words scatter around them with
/// scale 0.03.
pub fn synthetic_embeddings(spec: &SyntheticSpec) -> EmbeddingTable {
    let center_noise = Normal::new(0.0, 0.1).expect("valid sigma");
    let word_noise = Normal::new(0.0, 0.03).expect("valid sigma");
    let mut rng = rng_for(spec.seed, &["synthetic".into(), "centers".into()]);
    let centers: Vec<Vec<f64>> = (0..spec.clusters.max(1))
        .map(|_| (0..spec.dim).map(|_| center_noise.sample(&mut rng)).collect())
        .collect();
    let mut rng = rng_for(spec.seed, &["synthetic".into(), "words".into()]);
    let rows: Vec<(String, Vec<f64>)> = (0..spec.vocab_size)
        .map(|i| {
            let c = &centers[i % centers.len()];
            (word_name(i), c.iter().map(|x| x + word_noise.sample(&mut rng)).collect())
        })
        .collect();
    EmbeddingTable::from_rows(rows).expect("synthetic rows are consistent")
}

/// Each list is drawn from the words of a single embedding cluster, so topical
/// vocabulary also moves the mean embedding. Lists of one kind use distinct
/// clusters while there are enough of them.
fn topic_lists(spec: &SyntheticSpec, kind: &str, n: usize) -> Vec<Vec<usize>> {
    let clusters = spec.clusters.max(1);
    let mut order: Vec<usize> = (0..clusters).collect();
    order.shuffle(&mut rng_for(spec.seed, &["synthetic".into(), kind.into()]));
    (0..n)
        .map(|i| {
            let c = order[i % clusters];
            let members: Vec<usize> = (c..spec.vocab_size).step_by(clusters).collect();
            let members = if members.is_empty() { (0..spec.vocab_size).collect() } else { members };
            let mut rng = rng_for(spec.seed, &["synthetic".into(), kind.into(), i.into()]);
            members.choose_multiple(&mut rng, spec.topic_words.min(members.len())).copied().collect()
        })
        .collect()
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticData {
    assert!(spec.vocab_size > 0 && spec.authors > 0 && spec.utility_labels > 0, "empty synthetic spec");
    assert!(spec.min_words <= spec.max_words, "min_words > max_words");
    let table = synthetic_embeddings(spec);
    let author_words = topic_lists(spec, "author", spec.authors);
    let label_words = topic_lists(spec, "label", spec.utility_labels);
    let docs: Vec<Document> = (0..spec.documents)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(spec.seed, &["synthetic".into(), "doc".into(), i.into()]);
            let author = rng.random_range(0..spec.authors);
            let label = rng.random_range(0..spec.utility_labels);
            let len = rng.random_range(spec.min_words..=spec.max_words);
            let words: Vec<String> = (0..len)
                .map(|_| {
                    let u: f64 = rng.random();
                    let w = if u < spec.author_rate {
                        *author_words[author].choose(&mut rng).expect("nonempty")
                    } else if u < spec.author_rate + spec.label_rate {
                        *label_words[label].choose(&mut rng).expect("nonempty")
                    } else {
                        rng.random_range(0..spec.vocab_size)
                    };
                    word_name(w)
                })
                .collect();
            Document::new(format!("doc{i:06}"), words.join(" "), format!("u{label}"))
                .with_privacy_label(format!("a{author:03}"))
        })
        .collect();
    let corpus = Corpus::from_documents("synthetic", docs).expect("synthetic ids are unique");
    SyntheticData { corpus, table }
}

pub fn write_embeddings<W: Write>(t: &EmbeddingTable, out: W) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    for i in 0..t.len() {
        write!(out, "{}", t.word(i))?;
        for v in t.vector(i) {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    out.flush()
}

/// Writes `corpus.jsonl` and `embeddings.txt` into `dir`.
pub fn write_files(data: &SyntheticData, dir: &Path) -> io::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let corpus_path = dir.join("corpus.jsonl");
    let emb_path = dir.join("embeddings.txt");
    write_jsonl(&data.corpus, None, File::create(&corpus_path)?)?;
    write_embeddings(&data.table, File::create(&emb_path)?)?;
    Ok((corpus_path, emb_path))
}
