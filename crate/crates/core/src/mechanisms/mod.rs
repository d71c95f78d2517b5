//! The three local-DP privatization mechanisms and corpus-level drivers.

mod ngram;
mod temperature;
mod vector;
mod word;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Document, PrivacyTag};
use crate::embeddings::{document_vector, EmbeddingTable, NeighborIndex};
use crate::seeding::rng_for;

pub use ngram::{NgramGenerator, EOS, UNK};
pub use temperature::{
    clip_normalize_logits, dp_prompt_rewrite, estimate_clip_range, temperature_epsilon, temperature_probabilities,
    temperature_sample, ClipRange, TokenGenerator,
};
pub use vector::{dp_vector_privatize, laplace_sample, laplace_scale};
pub use word::{folded_geometric_pmf, mldp_word_rewrite, two_sided_geometric_sample};

#[derive(Debug, Error)]
pub enum MechanismError {
    #[error("invalid mechanism config: {0}")]
    InvalidConfig(String),
    #[error("list size {list_size} exceeds neighbor list length {available}")]
    ListSizeTooLarge { list_size: usize, available: usize },
    #[error("empty logit vector")]
    EmptyLogits,
    #[error("clip range ({lo}, {hi}) is empty")]
    InvalidClipRange { lo: f64, hi: f64 },
    #[error("need at least 2 logit values to estimate a clip range, got {0}")]
    TooFewLogits(usize),
    #[error("vector has {found} components, mechanism expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("generator failed on document `{id}` at position {position}: {message}")]
    Generator { id: String, position: usize, message: String },
    #[error("mechanism needs {0}")]
    MissingResource(&'static str),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub type Result<T, E = MechanismError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordMldp {
    /// Per-word budget.
    pub epsilon_word: f64,
    pub list_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenTemperature {
    pub temperature: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub max_new_tokens: usize,
}

impl TokenTemperature {
    pub fn epsilon_token(&self) -> f64 {
        temperature_epsilon(self.temperature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    /// Per-document budget.
    pub epsilon_doc: f64,
    pub clip_c: f64,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MechanismKind {
    #[serde(rename = "word-mldp")]
    WordMldp,
    #[serde(rename = "token-temp")]
    TokenTemperature,
    #[serde(rename = "doc-vector")]
    DocVector,
}

impl MechanismKind {
    pub fn tag(self) -> &'static str {
        match self {
            MechanismKind::WordMldp => "word-mldp",
            MechanismKind::TokenTemperature => "token-temp",
            MechanismKind::DocVector => "doc-vector",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "word-mldp" => Some(MechanismKind::WordMldp),
            "token-temp" => Some(MechanismKind::TokenTemperature),
            "doc-vector" => Some(MechanismKind::DocVector),
            _ => None,
        }
    }

    /// Ordinal code by lexical granularity: word 1, token 2, document 3.
    pub fn code(self) -> u8 {
        match self {
            MechanismKind::WordMldp => 1,
            MechanismKind::TokenTemperature => 2,
            MechanismKind::DocVector => 3,
        }
    }

    pub fn epsilon_unit(self) -> &'static str {
        match self {
            MechanismKind::WordMldp => "word",
            MechanismKind::TokenTemperature => "token",
            MechanismKind::DocVector => "document",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MechanismConfig {
    WordMldp(WordMldp),
    TokenTemperature(TokenTemperature),
    DocVector(DocVector),
}

impl MechanismConfig {
    pub fn kind(&self) -> MechanismKind {
        match self {
            MechanismConfig::WordMldp(_) => MechanismKind::WordMldp,
            MechanismConfig::TokenTemperature(_) => MechanismKind::TokenTemperature,
            MechanismConfig::DocVector(_) => MechanismKind::DocVector,
        }
    }

    /// The budget in the mechanism's own unit.
    pub fn epsilon(&self) -> f64 {
        match self {
            MechanismConfig::WordMldp(c) => c.epsilon_word,
            MechanismConfig::TokenTemperature(c) => c.epsilon_token(),
            MechanismConfig::DocVector(c) => c.epsilon_doc,
        }
    }

    pub fn privacy_tag(&self) -> PrivacyTag {
        PrivacyTag {
            mechanism: self.kind().tag().to_string(),
            epsilon: self.epsilon(),
            epsilon_unit: self.kind().epsilon_unit().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MechanismError::InvalidConfig(m));
        match self {
            MechanismConfig::WordMldp(c) => {
                if !(c.epsilon_word > 0.0) {
                    return bad(format!("epsilon_word must be > 0, got {}", c.epsilon_word));
                }
                if c.list_size == 0 {
                    return bad("list_size must be positive".into());
                }
            }
            MechanismConfig::TokenTemperature(c) => {
                if !(c.temperature > 0.0 && c.temperature.is_finite()) {
                    return bad(format!("temperature must be > 0, got {}", c.temperature));
                }
                if !(c.clip_hi > c.clip_lo) {
                    return Err(MechanismError::InvalidClipRange { lo: c.clip_lo, hi: c.clip_hi });
                }
                if c.max_new_tokens == 0 {
                    return bad("max_new_tokens must be positive".into());
                }
            }
            MechanismConfig::DocVector(c) => {
                if !(c.epsilon_doc > 0.0) {
                    return bad(format!("epsilon_doc must be > 0, got {}", c.epsilon_doc));
                }
                if !(c.clip_c > 0.0) {
                    return bad(format!("clip_c must be > 0, got {}", c.clip_c));
                }
                if c.dim == 0 {
                    return bad("dim must be positive".into());
                }
            }
        }
        Ok(())
    }
}

/// Shared read-only inputs a mechanism may need.
#[derive(Clone, Copy, Default)]
pub struct Resources<'a> {
    pub table: Option<&'a EmbeddingTable>,
    pub index: Option<&'a NeighborIndex>,
    pub generator: Option<&'a dyn TokenGenerator>,
}

/// Privatizes one document with a noise stream derived from
/// `(seed, mechanism, epsilon, document id)`.
pub fn privatize_document(doc: &Document, cfg: &MechanismConfig, res: &Resources<'_>, seed: u64) -> Result<Document> {
    let mut rng = rng_for(
        seed,
        &[cfg.kind().tag().into(), cfg.epsilon().to_bits().into(), doc.id.as_str().into()],
    );
    match cfg {
        MechanismConfig::WordMldp(c) => {
            let idx = res.index.ok_or(MechanismError::MissingResource("a neighbor index"))?;
            mldp_word_rewrite(doc, idx, c, &mut rng)
        }
        MechanismConfig::TokenTemperature(c) => {
            let gen = res.generator.ok_or(MechanismError::MissingResource("a token generator"))?;
            dp_prompt_rewrite(doc, gen, c, &mut rng)
        }
        MechanismConfig::DocVector(c) => {
            let table = res.table.ok_or(MechanismError::MissingResource("an embedding table"))?;
            let v = document_vector(doc, table);
            let noisy = dp_vector_privatize(&v, c, &mut rng)?;
            let mut out = doc.clone();
            out.text.clear();
            out.vector = Some(noisy);
            Ok(out)
        }
    }
}

/// Privatizes every document in parallel. Ids, order, labels and label sets
/// are preserved.
pub fn privatize_corpus(c: &Corpus, cfg: &MechanismConfig, res: &Resources<'_>, seed: u64) -> Result<Corpus> {
    cfg.validate()?;
    let docs = c
        .documents()
        .par_iter()
        .map(|d| privatize_document(d, cfg, res, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(c.with_documents(docs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::build_neighbor_index;

    fn setup() -> (Corpus, EmbeddingTable) {
        let table = EmbeddingTable::from_rows(
            ["red", "green", "blue", "cat", "dog"].iter().enumerate().map(|(i, w)| (w.to_string(), vec![i as f64, 0.05])),
        )
        .unwrap();
        let docs = (0..20)
            .map(|i| Document::new(format!("d{i}"), "red cat blue dog", if i % 2 == 0 { "a" } else { "b" }))
            .collect();
        (Corpus::from_documents("c", docs).unwrap(), table)
    }

    #[test]
    fn corpus_privatization_is_deterministic_and_preserves_ids() {
        let (c, table) = setup();
        let idx = build_neighbor_index(&table, 5).unwrap();
        let gen = NgramGenerator::train(&c, 100, 0.5);
        let res = Resources { table: Some(&table), index: Some(&idx), generator: Some(&gen) };
        let configs = [
            MechanismConfig::WordMldp(WordMldp { epsilon_word: 0.5, list_size: 5 }),
            MechanismConfig::TokenTemperature(TokenTemperature {
                temperature: 1.5,
                clip_lo: -4.0,
                clip_hi: 0.0,
                max_new_tokens: 8,
            }),
            MechanismConfig::DocVector(DocVector { epsilon_doc: 500.0, clip_c: 0.1, dim: 2 }),
        ];
        for cfg in &configs {
            let a = privatize_corpus(&c, cfg, &res, 42).unwrap();
            let b = privatize_corpus(&c, cfg, &res, 42).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), c.len());
            assert!(a.documents().iter().zip(c.documents()).all(|(x, y)| x.id == y.id));
            assert_eq!(a.utility_labels(), c.utility_labels());
        }
        let v = privatize_corpus(&c, &configs[2], &res, 42).unwrap();
        assert!(v.documents().iter().all(|d| d.vector.as_ref().is_some_and(|v| v.len() == 2) && d.text.is_empty()));
    }

    #[test]
    fn missing_resources_and_bad_configs() {
        let (c, _) = setup();
        let cfg = MechanismConfig::WordMldp(WordMldp { epsilon_word: 1.0, list_size: 3 });
        assert!(matches!(
            privatize_corpus(&c, &cfg, &Resources::default(), 1),
            Err(MechanismError::MissingResource(_))
        ));
        let bad = MechanismConfig::DocVector(DocVector { epsilon_doc: 0.0, clip_c: 0.1, dim: 2 });
        assert!(bad.validate().is_err());
        let bad = MechanismConfig::TokenTemperature(TokenTemperature {
            temperature: 1.0,
            clip_lo: 1.0,
            clip_hi: 1.0,
            max_new_tokens: 3,
        });
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tags_and_codes() {
        let cfg = MechanismConfig::TokenTemperature(TokenTemperature {
            temperature: 1.75,
            clip_lo: -95.0,
            clip_hi: 8.0,
            max_new_tokens: 16,
        });
        let tag = cfg.privacy_tag();
        assert_eq!(tag.mechanism, "token-temp");
        assert_eq!(tag.epsilon_unit, "token");
        assert!((tag.epsilon - 1.142857).abs() < 1e-6);
        assert_eq!(MechanismKind::WordMldp.code(), 1);
        assert_eq!(MechanismKind::DocVector.code(), 3);
        for k in [MechanismKind::WordMldp, MechanismKind::TokenTemperature, MechanismKind::DocVector] {
            assert_eq!(MechanismKind::from_tag(k.tag()), Some(k));
        }
    }
}
