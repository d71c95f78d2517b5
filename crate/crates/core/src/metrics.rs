//! Relative gain and the nearest-neighbor indistinguishability score, plus
//! the per-cell evaluation record.

use std::collections::HashSet;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::embeddings::{document_vector, knn_rank_of, EmbeddingError, EmbeddingTable};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("relative gain undefined: denominator `{0}` is zero or out of range")]
    Denominator(&'static str),
    #[error("private and original documents are not aligned; only in private: {only_private:?}, only in original: {only_original:?}")]
    IdMismatch { only_private: Vec<String>, only_original: Vec<String> },
    #[error("no documents to score")]
    Empty,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// `u_r / u_o - p_r / p_o`, or with a majority-guess floor
/// `(u_r - mg_u) / (u_o - mg_u) - p_r / p_o`.
pub fn relative_gain(u_r: f64, u_o: f64, p_r: f64, p_o: f64, mg_u: Option<f64>) -> Result<f64> {
    if !(p_o > 0.0) {
        return Err(MetricError::Denominator("p_o"));
    }
    if !(u_o > 0.0) {
        return Err(MetricError::Denominator("u_o"));
    }
    let utility = match mg_u {
        Some(mg) => {
            let d = u_o - mg;
            if d == 0.0 {
                return Err(MetricError::Denominator("u_o - mg_u"));
            }
            (u_r - mg) / d
        }
        None => u_r / u_o,
    };
    Ok(utility - p_r / p_o)
}

/// One experiment cell: dataset, mechanism, budget level, split fraction and
/// run. Baseline rows use mechanism `baseline` and level 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset: String,
    pub mechanism: String,
    pub epsilon_level: u8,
    pub epsilon: f64,
    pub split_fraction: f64,
    pub run_index: usize,
    pub size: usize,
    pub avg_words: f64,
    pub util_f1: f64,
    pub priv_f1_static: f64,
    pub priv_f1_adaptive: f64,
    pub util_baseline: f64,
    pub priv_baseline: f64,
    pub mg_u: f64,
    pub gamma_static: f64,
    pub gamma_adaptive: f64,
    pub nn_mean_k: f64,
}

/// Mechanism column of non-private reference rows. Variants carry a suffix,
/// e.g. `baseline-embedding`.
pub const BASELINE: &str = "baseline";

impl EvalRecord {
    pub fn is_baseline(&self) -> bool {
        self.mechanism.starts_with(BASELINE)
    }

    /// `(gamma_static, gamma_adaptive)` from the stored F1 fields. `mg_u = 0`
    /// reproduces the uncorrected form exactly.
    pub fn recompute_gammas(&self) -> Result<(f64, f64)> {
        let mg = Some(self.mg_u);
        Ok((
            relative_gain(self.util_f1, self.util_baseline, self.priv_f1_static, self.priv_baseline, mg)?,
            relative_gain(self.util_f1, self.util_baseline, self.priv_f1_adaptive, self.priv_baseline, mg)?,
        ))
    }

    /// Regression target: mean of the static and adaptive gains.
    pub fn average_gamma(&self) -> f64 {
        (self.gamma_static + self.gamma_adaptive) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaMismatch {
    /// 1-based data row.
    pub row: usize,
    pub field: &'static str,
    pub stored: f64,
    pub recomputed: Option<f64>,
}

/// Rows whose stored gamma differs from the recomputed value by more than
/// `tol` (or cannot be recomputed). Baseline rows are skipped.
pub fn verify_gammas(records: &[EvalRecord], tol: f64) -> Vec<GammaMismatch> {
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate().filter(|(_, r)| !r.is_baseline()) {
        match r.recompute_gammas() {
            Ok((s, a)) => {
                for (field, stored, value) in [("gamma_static", r.gamma_static, s), ("gamma_adaptive", r.gamma_adaptive, a)] {
                    if !((stored - value).abs() <= tol) {
                        out.push(GammaMismatch { row: i + 1, field, stored, recomputed: Some(value) });
                    }
                }
            }
            Err(_) => out.push(GammaMismatch { row: i + 1, field: "gamma_static", stored: r.gamma_static, recomputed: None }),
        }
    }
    out
}

pub fn write_records<W: Write>(records: &[EvalRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<EvalRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize().map(|r| r.map_err(MetricError::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnScore {
    pub mean: f64,
    pub median: f64,
    /// Per private document, in input order; beyond-cap ranks are the cap.
    pub ranks: Vec<usize>,
}

/// For every private document, the rank of its original among all original
/// documents when searching from the private vector. The original pool is
/// the full original set, i.e. every other original plus the document's own
/// original swapped back in.
pub fn nn_indistinguishability(
    private: &[(String, Vec<f64>)],
    original: &[(String, Vec<f64>)],
    cap: usize,
) -> Result<NnScore> {
    if private.is_empty() {
        return Err(MetricError::Empty);
    }
    let orig_ids: HashSet<&str> = original.iter().map(|(id, _)| id.as_str()).collect();
    let priv_ids: HashSet<&str> = private.iter().map(|(id, _)| id.as_str()).collect();
    if orig_ids != priv_ids || private.len() != original.len() {
        let mut only_private: Vec<String> =
            priv_ids.difference(&orig_ids).map(|s| s.to_string()).collect();
        let mut only_original: Vec<String> =
            orig_ids.difference(&priv_ids).map(|s| s.to_string()).collect();
        only_private.sort();
        only_original.sort();
        return Err(MetricError::IdMismatch { only_private, only_original });
    }
    let ranks = private
        .par_iter()
        .map(|(id, query)| knn_rank_of(query, id, original, cap).map(|r| r.score(cap)))
        .collect::<std::result::Result<Vec<usize>, _>>()?;
    let sum: u64 = ranks.iter().map(|&r| r as u64).sum();
    let mean = sum as f64 / ranks.len() as f64;
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid] as f64
    } else {
        (sorted[mid - 1] + sorted[mid]) as f64 / 2.0
    };
    Ok(NnScore { mean, median, ranks })
}

/// Embeds both corpora (privatized vectors are used as-is) and scores them.
pub fn nn_indistinguishability_corpus(
    private: &Corpus,
    original: &Corpus,
    t: &EmbeddingTable,
    cap: usize,
) -> Result<NnScore> {
    let embed = |c: &Corpus| -> Vec<(String, Vec<f64>)> {
        c.documents().par_iter().map(|d| (d.id.clone(), document_vector(d, t))).collect()
    };
    nn_indistinguishability(&embed(private), &embed(original), cap)
}
