use std::collections::{BTreeMap, HashSet};

use super::{Corpus, CorpusError, Result};

/// Keeps only documents written by the `k` most prolific authors.
///
/// Authors are ranked by document count, ties broken by label order.
pub fn filter_top_k_authors(c: &Corpus, k: usize) -> Result<Corpus> {
    let missing: Vec<String> =
        c.documents().iter().filter(|d| d.privacy_label.is_none()).map(|d| d.id.clone()).collect();
    if !missing.is_empty() {
        return Err(CorpusError::MissingPrivacyLabel(missing));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for d in c.documents() {
        *counts.entry(d.privacy_label.as_deref().unwrap()).or_default() += 1;
    }
    if k == 0 || k > counts.len() {
        return Err(CorpusError::TooFewAuthors { k, available: counts.len() });
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    // BTreeMap order is lexicographic, and the sort is stable
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    let keep: HashSet<&str> = ranked[..k].iter().map(|(l, _)| *l).collect();

    let docs = c
        .documents()
        .iter()
        .filter(|d| keep.contains(d.privacy_label.as_deref().unwrap()))
        .cloned()
        .collect();
    let mut labels: Vec<String> = keep.into_iter().map(str::to_string).collect();
    labels.sort();
    Corpus::new(c.name(), docs, c.utility_labels().to_vec(), labels)
}

pub const POSITIVE: &str = "positive";
pub const NEUTRAL: &str = "neutral";
pub const NEGATIVE: &str = "negative";

/// Replaces utility labels with a three-way sentiment label derived from a
/// numeric score: `score > pos_thr` is positive, `score < neg_thr` negative,
/// everything else neutral.
pub fn threshold_sentiment_label(c: &Corpus, score_field: &str, pos_thr: f64, neg_thr: f64) -> Result<Corpus> {
    let missing: Vec<String> = c
        .documents()
        .iter()
        .filter(|d| !d.scores.get(score_field).is_some_and(|s| !s.is_nan()))
        .map(|d| d.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(CorpusError::MissingScore { field: score_field.to_string(), ids: missing });
    }
    let docs = c
        .documents()
        .iter()
        .map(|d| {
            let s = d.scores[score_field];
            let label = if s > pos_thr {
                POSITIVE
            } else if s < neg_thr {
                NEGATIVE
            } else {
                NEUTRAL
            };
            let mut d = d.clone();
            d.utility_label = label.to_string();
            d
        })
        .collect();
    Corpus::new(
        c.name(),
        docs,
        vec![NEGATIVE.to_string(), NEUTRAL.to_string(), POSITIVE.to_string()],
        c.privacy_labels().to_vec(),
    )
}

/// Micro-F1 (in percent) of always predicting the modal utility label.
/// Ties go to the label declared first in the corpus label set.
pub fn majority_guess(val: &Corpus) -> Result<f64> {
    if val.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut counts = vec![0usize; val.utility_labels().len()];
    for d in val.documents() {
        let pos = val.utility_labels().iter().position(|l| *l == d.utility_label).expect("label set invariant");
        counts[pos] += 1;
    }
    let mut best = 0;
    for (i, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = i;
        }
    }
    Ok(100.0 * counts[best] as f64 / val.len() as f64)
}
