use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Result};
use crate::seeding::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub fractions: Vec<f64>,
    pub train_ratio: f64,
    pub seed: u64,
    pub repetitions: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { fractions: vec![0.1, 0.25, 0.5, 0.75, 1.0], train_ratio: 0.9, seed: 42, repetitions: 3 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(CorpusError::InvalidSplitSpec("no fractions given".into()));
        }
        if let Some(f) = self.fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
            return Err(CorpusError::InvalidSplitSpec(format!("fraction {f} outside (0, 1]")));
        }
        if self.fractions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CorpusError::InvalidSplitSpec("fractions must be strictly ascending".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(CorpusError::InvalidSplitSpec(format!("train_ratio {} outside (0, 1)", self.train_ratio)));
        }
        if self.repetitions == 0 {
            return Err(CorpusError::InvalidSplitSpec("repetitions must be positive".into()));
        }
        Ok(())
    }
}

/// Positions (into the source corpus) of one split at one repetition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub fraction_index: usize,
    /// 1-based.
    pub repetition: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub fraction: f64,
    pub train: Corpus,
    pub val: Corpus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCell {
    pub fraction_index: usize,
    pub fraction: f64,
    pub repetition: usize,
    pub pair: SplitPair,
}

/// Index-level split generation for a corpus of `n` documents.
///
/// Per fraction index `f`: draw `round(fraction * n)` positions without
/// replacement from stream `(seed, f)`, partition them into train/val with
/// stream `(seed, f, 0)`, then for each repetition `r` reorder only the train
/// part with stream `(seed, f, r)`. Validation sets are shared across
/// repetitions; fractions are sampled independently from the full corpus.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<Vec<SplitIndices>> {
    spec.validate()?;
    if n == 0 {
        return Err(CorpusError::Empty);
    }
    for &f in &spec.fractions {
        if (f * n as f64).round() as usize == 0 {
            return Err(CorpusError::EmptySplit { fraction: f, n });
        }
    }
    let per_fraction: Vec<Vec<SplitIndices>> = spec
        .fractions
        .par_iter()
        .enumerate()
        .map(|(fi, &f)| {
            let size = (f * n as f64).round() as usize;
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng_for(spec.seed, &["sample".into(), fi.into()]));
            let mut sampled = all[..size].to_vec();
            sampled.shuffle(&mut rng_for(spec.seed, &["partition".into(), fi.into(), 0usize.into()]));
            let n_train = (spec.train_ratio * size as f64).round() as usize;
            let (train, val) = sampled.split_at(n_train.min(size));
            (1..=spec.repetitions)
                .map(|r| {
                    let mut order = train.to_vec();
                    order.shuffle(&mut rng_for(spec.seed, &["reshuffle".into(), fi.into(), r.into()]));
                    SplitIndices { fraction_index: fi, repetition: r, train: order, val: val.to_vec() }
                })
                .collect()
        })
        .collect();
    Ok(per_fraction.into_iter().flatten().collect())
}

/// Materializes [`split_indices`] against a corpus.
pub fn make_splits(c: &Corpus, spec: &SplitSpec) -> Result<Vec<SplitCell>> {
    let indices = split_indices(c.len(), spec)?;
    Ok(indices
        .into_iter()
        .map(|s| {
            let fraction = spec.fractions[s.fraction_index];
            SplitCell {
                fraction_index: s.fraction_index,
                fraction,
                repetition: s.repetition,
                pair: SplitPair { fraction, train: c.select(&s.train), val: c.select(&s.val) },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use std::collections::HashSet;

    fn corpus(n: usize) -> Corpus {
        Corpus::from_documents("c", (0..n).map(|i| Document::new(format!("d{i}"), "w", "l")).collect()).unwrap()
    }

    #[test]
    fn quarter_of_thousand() {
        let spec = SplitSpec { fractions: vec![0.25], ..Default::default() };
        let cells = make_splits(&corpus(1000), &spec).unwrap();
        assert_eq!(cells.len(), 3);
        for c in &cells {
            assert_eq!(c.pair.train.len(), 225);
            assert_eq!(c.pair.val.len(), 25);
        }
    }

    #[test]
    fn full_fraction_covers_everything_once() {
        let spec = SplitSpec { fractions: vec![1.0], repetitions: 1, ..Default::default() };
        let cells = make_splits(&corpus(57), &spec).unwrap();
        let mut ids: Vec<&str> = cells[0]
            .pair
            .train
            .documents()
            .iter()
            .chain(cells[0].pair.val.documents())
            .map(|d| d.id.as_str())
            .collect();
        ids.sort();
        let mut expected: Vec<String> = (0..57).map(|i| format!("d{i}")).collect();
        expected.sort();
        assert_eq!(ids, expected);
    }

    #[test]
    fn deterministic_and_val_shared_across_repetitions() {
        let spec = SplitSpec::default();
        let a = split_indices(500, &spec).unwrap();
        let b = split_indices(500, &spec).unwrap();
        assert_eq!(a, b);
        for chunk in a.chunks(3) {
            assert!(chunk.iter().all(|s| s.val == chunk[0].val));
            let t0: HashSet<_> = chunk[0].train.iter().collect();
            assert!(chunk.iter().all(|s| s.train.iter().collect::<HashSet<_>>() == t0));
            assert_ne!(chunk[0].train, chunk[1].train, "repetitions reorder the train split");
        }
        let other = split_indices(500, &SplitSpec { seed: 7, ..Default::default() }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(
            split_indices(5, &SplitSpec { fractions: vec![0.05], ..Default::default() }),
            Err(CorpusError::EmptySplit { .. })
        ));
        assert!(split_indices(5, &SplitSpec { fractions: vec![0.5, 0.25], ..Default::default() }).is_err());
        assert!(split_indices(5, &SplitSpec { train_ratio: 1.0, ..Default::default() }).is_err());
        assert!(split_indices(5, &SplitSpec { fractions: vec![0.0, 1.0], ..Default::default() }).is_err());
        assert!(matches!(split_indices(0, &SplitSpec::default()), Err(CorpusError::Empty)));
    }
}
