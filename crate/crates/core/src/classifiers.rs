//! Featurization, multinomial logistic regression and micro-F1 evaluation
//! for utility tasks and static/adaptive adversaries.

use std::collections::HashMap;
use std::hash::Hash;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::embeddings::{document_embedding, EmbeddingTable};
use crate::seeding::rng_for;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("raw-vector features need vector-bearing documents; `{0}` has none")]
    MissingVector(String),
    #[error("embedding features need an embedding table")]
    MissingTable,
    #[error("document `{id}` has a {found}-dim vector, expected {expected}")]
    VectorDimension { id: String, expected: usize, found: usize },
    #[error("{task:?} labels missing for documents {ids:?}")]
    MissingLabels { task: Task, ids: Vec<String> },
    #[error("training data contains fewer than two classes")]
    SingleClass,
    #[error("{predictions} predictions for {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("nothing to score")]
    Empty,
    #[error("label sets differ between training and evaluation corpora: {train:?} vs {eval:?}")]
    LabelSetMismatch { train: Vec<String>, eval: Vec<String> },
    #[error("model expects {expected} features, got {found}")]
    FeatureMismatch { expected: usize, found: usize },
}

pub type Result<T, E = ClassifierError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    BagOfWords,
    /// Mean word embedding; documents that already carry a vector use it.
    MeanEmbedding,
    RawVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    pub mode: FeatureMode,
    pub vocab_cap: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec { mode: FeatureMode::BagOfWords, vocab_cap: 5000 }
    }
}

/// Sparse row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_features: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for &(j, v) in &self.rows[i] {
            out[j] = v;
        }
        out
    }
}

/// A feature map fitted on a training corpus.
#[derive(Debug, Clone)]
pub struct Featurizer<'a> {
    spec: FeatureSpec,
    vocab: Vec<String>,
    lookup: HashMap<String, usize>,
    table: Option<&'a EmbeddingTable>,
    dim: usize,
}

impl<'a> Featurizer<'a> {
    /// The bag-of-words vocabulary is the `vocab_cap` most frequent training
    /// tokens, ties broken by word order.
    pub fn fit(train: &Corpus, spec: &FeatureSpec, table: Option<&'a EmbeddingTable>) -> Result<Self> {
        let mut f = Featurizer { spec: *spec, vocab: Vec::new(), lookup: HashMap::new(), table, dim: 0 };
        match spec.mode {
            FeatureMode::BagOfWords => {
                let mut counts: HashMap<String, usize> = HashMap::new();
                for d in train.documents() {
                    for t in d.tokens() {
                        *counts.entry(t).or_default() += 1;
                    }
                }
                let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                ranked.truncate(spec.vocab_cap);
                f.vocab = ranked.into_iter().map(|(w, _)| w).collect();
                f.lookup = f.vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
                f.dim = f.vocab.len();
            }
            FeatureMode::MeanEmbedding => {
                f.dim = table.ok_or(ClassifierError::MissingTable)?.dim();
            }
            FeatureMode::RawVector => {
                let first = train.documents().first().ok_or(ClassifierError::Empty)?;
                f.dim = first.vector.as_ref().ok_or_else(|| ClassifierError::MissingVector(first.id.clone()))?.len();
            }
        }
        Ok(f)
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    pub fn n_features(&self) -> usize {
        self.dim
    }

    pub fn transform(&self, c: &Corpus) -> Result<FeatureMatrix> {
        let mut rows = Vec::with_capacity(c.len());
        for d in c.documents() {
            let dense_vector = |v: &[f64]| -> Result<Vec<(usize, f64)>> {
                if v.len() != self.dim {
                    return Err(ClassifierError::VectorDimension { id: d.id.clone(), expected: self.dim, found: v.len() });
                }
                Ok(v.iter().copied().enumerate().collect())
            };
            let row = match self.spec.mode {
                FeatureMode::BagOfWords => {
                    let mut counts: HashMap<usize, usize> = HashMap::new();
                    for t in d.tokens() {
                        if let Some(&j) = self.lookup.get(&t) {
                            *counts.entry(j).or_default() += 1;
                        }
                    }
                    let mut row: Vec<(usize, f64)> =
                        counts.into_iter().map(|(j, n)| (j, (1.0 + n as f64).ln())).collect();
                    row.sort_by_key(|e| e.0);
                    row
                }
                FeatureMode::MeanEmbedding => match &d.vector {
                    Some(v) => dense_vector(v)?,
                    None => {
                        let table = self.table.ok_or(ClassifierError::MissingTable)?;
                        dense_vector(&document_embedding(d, table).vector)?
                    }
                },
                FeatureMode::RawVector => {
                    dense_vector(d.vector.as_ref().ok_or_else(|| ClassifierError::MissingVector(d.id.clone()))?)?
                }
            };
            rows.push(row);
        }
        Ok(FeatureMatrix {
            n_features: self.dim,
            rows,
            ids: c.documents().iter().map(|d| d.id.clone()).collect(),
        })
    }
}

/// Fits a featurizer on `c` and transforms `c` itself.
pub fn featurize(c: &Corpus, spec: &FeatureSpec, table: Option<&EmbeddingTable>) -> Result<FeatureMatrix> {
    Featurizer::fit(c, spec, table)?.transform(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Utility,
    Privacy,
}

impl Task {
    pub fn label_set(self, c: &Corpus) -> &[String] {
        match self {
            Task::Utility => c.utility_labels(),
            Task::Privacy => c.privacy_labels(),
        }
    }

    /// Class indices into [`label_set`](Self::label_set).
    pub fn labels(self, c: &Corpus) -> Result<Vec<usize>> {
        let set = self.label_set(c);
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(c.len());
        for d in c.documents() {
            let label = match self {
                Task::Utility => Some(&d.utility_label),
                Task::Privacy => d.privacy_label.as_ref(),
            };
            match label.and_then(|l| set.iter().position(|s| s == l)) {
                Some(i) => out.push(i),
                None => missing.push(d.id.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(ClassifierError::MissingLabels { task: self, ids: missing });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { epochs: 50, lr: 0.1, l2: 1e-4, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// `num_classes x num_features`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub class_order: Vec<String>,
    pub training_meta: TrainingMeta,
}

fn class_scores(weights: &[Vec<f64>], bias: &[f64], row: &[(usize, f64)], out: &mut [f64]) {
    for (c, s) in out.iter_mut().enumerate() {
        *s = bias[c] + row.iter().map(|&(j, v)| weights[c][j] * v).sum::<f64>();
    }
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

/// Mean cross-entropy plus `l2 / 2 * ||W||^2` (bias unpenalized).
pub fn objective(weights: &[Vec<f64>], bias: &[f64], x: &FeatureMatrix, y: &[usize], l2: f64) -> f64 {
    let mut scores = vec![0.0; bias.len()];
    let mut total = 0.0;
    for (row, &label) in x.rows.iter().zip(y) {
        class_scores(weights, bias, row, &mut scores);
        total += log_sum_exp(&scores) - scores[label];
    }
    let penalty: f64 = weights.iter().flatten().map(|w| w * w).sum();
    total / x.len() as f64 + 0.5 * l2 * penalty
}

/// Analytic gradient of [`objective`] with respect to weights and bias.
pub fn gradient(
    weights: &[Vec<f64>],
    bias: &[f64],
    x: &FeatureMatrix,
    y: &[usize],
    l2: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = bias.len();
    let n = x.len() as f64;
    let mut gw: Vec<Vec<f64>> = weights.iter().map(|r| r.iter().map(|w| l2 * w).collect()).collect();
    let mut gb = vec![0.0; k];
    let mut scores = vec![0.0; k];
    for (row, &label) in x.rows.iter().zip(y) {
        class_scores(weights, bias, row, &mut scores);
        let lse = log_sum_exp(&scores);
        for c in 0..k {
            let residual = ((scores[c] - lse).exp() - if c == label { 1.0 } else { 0.0 }) / n;
            gb[c] += residual;
            for &(j, v) in row {
                gw[c][j] += residual * v;
            }
        }
    }
    (gw, gb)
}

/// Multinomial logistic regression by full-batch gradient descent.
///
/// Each epoch takes one step along the negative gradient. The step starts
/// at `hyper.lr`, is halved until the Armijo condition holds and grows by
/// half after every accepted step, so the objective never increases.
pub fn train(x: &FeatureMatrix, y: &[usize], class_order: &[String], hyper: &Hyper) -> Result<LinearModel> {
    if x.len() != y.len() {
        return Err(ClassifierError::LengthMismatch { predictions: x.len(), gold: y.len() });
    }
    let k = class_order.len();
    let mut present = vec![false; k];
    for &c in y {
        present[c] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(ClassifierError::SingleClass);
    }
    let f = x.n_features;
    let mut w = vec![vec![0.0; f]; k];
    let mut b = vec![0.0; k];
    let mut loss = objective(&w, &b, x, y, hyper.l2);
    let mut step = hyper.lr;
    for _ in 0..hyper.epochs {
        let (gw, gb) = gradient(&w, &b, x, y, hyper.l2);
        let norm2: f64 = gw.iter().flatten().chain(&gb).map(|g| g * g).sum();
        if norm2 == 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let tw: Vec<Vec<f64>> =
                w.iter().zip(&gw).map(|(r, g)| r.iter().zip(g).map(|(a, d)| a - step * d).collect()).collect();
            let tb: Vec<f64> = b.iter().zip(&gb).map(|(a, d)| a - step * d).collect();
            let trial = objective(&tw, &tb, x, y, hyper.l2);
            if trial <= loss - 1e-4 * step * norm2 {
                w = tw;
                b = tb;
                loss = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 1.5;
    }
    Ok(LinearModel {
        weights: w,
        bias: b,
        class_order: class_order.to_vec(),
        training_meta: TrainingMeta {
            epochs: hyper.epochs,
            learning_rate: hyper.lr,
            l2: hyper.l2,
            seed: hyper.seed,
            final_loss: loss,
        },
    })
}

impl LinearModel {
    /// Highest-scoring class per row; ties go to the earlier class.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        let expected = self.weights.first().map_or(0, Vec::len);
        if x.n_features != expected {
            return Err(ClassifierError::FeatureMismatch { expected, found: x.n_features });
        }
        let mut scores = vec![0.0; self.bias.len()];
        Ok(x.rows
            .iter()
            .map(|row| {
                class_scores(&self.weights, &self.bias, row, &mut scores);
                let mut best = 0;
                for (c, s) in scores.iter().enumerate() {
                    if *s > scores[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("finite model parameters serialize")
    }
}

/// Micro-averaged F1 in percent, pooled over all classes.
pub fn micro_f1<T: Eq + Hash>(predictions: &[T], gold: &[T]) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(ClassifierError::LengthMismatch { predictions: predictions.len(), gold: gold.len() });
    }
    if gold.is_empty() {
        return Err(ClassifierError::Empty);
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, g) in predictions.iter().zip(gold) {
        if p == g {
            tp += 1;
        } else {
            // a wrong single-label prediction is a false positive for the
            // predicted class and a false negative for the gold class
            fp += 1;
            fn_ += 1;
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    Ok(100.0 * 2.0 * precision * recall / (precision + recall))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScore {
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
    pub runs: Vec<f64>,
}

impl EvalScore {
    pub fn from_runs(runs: Vec<f64>) -> Self {
        let n = runs.len() as f64;
        let mean = runs.iter().sum::<f64>() / n;
        let std = (runs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
        EvalScore { mean, std, runs }
    }
}

/// Trains on `train` in its given order and returns micro-F1 on `val`.
pub fn fit_and_score(
    train_corpus: &Corpus,
    val: &Corpus,
    task: Task,
    spec: &FeatureSpec,
    hyper: &Hyper,
    table: Option<&EmbeddingTable>,
) -> Result<f64> {
    let (train_set, val_set) = (task.label_set(train_corpus), task.label_set(val));
    if train_set != val_set {
        return Err(ClassifierError::LabelSetMismatch { train: train_set.to_vec(), eval: val_set.to_vec() });
    }
    let y_train = task.labels(train_corpus)?;
    let y_val = task.labels(val)?;
    let featurizer = Featurizer::fit(train_corpus, spec, table)?;
    let x_train = featurizer.transform(train_corpus)?;
    let x_val = featurizer.transform(val)?;
    let model = train(&x_train, &y_train, train_set, hyper)?;
    micro_f1(&model.predict(&x_val)?, &y_val)
}

/// `reps` trainings on seeded reshuffles of the training order.
pub fn run_eval(
    train_corpus: &Corpus,
    val: &Corpus,
    task: Task,
    spec: &FeatureSpec,
    reps: usize,
    hyper: &Hyper,
    table: Option<&EmbeddingTable>,
) -> Result<EvalScore> {
    if reps == 0 {
        return Err(ClassifierError::Empty);
    }
    let mut runs = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut order: Vec<usize> = (0..train_corpus.len()).collect();
        order.shuffle(&mut rng_for(hyper.seed, &["run_eval".into(), rep.into()]));
        runs.push(fit_and_score(&train_corpus.select(&order), val, task, spec, hyper, table)?);
    }
    Ok(EvalScore::from_runs(runs))
}

/// Which training corpus an adversary sees. Static adversaries train on
/// original texts, adaptive ones on privatized texts; neither can reach the
/// other's corpus.
#[derive(Debug, Clone, Copy)]
pub enum AdversaryTraining<'a> {
    Static { original_train: &'a Corpus },
    Adaptive { private_train: &'a Corpus },
}

impl AdversaryTraining<'_> {
    pub fn corpus(&self) -> &Corpus {
        match self {
            AdversaryTraining::Static { original_train } => original_train,
            AdversaryTraining::Adaptive { private_train } => private_train,
        }
    }
}

/// Privacy-task micro-F1 of an adversary evaluated on the private
/// validation split.
pub fn adversary_eval(
    training: AdversaryTraining<'_>,
    private_val: &Corpus,
    spec: &FeatureSpec,
    reps: usize,
    hyper: &Hyper,
    table: Option<&EmbeddingTable>,
) -> Result<EvalScore> {
    run_eval(training.corpus(), private_val, Task::Privacy, spec, reps, hyper, table)
}
