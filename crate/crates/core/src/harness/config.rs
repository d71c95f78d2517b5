use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::classifiers::{FeatureMode, FeatureSpec, Hyper};
use crate::corpus::{Format, Schema, SplitSpec};
use crate::mechanisms::{temperature_epsilon, MechanismKind};
use crate::stats::Adjustment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub format: Option<Format>,
    /// Defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub schema: Schema,
    /// Subtract the majority-guess F1 in the utility ratio of gamma.
    #[serde(default = "yes")]
    pub majority_correction: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub path: PathBuf,
    /// Directory for neighbor-list caches.
    #[serde(default)]
    pub neighbor_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub fractions: Vec<f64>,
    pub train_ratio: f64,
    pub repetitions: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let d = SplitSpec::default();
        SplitConfig { fractions: d.fractions, train_ratio: d.train_ratio, repetitions: d.repetitions }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub utility: FeatureSpec,
    pub privacy: FeatureSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let h = Hyper::default();
        ClassifierConfig { epochs: h.epochs, lr: h.lr, l2: h.l2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// Equal-width bins over log split size for the rank tests.
    pub bins: usize,
    pub adjustment: Adjustment,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { bins: 5, adjustment: Adjustment::None }
    }
}

/// One mechanism with the budgets to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum MechanismSweep {
    #[serde(rename = "word-mldp")]
    WordMldp {
        epsilons: Vec<f64>,
        #[serde(default = "default_list_size")]
        list_size: usize,
    },
    #[serde(rename = "token-temp")]
    TokenTemp {
        temperatures: Vec<f64>,
        #[serde(default = "default_max_new_tokens")]
        max_new_tokens: usize,
        /// Fixed `[lo, hi]` logit clip range; estimated from the corpus when absent.
        #[serde(default)]
        clip: Option<[f64; 2]>,
        #[serde(default = "default_clip_sample")]
        clip_sample: usize,
        #[serde(default = "default_vocab_cap")]
        vocab_cap: usize,
        #[serde(default = "default_prompt_weight")]
        prompt_weight: f64,
    },
    #[serde(rename = "doc-vector")]
    DocVector {
        epsilons: Vec<f64>,
        #[serde(default = "default_clip_c")]
        clip_c: f64,
    },
}

fn default_list_size() -> usize {
    20
}
fn default_max_new_tokens() -> usize {
    40
}
fn default_clip_sample() -> usize {
    100
}
fn default_vocab_cap() -> usize {
    crate::mechanisms::NgramGenerator::DEFAULT_VOCAB_CAP
}
fn default_prompt_weight() -> f64 {
    0.5
}
fn default_clip_c() -> f64 {
    0.1
}

/// A swept budget with its 1-based level (rank by ascending epsilon).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Level {
    pub level: u8,
    pub epsilon: f64,
    /// The configured value: epsilon, or the temperature for `token-temp`.
    pub parameter: f64,
}

impl MechanismSweep {
    pub fn kind(&self) -> MechanismKind {
        match self {
            MechanismSweep::WordMldp { .. } => MechanismKind::WordMldp,
            MechanismSweep::TokenTemp { .. } => MechanismKind::TokenTemperature,
            MechanismSweep::DocVector { .. } => MechanismKind::DocVector,
        }
    }

    fn parameters(&self) -> &[f64] {
        match self {
            MechanismSweep::WordMldp { epsilons, .. } | MechanismSweep::DocVector { epsilons, .. } => epsilons,
            MechanismSweep::TokenTemp { temperatures, .. } => temperatures,
        }
    }

    pub fn levels(&self) -> Vec<Level> {
        let mut levels: Vec<Level> = self
            .parameters()
            .iter()
            .map(|&p| {
                let epsilon = match self {
                    MechanismSweep::TokenTemp { .. } => temperature_epsilon(p),
                    _ => p,
                };
                Level { level: 0, epsilon, parameter: p }
            })
            .collect();
        levels.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
        for (i, l) in levels.iter_mut().enumerate() {
            l.level = (i + 1) as u8;
        }
        levels
    }

    fn validate(&self) -> Result<()> {
        let tag = self.kind().tag();
        let bad = |m: String| Err(HarnessError::Config(format!("mechanism {tag}: {m}")));
        let params = self.parameters();
        if params.is_empty() {
            return bad("empty budget list".into());
        }
        if params.len() > usize::from(u8::MAX) {
            return bad("too many budget levels".into());
        }
        if let Some(p) = params.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return bad(format!("budget parameter {p} must be finite and > 0"));
        }
        let levels = self.levels();
        if levels.windows(2).any(|w| w[0].epsilon == w[1].epsilon) {
            return bad("duplicate budget".into());
        }
        match self {
            MechanismSweep::WordMldp { list_size, .. } if *list_size == 0 => bad("list_size must be positive".into()),
            MechanismSweep::TokenTemp { max_new_tokens, clip, clip_sample, prompt_weight, .. } => {
                if *max_new_tokens == 0 {
                    return bad("max_new_tokens must be positive".into());
                }
                if let Some([lo, hi]) = clip {
                    if !(hi > lo) {
                        return bad(format!("clip range [{lo}, {hi}] is empty"));
                    }
                } else if *clip_sample == 0 {
                    return bad("clip_sample must be positive".into());
                }
                if !(0.0..=1.0).contains(prompt_weight) {
                    return bad(format!("prompt_weight {prompt_weight} outside [0, 1]"));
                }
                Ok(())
            }
            MechanismSweep::DocVector { clip_c, .. } if !(*clip_c > 0.0) => bad(format!("clip_c {clip_c} must be > 0")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_nn_cap")]
    pub nn_cap: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub jobs: usize,
    pub dataset: DatasetConfig,
    pub embeddings: EmbeddingConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    pub mechanisms: Vec<MechanismSweep>,
}

fn default_seed() -> u64 {
    42
}
fn default_nn_cap() -> usize {
    10_000
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

pub const ENV_SEED: &str = "TEXTDP_SEED";
pub const ENV_JOBS: &str = "TEXTDP_JOBS";
pub const ENV_OUT: &str = "TEXTDP_OUT";
pub const ENV_NN_CAP: &str = "TEXTDP_NN_CAP";

impl ExperimentConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.dataset.path);
        resolve(&mut cfg.embeddings.path);
        resolve(&mut cfg.output);
        if let Some(c) = cfg.embeddings.neighbor_cache.as_mut() {
            resolve(c);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// Applies `TEXTDP_SEED`, `TEXTDP_JOBS`, `TEXTDP_OUT` and `TEXTDP_NN_CAP`.
    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_overrides(|k| std::env::var(k).ok())
    }

    pub fn apply_overrides(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim().parse().map_err(|_| HarnessError::Config(format!("{key}: cannot parse `{v}`")))
        }
        if let Some(v) = get(ENV_SEED) {
            self.seed = parse(ENV_SEED, &v)?;
        }
        if let Some(v) = get(ENV_JOBS) {
            self.jobs = parse(ENV_JOBS, &v)?;
        }
        if let Some(v) = get(ENV_OUT) {
            self.output = PathBuf::from(v);
        }
        if let Some(v) = get(ENV_NN_CAP) {
            self.nn_cap = parse(ENV_NN_CAP, &v)?;
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            fractions: self.split.fractions.clone(),
            train_ratio: self.split.train_ratio,
            seed: self.seed,
            repetitions: self.split.repetitions,
        }
    }

    pub fn hyper(&self) -> Hyper {
        Hyper { epochs: self.classifier.epochs, lr: self.classifier.lr, l2: self.classifier.l2, seed: self.seed }
    }

    pub fn dataset_format(&self) -> Result<Format> {
        match self.dataset.format {
            Some(f) => Ok(f),
            None => Format::from_path(&self.dataset.path).ok_or_else(|| {
                HarnessError::Config(format!("cannot infer format of {}", self.dataset.path.display()))
            }),
        }
    }

    pub fn dataset_name(&self) -> String {
        self.dataset.name.clone().unwrap_or_else(|| {
            self.dataset.path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string()
        })
    }

    /// Whether doc-vector cells need their own embedding-feature baselines.
    pub fn needs_embedding_baseline(&self) -> bool {
        let all_embedding = self.features.utility.mode == FeatureMode::MeanEmbedding
            && self.features.privacy.mode == FeatureMode::MeanEmbedding;
        !all_embedding && self.mechanisms.iter().any(|m| m.kind() == MechanismKind::DocVector)
    }

    /// Checks values and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        self.validate_values()?;
        for (what, p) in [("dataset", &self.dataset.path), ("embeddings", &self.embeddings.path)] {
            if !p.is_file() {
                return Err(HarnessError::Config(format!("{what} file {} not found", p.display())));
            }
        }
        Ok(())
    }

    pub fn validate_values(&self) -> Result<()> {
        self.split_spec().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.stats.bins == 0 {
            return Err(HarnessError::Config("stats.bins must be positive".into()));
        }
        if self.nn_cap == 0 {
            return Err(HarnessError::Config("nn_cap must be positive".into()));
        }
        if self.mechanisms.is_empty() {
            return Err(HarnessError::Config("no mechanisms configured".into()));
        }
        for m in &self.mechanisms {
            m.validate()?;
        }
        if self.mechanisms.iter().enumerate().any(|(i, m)| self.mechanisms[..i].iter().any(|o| o.kind() == m.kind())) {
            return Err(HarnessError::Config("each mechanism kind may appear once".into()));
        }
        let c = &self.classifier;
        if c.epochs == 0 || !(c.lr > 0.0) || !(c.l2 >= 0.0) {
            return Err(HarnessError::Config("classifier needs epochs > 0, lr > 0, l2 >= 0".into()));
        }
        for spec in [&self.features.utility, &self.features.privacy] {
            if spec.mode == FeatureMode::BagOfWords && spec.vocab_cap == 0 {
                return Err(HarnessError::Config("vocab_cap must be positive".into()));
            }
            if spec.mode == FeatureMode::RawVector {
                return Err(HarnessError::Config("raw-vector features need vector-bearing corpora; use mean-embedding".into()));
            }
        }
        self.dataset_format()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset]
path = "data/c.jsonl"

[embeddings]
path = "/abs/emb.txt"

[[mechanisms]]
kind = "token-temp"
temperatures = [1.25, 1.75, 1.5]

[[mechanisms]]
kind = "doc-vector"
epsilons = [500, 1000]
"#;

    #[test]
    fn defaults_and_paths() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL, Path::new("/base")).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.nn_cap, 10_000);
        assert_eq!(cfg.dataset.path, PathBuf::from("/base/data/c.jsonl"));
        assert_eq!(cfg.embeddings.path, PathBuf::from("/abs/emb.txt"));
        assert_eq!(cfg.split_spec(), SplitSpec::default());
        assert_eq!(cfg.dataset_name(), "c");
        assert!(cfg.needs_embedding_baseline());
        cfg.validate_values().unwrap();
    }

    #[test]
    fn levels_follow_epsilon() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL, Path::new("/")).unwrap();
        let temps: Vec<f64> = cfg.mechanisms[0].levels().iter().map(|l| l.parameter).collect();
        assert_eq!(temps, vec![1.75, 1.5, 1.25]);
        assert_eq!(cfg.mechanisms[0].levels()[2].epsilon, 1.6);
    }

    #[test]
    fn env_overrides() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL, Path::new("/")).unwrap();
        cfg.apply_overrides(|k| match k {
            ENV_SEED => Some("7".into()),
            ENV_NN_CAP => Some("50".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!((cfg.seed, cfg.nn_cap), (7, 50));
        assert!(cfg.apply_overrides(|k| (k == ENV_JOBS).then(|| "many".into())).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let text = MINIMAL.replace("[500, 1000]", "[500, 500]");
        let cfg = ExperimentConfig::from_toml_str(&text, Path::new("/")).unwrap();
        assert!(cfg.validate_values().is_err());
        let text = MINIMAL.replace("[500, 1000]", "[]");
        let cfg = ExperimentConfig::from_toml_str(&text, Path::new("/")).unwrap();
        assert!(cfg.validate_values().is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("bogus = 1\n{MINIMAL}"), Path::new("/")).is_err());
    }
}
