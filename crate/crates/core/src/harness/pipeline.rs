use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::analysis::{analyze, DatasetSummary, StatsReport};
use super::config::ExperimentConfig;
use super::plan::{BaselineVariant, CellKey, Plan, PlannedMechanism, RunManifest, UnitEntry, UnitStatus};
use super::privatizer::Privatizer;
use super::{HarnessError, Result};
use crate::classifiers::{fit_and_score, FeatureMode, FeatureSpec, Hyper, Task};
use crate::corpus::{load_corpus, majority_guess, split_indices, write_jsonl, Corpus, CorpusError, SplitIndices};
use crate::embeddings::{load_embeddings, EmbeddingTable};
use crate::metrics::{nn_indistinguishability_corpus, relative_gain, write_records, EvalRecord};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Reuse finished units recorded in an existing manifest.
    pub resume: bool,
    /// Stop after computing this many baseline/cell units, leaving the rest
    /// pending as if the run had been interrupted.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    /// Baseline rows followed by private cells; empty when interrupted.
    pub records: Vec<EvalRecord>,
    pub failed: Vec<String>,
    pub interrupted: bool,
    pub stats: Option<StatsReport>,
    pub manifest: RunManifest,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct NnUnit {
    mean: f64,
    median: f64,
    size: usize,
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

/// Hash of every setting that affects results plus the input file contents.
/// Output location and thread count are excluded.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.output = PathBuf::new();
    c.jobs = 0;
    c.dataset.path = PathBuf::new();
    c.embeddings.path = PathBuf::new();
    c.embeddings.neighbor_cache = None;
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&c).expect("config serializes"));
    for p in [&cfg.dataset.path, &cfg.embeddings.path] {
        let bytes = fs::read(p).map_err(|e| HarnessError::io(p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    plan: &'a Plan,
    original: &'a Corpus,
    table: &'a EmbeddingTable,
    splits: &'a [SplitIndices],
    hyper: Hyper,
    out: &'a Path,
    manifest: Mutex<RunManifest>,
    computed: AtomicUsize,
    interrupted: AtomicBool,
    stop_after: Option<usize>,
}

#[derive(Clone, Copy)]
enum Section {
    Cells,
    Nn,
}

impl Context<'_> {
    fn split(&self, fraction_index: usize, repetition: usize) -> &SplitIndices {
        &self.splits[fraction_index * self.plan.repetitions + repetition - 1]
    }

    /// Every document of a fraction's split, in corpus order.
    fn positions(&self, fraction_index: usize) -> Vec<usize> {
        let s = self.split(fraction_index, 1);
        let mut p: Vec<usize> = s.train.iter().chain(&s.val).copied().collect();
        p.sort_unstable();
        p
    }

    fn unit_path(&self, id: &str) -> PathBuf {
        self.out.join("units").join(format!("{id}.json"))
    }

    fn read_unit<T: DeserializeOwned>(&self, id: &str) -> Option<T> {
        let text = fs::read_to_string(self.unit_path(id)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn is_done(&self, section: Section, id: &str) -> bool {
        let m = self.manifest.lock().expect("manifest lock");
        let map = match section {
            Section::Cells => &m.cells,
            Section::Nn => &m.nn,
        };
        map.get(id).is_some_and(|e| e.status == UnitStatus::Done) && self.unit_path(id).is_file()
    }

    fn take_budget(&self) -> bool {
        match self.stop_after {
            None => true,
            Some(k) => {
                let ok = self.computed.fetch_add(1, Ordering::SeqCst) < k;
                if !ok {
                    self.interrupted.store(true, Ordering::SeqCst);
                }
                ok
            }
        }
    }

    fn exhausted(&self) -> bool {
        self.stop_after.is_some_and(|k| self.computed.load(Ordering::SeqCst) >= k)
    }

    fn finish<T: Serialize>(&self, section: Section, id: &str, started: Instant, result: std::result::Result<T, String>) {
        let seconds = Some(started.elapsed().as_secs_f64());
        let entry = match result {
            Ok(value) => {
                let text = serde_json::to_string_pretty(&value).expect("unit serializes");
                match write_atomic(&self.unit_path(id), text.as_bytes()) {
                    Ok(()) => UnitEntry { status: UnitStatus::Done, seconds, error: None },
                    Err(e) => UnitEntry { status: UnitStatus::Failed, seconds, error: Some(e.to_string()) },
                }
            }
            Err(e) => UnitEntry { status: UnitStatus::Failed, seconds, error: Some(e) },
        };
        if let Some(e) = &entry.error {
            warn!("{id} failed: {e}");
        } else {
            info!("{id} done");
        }
        let mut m = self.manifest.lock().expect("manifest lock");
        let map = match section {
            Section::Cells => &mut m.cells,
            Section::Nn => &mut m.nn,
        };
        map.insert(id.to_string(), entry);
        if let Err(e) = m.save(self.out) {
            warn!("cannot write manifest: {e}");
        }
    }

    fn run_cell<F>(&self, key: &CellKey, compute: F)
    where
        F: FnOnce() -> std::result::Result<EvalRecord, String>,
    {
        let id = self.plan.cell_id(key);
        if self.is_done(Section::Cells, &id) || !self.take_budget() {
            return;
        }
        let started = Instant::now();
        self.finish(Section::Cells, &id, started, compute());
    }

    fn feature_specs(&self, variant: BaselineVariant) -> (FeatureSpec, FeatureSpec) {
        let f = self.cfg.features;
        match variant {
            BaselineVariant::Configured => (f.utility, f.privacy),
            BaselineVariant::Embedding => (
                FeatureSpec { mode: FeatureMode::MeanEmbedding, ..f.utility },
                FeatureSpec { mode: FeatureMode::MeanEmbedding, ..f.privacy },
            ),
        }
    }

    fn score(&self, train: &Corpus, val: &Corpus, task: Task, spec: &FeatureSpec) -> std::result::Result<f64, String> {
        fit_and_score(train, val, task, spec, &self.hyper, Some(self.table)).map_err(|e| e.to_string())
    }

    fn compute_baseline(&self, key: &CellKey) -> std::result::Result<EvalRecord, String> {
        let s = self.split(key.fraction_index, key.repetition);
        let train = self.original.select(&s.train);
        let val = self.original.select(&s.val);
        let (us, ps) = self.feature_specs(key.baseline);
        let util = self.score(&train, &val, Task::Utility, &us)?;
        let privacy = self.score(&train, &val, Task::Privacy, &ps)?;
        let mg_u = if self.cfg.dataset.majority_correction {
            majority_guess(&val).map_err(|e| e.to_string())?
        } else {
            0.0
        };
        let split_docs = self.original.select(&self.positions(key.fraction_index));
        Ok(EvalRecord {
            dataset: self.original.name().to_string(),
            mechanism: key.baseline.mechanism_label(),
            epsilon_level: 0,
            epsilon: 0.0,
            split_fraction: self.plan.fractions[key.fraction_index],
            run_index: key.repetition,
            size: split_docs.len(),
            avg_words: split_docs.avg_words(),
            util_f1: util,
            priv_f1_static: privacy,
            priv_f1_adaptive: privacy,
            util_baseline: util,
            priv_baseline: privacy,
            mg_u,
            gamma_static: 0.0,
            gamma_adaptive: 0.0,
            nn_mean_k: 1.0,
        })
    }

    fn compute_cell(&self, key: &CellKey, mech: &PlannedMechanism, private: &Corpus) -> std::result::Result<EvalRecord, String> {
        let base_id = self.plan.cell_id(&self.plan.baseline_of(key));
        let base: EvalRecord = self.read_unit(&base_id).ok_or_else(|| format!("baseline {base_id} unavailable"))?;
        let nn_id = self.plan.nn_id(key.mechanism.expect("private cell"), key.fraction_index);
        let nn: NnUnit = self.read_unit(&nn_id).ok_or_else(|| format!("{nn_id} unavailable"))?;

        let s = self.split(key.fraction_index, key.repetition);
        let original_train = self.original.select(&s.train);
        let private_train = private.select(&s.train);
        let private_val = private.select(&s.val);
        let (us, ps) = self.feature_specs(key.baseline);
        let util = self.score(&private_train, &private_val, Task::Utility, &us)?;
        let p_static = self.score(&original_train, &private_val, Task::Privacy, &ps)?;
        let p_adaptive = self.score(&private_train, &private_val, Task::Privacy, &ps)?;
        let gain = |p: f64| {
            relative_gain(util, base.util_baseline, p, base.priv_baseline, Some(base.mg_u)).map_err(|e| e.to_string())
        };
        Ok(EvalRecord {
            mechanism: mech.kind.tag().to_string(),
            epsilon_level: mech.level.level,
            epsilon: mech.level.epsilon,
            util_f1: util,
            priv_f1_static: p_static,
            priv_f1_adaptive: p_adaptive,
            gamma_static: gain(p_static)?,
            gamma_adaptive: gain(p_adaptive)?,
            nn_mean_k: nn.mean,
            ..base
        })
    }

    fn run_nn(&self, mechanism: usize, fraction_index: usize, private: &Corpus) {
        let id = self.plan.nn_id(mechanism, fraction_index);
        if self.is_done(Section::Nn, &id) {
            return;
        }
        let started = Instant::now();
        let pos = self.positions(fraction_index);
        let result = nn_indistinguishability_corpus(&private.select(&pos), &self.original.select(&pos), self.table, self.cfg.nn_cap)
            .map(|s| NnUnit { mean: s.mean, median: s.median, size: pos.len() })
            .map_err(|e| e.to_string());
        self.finish(Section::Nn, &id, started, result);
    }

    fn mark_failed(&self, ids: Vec<(Section, String)>, error: &str) {
        let started = Instant::now();
        for (section, id) in ids {
            self.finish::<()>(section, &id, started, Err(error.to_string()));
        }
    }

    fn privatize(&self, mech: &PlannedMechanism, privatizer: &mut Privatizer<'_>) -> std::result::Result<Corpus, String> {
        let (private, config) = privatizer.privatize(mech.sweep, &self.cfg.mechanisms[mech.sweep], &mech.level)?;
        let dir = self.out.join("private");
        let path = dir.join(format!("{}.jsonl", mech.id()));
        fs::create_dir_all(&dir)
            .and_then(|_| File::create(&path))
            .and_then(|f| write_jsonl(&private, Some(&config.privacy_tag()), f))
            .map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(private)
    }

    fn execute(&self) {
        self.plan.baselines.par_iter().for_each(|k| self.run_cell(k, || self.compute_baseline(k)));
        let mut privatizer = Privatizer::new(self.original, self.table, self.cfg.seed, self.cfg.embeddings.neighbor_cache.as_deref());
        for (mi, mech) in self.plan.mechanisms.iter().enumerate() {
            if self.exhausted() {
                self.interrupted.store(true, Ordering::SeqCst);
                return;
            }
            let cells: Vec<&CellKey> = self
                .plan
                .cells
                .iter()
                .filter(|k| k.mechanism == Some(mi) && !self.is_done(Section::Cells, &self.plan.cell_id(k)))
                .collect();
            let nn: Vec<usize> = (0..self.plan.fractions.len())
                .filter(|&f| !self.is_done(Section::Nn, &self.plan.nn_id(mi, f)))
                .collect();
            if cells.is_empty() && nn.is_empty() {
                continue;
            }
            info!("privatizing with {}", mech.id());
            let private = match self.privatize(mech, &mut privatizer) {
                Ok(p) => p,
                Err(e) => {
                    let ids = cells
                        .iter()
                        .map(|k| (Section::Cells, self.plan.cell_id(k)))
                        .chain(nn.iter().map(|&f| (Section::Nn, self.plan.nn_id(mi, f))))
                        .collect();
                    self.mark_failed(ids, &format!("privatization failed: {e}"));
                    continue;
                }
            };
            nn.par_iter().for_each(|&f| self.run_nn(mi, f, &private));
            cells.par_iter().for_each(|k| self.run_cell(k, || self.compute_cell(k, mech, &private)));
        }
    }
}

/// Runs (or resumes) the full experiment described by `cfg` and persists
/// `cells.csv`, `nn.csv`, `dataset.json`, `regression.json`, `posthoc.csv`,
/// `manifest.json`, per-unit results under `units/` and the private corpora
/// under `private/`.
pub fn run_pipeline(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let plan = Plan::from_config(cfg);
    let out = cfg.output.as_path();
    let units = out.join("units");
    fs::create_dir_all(&units).map_err(|e| HarnessError::io(&units, e))?;
    let hash = config_hash(cfg)?;
    let manifest = match RunManifest::load(out)? {
        Some(m) if opts.resume => {
            if m.config_hash != hash {
                return Err(HarnessError::ConfigChanged(out.to_path_buf()));
            }
            m
        }
        _ => RunManifest::fresh(&plan, hash),
    };
    manifest.save(out)?;

    let original = load_corpus(&cfg.dataset.path, cfg.dataset_format()?, &cfg.dataset.schema)?.with_name(cfg.dataset_name());
    let unlabeled: Vec<String> =
        original.documents().iter().filter(|d| d.privacy_label.is_none()).map(|d| d.id.clone()).collect();
    if !unlabeled.is_empty() {
        return Err(CorpusError::MissingPrivacyLabel(unlabeled).into());
    }
    let table = load_embeddings(&cfg.embeddings.path)?;
    let splits = split_indices(original.len(), &cfg.split_spec())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;

    let ctx = Context {
        cfg,
        plan: &plan,
        original: &original,
        table: &table,
        splits: &splits,
        hyper: cfg.hyper(),
        out,
        manifest: Mutex::new(manifest),
        computed: AtomicUsize::new(0),
        interrupted: AtomicBool::new(false),
        stop_after: opts.stop_after,
    };
    pool.install(|| ctx.execute());
    let interrupted = ctx.interrupted.load(Ordering::SeqCst);
    let manifest = ctx.manifest.lock().expect("manifest lock").clone();
    manifest.save(out)?;
    let failed = manifest.failed();
    if interrupted {
        return Ok(PipelineOutcome { records: Vec::new(), failed, interrupted, stats: None, manifest });
    }

    let records: Vec<EvalRecord> = plan
        .all_units()
        .filter(|k| manifest.cells.get(&plan.cell_id(k)).is_some_and(|e| e.status == UnitStatus::Done))
        .filter_map(|k| ctx.read_unit(&plan.cell_id(k)))
        .collect();
    let mut csv = Vec::new();
    write_records(&records, &mut csv)?;
    write_atomic(&out.join("cells.csv"), &csv)?;
    write_atomic(&out.join("nn.csv"), nn_csv(&ctx, &manifest).as_bytes())?;

    let summary = DatasetSummary::of(&original);
    write_atomic(&out.join("dataset.json"), serde_json::to_string_pretty(&summary).expect("serializes").as_bytes())?;
    let stats = analyze(&records, &[summary], &cfg.stats);
    write_atomic(&out.join("regression.json"), serde_json::to_string_pretty(&stats).expect("serializes").as_bytes())?;
    let posthoc = out.join("posthoc.csv");
    match stats.posthoc_csv() {
        Some(text) => write_atomic(&posthoc, text.as_bytes())?,
        None => {
            let _ = fs::remove_file(&posthoc);
        }
    }
    Ok(PipelineOutcome { records, failed, interrupted, stats: Some(stats), manifest })
}

fn nn_csv(ctx: &Context<'_>, manifest: &RunManifest) -> String {
    let mut out = String::from("dataset,mechanism,epsilon_level,epsilon,split_fraction,size,nn_mean_k,nn_median_k\n");
    for (mi, mech) in ctx.plan.mechanisms.iter().enumerate() {
        for (fi, fraction) in ctx.plan.fractions.iter().enumerate() {
            let id = ctx.plan.nn_id(mi, fi);
            if !manifest.nn.get(&id).is_some_and(|e| e.status == UnitStatus::Done) {
                continue;
            }
            if let Some(u) = ctx.read_unit::<NnUnit>(&id) {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    ctx.original.name(),
                    mech.kind.tag(),
                    mech.level.level,
                    mech.level.epsilon,
                    fraction,
                    u.size,
                    u.mean,
                    u.median
                ));
            }
        }
    }
    out
}
