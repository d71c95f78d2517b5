use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Level};
use super::{HarnessError, Result};
use crate::mechanisms::MechanismKind;
use crate::metrics::BASELINE;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedMechanism {
    /// Position of the sweep in the config.
    pub sweep: usize,
    pub kind: MechanismKind,
    pub level: Level,
}

impl PlannedMechanism {
    pub fn id(&self) -> String {
        format!("{}-e{}", self.kind.tag(), self.level.level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaselineVariant {
    /// Configured feature specs.
    Configured,
    /// Mean-embedding features for both tasks, paired with doc-vector cells.
    Embedding,
}

impl BaselineVariant {
    pub fn mechanism_label(self) -> String {
        match self {
            BaselineVariant::Configured => BASELINE.to_string(),
            BaselineVariant::Embedding => format!("{BASELINE}-embedding"),
        }
    }
}

/// Either a private cell (`mechanism = Some(i)` into [`Plan::mechanisms`]) or
/// a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub mechanism: Option<usize>,
    pub baseline: BaselineVariant,
    pub fraction_index: usize,
    /// 1-based.
    pub repetition: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub mechanisms: Vec<PlannedMechanism>,
    pub fractions: Vec<f64>,
    pub repetitions: usize,
    pub baselines: Vec<CellKey>,
    pub cells: Vec<CellKey>,
}

impl Plan {
    pub fn from_config(cfg: &ExperimentConfig) -> Plan {
        let mechanisms: Vec<PlannedMechanism> = cfg
            .mechanisms
            .iter()
            .enumerate()
            .flat_map(|(sweep, m)| m.levels().into_iter().map(move |level| PlannedMechanism { sweep, kind: m.kind(), level }))
            .collect();
        let fractions = cfg.split.fractions.clone();
        let reps = cfg.split.repetitions;
        let grid = |mechanism: Option<usize>, baseline: BaselineVariant| {
            (0..fractions.len()).flat_map(move |fraction_index| {
                (1..=reps).map(move |repetition| CellKey { mechanism, baseline, fraction_index, repetition })
            })
        };
        let mut variants = vec![BaselineVariant::Configured];
        if cfg.needs_embedding_baseline() {
            variants.push(BaselineVariant::Embedding);
        }
        let baselines = variants.iter().flat_map(|&v| grid(None, v)).collect();
        let cells = mechanisms
            .iter()
            .enumerate()
            .flat_map(|(i, m)| {
                let variant = if m.kind == MechanismKind::DocVector && cfg.needs_embedding_baseline() {
                    BaselineVariant::Embedding
                } else {
                    BaselineVariant::Configured
                };
                grid(Some(i), variant)
            })
            .collect();
        Plan { mechanisms, fractions, repetitions: reps, baselines, cells }
    }

    pub fn baseline_of(&self, cell: &CellKey) -> CellKey {
        CellKey { mechanism: None, ..*cell }
    }

    pub fn cell_id(&self, key: &CellKey) -> String {
        let head = match key.mechanism {
            Some(i) => self.mechanisms[i].id(),
            None => key.baseline.mechanism_label(),
        };
        format!("{head}-f{}-r{}", key.fraction_index, key.repetition)
    }

    pub fn nn_id(&self, mechanism: usize, fraction_index: usize) -> String {
        format!("nn-{}-f{fraction_index}", self.mechanisms[mechanism].id())
    }

    pub fn all_units(&self) -> impl Iterator<Item = &CellKey> {
        self.baselines.iter().chain(&self.cells)
    }

    /// Human-readable listing used by dry runs.
    pub fn render(&self, cfg: &ExperimentConfig) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset: {} ({})", cfg.dataset_name(), cfg.dataset.path.display());
        let _ = writeln!(out, "seed: {}  nn_cap: {}  output: {}", cfg.seed, cfg.nn_cap, cfg.output.display());
        let _ = writeln!(out, "fractions: {:?}  repetitions: {}", self.fractions, self.repetitions);
        let _ = writeln!(out, "private corpora: {}", self.mechanisms.len());
        for m in &self.mechanisms {
            let _ = writeln!(
                out,
                "  {:<16} level {}  epsilon {:.6} ({} unit)",
                m.id(),
                m.level.level,
                m.level.epsilon,
                m.kind.epsilon_unit()
            );
        }
        let _ = writeln!(out, "baseline units: {}", self.baselines.len());
        let _ = writeln!(out, "cells: {}", self.cells.len());
        for key in self.all_units() {
            let _ = writeln!(out, "  {} fraction={}", self.cell_id(key), self.fractions[key.fraction_index]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitEntry {
    pub status: UnitStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl UnitEntry {
    pub fn pending() -> Self {
        UnitEntry { status: UnitStatus::Pending, seconds: None, error: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub artifact_version: String,
    /// Baselines and private cells.
    pub cells: BTreeMap<String, UnitEntry>,
    /// Nearest-neighbor scores per private corpus and fraction.
    pub nn: BTreeMap<String, UnitEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn fresh(plan: &Plan, config_hash: String) -> Self {
        let cells = plan.all_units().map(|k| (plan.cell_id(k), UnitEntry::pending())).collect();
        let nn = (0..plan.mechanisms.len())
            .flat_map(|m| (0..plan.fractions.len()).map(move |f| (m, f)))
            .map(|(m, f)| (plan.nn_id(m, f), UnitEntry::pending()))
            .collect();
        RunManifest { config_hash, artifact_version: env!("CARGO_PKG_VERSION").to_string(), cells, nn }
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| HarnessError::Format { path, message: e.to_string() })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        super::pipeline::write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn failed(&self) -> Vec<String> {
        self.cells
            .iter()
            .chain(&self.nn)
            .filter(|(_, e)| e.status == UnitStatus::Failed)
            .map(|(k, _)| k.clone())
            .collect()
    }
}
