use std::fs;
use std::path::Path;

use textdp::harness::{run_pipeline, ExperimentConfig, HarnessError, Plan, RunManifest, RunOptions, UnitStatus};
use textdp::metrics::read_records;
use textdp::synthetic::{generate, write_files, SyntheticSpec};

fn setup(dir: &Path, documents: usize) {
    let spec = SyntheticSpec { documents, vocab_size: 300, authors: 4, ..Default::default() };
    write_files(&generate(&spec), dir).unwrap();
}

fn config(dir: &Path, body: &str) -> ExperimentConfig {
    let text = format!(
        r#"
output = "out"
[dataset]
path = "corpus.jsonl"
[embeddings]
path = "embeddings.txt"
{body}
"#
    );
    ExperimentConfig::from_toml_str(&text, dir).unwrap()
}

#[test]
fn single_cell_counts_and_identity_gain() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 120);
    let cfg = config(
        dir.path(),
        r#"
[split]
fractions = [1.0]
repetitions = 1
[[mechanisms]]
kind = "word-mldp"
epsilons = [1e9]
list_size = 5
"#,
    );
    let outcome = run_pipeline(&cfg, &RunOptions::default()).unwrap();
    assert!(outcome.failed.is_empty(), "{:?}", outcome.failed);
    let baselines = outcome.records.iter().filter(|r| r.is_baseline()).count();
    let cells: Vec<_> = outcome.records.iter().filter(|r| !r.is_baseline()).collect();
    assert_eq!((baselines, cells.len()), (1, 1));
    let cell = cells[0];
    assert!(cell.gamma_static.abs() < 1e-12 && cell.gamma_adaptive.abs() < 1e-12, "{cell:?}");
    assert_eq!(cell.util_f1, cell.util_baseline);
    assert_eq!(cell.size, 120);

    let out = dir.path().join("out");
    for f in ["cells.csv", "nn.csv", "regression.json", "manifest.json", "dataset.json", "private/word-mldp-e1.jsonl"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let persisted = read_records(fs::File::open(out.join("cells.csv")).unwrap()).unwrap();
    assert_eq!(persisted, outcome.records);
}

const SWEEP: &str = r#"
[split]
fractions = [0.25, 0.5, 1.0]
repetitions = 2
[[mechanisms]]
kind = "word-mldp"
epsilons = [3.0, 0.5]
list_size = 8
[[mechanisms]]
kind = "doc-vector"
epsilons = [500]
"#;

#[test]
fn manifest_cell_count_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 600);
    let mut cfg = config(dir.path(), SWEEP);
    let full = run_pipeline(&cfg, &RunOptions::default()).unwrap();
    assert!(full.failed.is_empty(), "{:?}", full.manifest);
    let plan = Plan::from_config(&cfg);
    // 3 private corpora x 3 fractions x 2 reps, plus both baseline variants
    assert_eq!(plan.cells.len(), 18);
    assert_eq!(plan.baselines.len(), 12);
    assert_eq!(full.manifest.cells.len(), 30);
    assert!(full.manifest.cells.values().all(|e| e.status == UnitStatus::Done));
    let expected = fs::read(dir.path().join("out/cells.csv")).unwrap();

    cfg.output = dir.path().join("resumed");
    let partial = run_pipeline(&cfg, &RunOptions { resume: false, stop_after: Some(7) }).unwrap();
    assert!(partial.interrupted);
    let m = RunManifest::load(&cfg.output).unwrap().unwrap();
    let done = m.cells.values().filter(|e| e.status == UnitStatus::Done).count();
    assert_eq!(done, 7);
    assert!(!cfg.output.join("cells.csv").exists());

    let resumed = run_pipeline(&cfg, &RunOptions { resume: true, stop_after: None }).unwrap();
    assert!(!resumed.interrupted && resumed.failed.is_empty());
    assert_eq!(fs::read(cfg.output.join("cells.csv")).unwrap(), expected);

    cfg.seed = 7;
    assert!(matches!(run_pipeline(&cfg, &RunOptions { resume: true, stop_after: None }), Err(HarnessError::ConfigChanged(_))));
}

#[test]
fn failing_cells_are_isolated() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 300);
    // 1% of 300 documents leaves an empty validation set
    let cfg = config(
        dir.path(),
        r#"
[split]
fractions = [0.01, 1.0]
repetitions = 1
[[mechanisms]]
kind = "word-mldp"
epsilons = [1.0]
list_size = 4
"#,
    );
    let outcome = run_pipeline(&cfg, &RunOptions::default()).unwrap();
    assert!(outcome.failed.contains(&"baseline-f0-r1".to_string()), "{:?}", outcome.failed);
    assert!(outcome.failed.contains(&"word-mldp-e1-f0-r1".to_string()));
    assert_eq!(outcome.records.len(), 2);
    assert!(outcome.records.iter().all(|r| r.split_fraction == 1.0));
}

#[test]
fn token_temperature_levels_rank_by_budget() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), 300);
    let cfg = config(
        dir.path(),
        r#"
[split]
fractions = [1.0]
repetitions = 1
[[mechanisms]]
kind = "token-temp"
temperatures = [1.25, 2.0]
max_new_tokens = 12
clip_sample = 20
"#,
    );
    let outcome = run_pipeline(&cfg, &RunOptions::default()).unwrap();
    assert!(outcome.failed.is_empty(), "{:?}", outcome.failed);
    let mut cells: Vec<_> = outcome.records.iter().filter(|r| !r.is_baseline()).collect();
    cells.sort_by_key(|r| r.epsilon_level);
    assert_eq!(cells.len(), 2);
    // T = 2.0 gives the smaller budget and ranks first
    assert_eq!(cells[0].epsilon, 1.0);
    assert_eq!(cells[1].epsilon, 1.6);
    let private = fs::read_to_string(dir.path().join("out/private/token-temp-e1.jsonl")).unwrap();
    assert_eq!(private.lines().count(), 300);
    for line in private.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["text"].as_str().unwrap().split_whitespace().count() <= 12, "{line}");
    }
}
