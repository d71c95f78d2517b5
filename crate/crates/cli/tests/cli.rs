use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn textdp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textdp"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TEXTDP_SEED")
        .env_remove("TEXTDP_OUT")
        .env_remove("TEXTDP_JOBS")
        .env_remove("TEXTDP_NN_CAP")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const HEADER: &str = "dataset,mechanism,epsilon_level,epsilon,split_fraction,run_index,size,avg_words,util_f1,\
priv_f1_static,priv_f1_adaptive,util_baseline,priv_baseline,mg_u,gamma_static,gamma_adaptive,nn_mean_k";

// 96.1 / 99.7 utility, 67.0 / 75.2 privacy, 96.41 majority guess
fn trustpilot_rows(gamma_static: f64) -> String {
    format!(
        "{HEADER}\n\
         trustpilot,baseline,0,0,1,1,366210,52.39,99.7,75.2,75.2,99.7,75.2,96.41,0,0,1\n\
         trustpilot,word-mldp,1,0.5,1,1,366210,52.39,96.1,67.0,67.0,99.7,75.2,96.41,{gamma_static},{gamma_static},641\n"
    )
}

fn gamma() -> f64 {
    (96.1 - 96.41) / (99.7 - 96.41) - 67.0 / 75.2
}

#[test]
fn report_renders_the_rounded_gain() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cells.csv"), trustpilot_rows(gamma())).unwrap();
    let out = textdp(&["report", "--in", "."], dir.path());
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let row = text.lines().find(|l| l.contains("word-mldp")).expect("mechanism row");
    assert!(row.contains("-0.99"), "{row}");
    assert!(row.contains("0.5"), "{row}");
}

#[test]
fn gamma_check_flags_tampered_rows() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    fs::write(&good, trustpilot_rows(gamma())).unwrap();
    let out = textdp(&["gamma", "--in", "good.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(stdout(&out).starts_with("1 rows checked"));

    fs::write(dir.path().join("bad.csv"), trustpilot_rows(-0.9)).unwrap();
    let out = textdp(&["gamma", "--in", "bad.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(textdp(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(textdp(&["gamma", "--nope"], dir.path()).status.code(), Some(1));
    assert_eq!(textdp(&["gamma", "--in", "missing.csv"], dir.path()).status.code(), Some(1));
    assert_eq!(textdp(&["--help"], dir.path()).status.code(), Some(0));
}

fn synth(dir: &Path, documents: usize) {
    let n = documents.to_string();
    let out = textdp(&["synth", "--out", ".", "--documents", &n, "--vocab", "300", "--authors", "4"], dir);
    assert!(out.status.success(), "{out:?}");
}

const CONFIG: &str = r#"
output = "results"
[dataset]
path = "corpus.jsonl"
[embeddings]
path = "embeddings.txt"
[split]
fractions = [0.5, 1.0]
repetitions = 2
[[mechanisms]]
kind = "word-mldp"
epsilons = [1.0, 3.0]
list_size = 8
"#;

#[test]
fn dry_run_lists_the_plan_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 50);
    fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    let out = textdp(&["pipeline", "--config", "exp.toml", "--dry-run"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("word-mldp-e1-f0-r1"), "{text}");
    assert!(text.contains("word-mldp-e2-f1-r2"), "{text}");
    assert!(!dir.path().join("results").exists());
}

#[test]
fn pipeline_then_regress_and_report() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 400);
    fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    let out = textdp(&["pipeline", "--config", "exp.toml", "--jobs", "2"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let results = dir.path().join("results");
    let csv = fs::read_to_string(results.join("cells.csv")).unwrap();
    // 2 fractions x 2 reps of baselines, plus 2 budgets on top
    assert_eq!(csv.lines().count(), 1 + 4 + 8);

    let out = textdp(&["gamma", "--in", "results/cells.csv"], dir.path());
    assert!(out.status.success(), "{out:?}");

    let out = textdp(&["regress", "--in", "results", "--bins", "2", "--out", "stats"], dir.path());
    assert!(dir.path().join("stats/regression.json").is_file(), "{out:?}");

    let out = textdp(&["report", "--in", "results"], dir.path());
    assert!(out.status.success());
    assert!(stdout(&out).contains("baseline"));
}

#[test]
fn privatize_split_eval_and_nn() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 120);
    let p = dir.path();
    let run = |args: &[&str]| {
        let out = textdp(args, p);
        assert!(out.status.success(), "{args:?}: {out:?}");
        stdout(&out)
    };
    run(&[
        "privatize", "--input", "corpus.jsonl", "--embeddings", "embeddings.txt", "--mechanism", "word-mldp",
        "--epsilon", "1e9", "--list-size", "5", "--out", "private.jsonl",
    ]);
    assert_eq!(fs::read_to_string(p.join("private.jsonl")).unwrap().lines().count(), 120);

    let nn: serde_json::Value = serde_json::from_str(&run(&[
        "nn", "--private", "private.jsonl", "--original", "corpus.jsonl", "--embeddings", "embeddings.txt",
    ]))
    .unwrap();
    assert_eq!(nn["mean_k"], 1.0);

    run(&["split", "--input", "corpus.jsonl", "--fractions", "1.0", "--repetitions", "1", "--out", "splits"]);
    let score: serde_json::Value = serde_json::from_str(&run(&[
        "eval", "--train", "splits/f0-r1-train.jsonl", "--val", "splits/f0-val.jsonl", "--task", "utility",
        "--reps", "1", "--model-out", "model.json",
    ]))
    .unwrap();
    assert!(score.is_object());
    assert!(p.join("model.json").is_file());
}
