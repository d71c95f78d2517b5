//! `textdp` command-line interface.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use textdp::classifiers::{run_eval, train, FeatureMode, FeatureSpec, Featurizer, Hyper, Task};
use textdp::corpus::{load_corpus, make_splits, write_jsonl, Corpus, Format, Schema, SplitSpec};
use textdp::embeddings::{load_embeddings, EmbeddingTable};
use textdp::harness::{
    analyze, render_table2, run_pipeline, DatasetSummary, ExperimentConfig, Level, MechanismSweep, Plan, Privatizer,
    RunOptions, StatsConfig, StatsReport,
};
use textdp::mechanisms::{temperature_epsilon, MechanismKind};
use textdp::metrics::{nn_indistinguishability_corpus, read_records, verify_gammas, EvalRecord};
use textdp::stats::Adjustment;
use textdp::synthetic::{generate, write_files, SyntheticSpec};

const EXIT_USAGE: u8 = 1;
const EXIT_FAILURES: u8 = 2;

#[derive(Parser)]
#[command(name = "textdp", version, about = "Local-DP text rewriting and size-varying privacy/utility evaluation")]
struct Cli {
    /// Log progress (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rewrite a corpus with one mechanism at one budget.
    Privatize(PrivatizeArgs),
    /// Materialize the train/val splits of a corpus.
    Split(SplitArgs),
    /// Train and score a classifier on a train/val pair.
    Eval(EvalArgs),
    /// Nearest-neighbor indistinguishability of a private corpus.
    Nn(NnArgs),
    /// Recompute the gamma columns of an evaluation CSV.
    Gamma(GammaArgs),
    /// Regression and rank tests over evaluation CSVs.
    Regress(RegressArgs),
    /// Run the full experiment described by a config file.
    Pipeline(PipelineArgs),
    /// Render result tables from a pipeline output.
    Report(ReportArgs),
    /// Generate a synthetic corpus and embedding file.
    Synth(SynthArgs),
}

#[derive(Args)]
struct CorpusInput {
    /// Corpus file (.jsonl or .csv).
    #[arg(long)]
    input: PathBuf,
    /// Overrides the format implied by the file extension.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

impl CorpusInput {
    fn load(&self) -> Result<Corpus> {
        load_path(&self.input, self.format)
    }
}

fn load_path(path: &Path, format: Option<FormatArg>) -> Result<Corpus> {
    let format = match format {
        Some(FormatArg::Jsonl) => Format::Jsonl,
        Some(FormatArg::Csv) => Format::Csv,
        None => Format::from_path(path).with_context(|| format!("cannot infer the format of {}", path.display()))?,
    };
    Ok(load_corpus(path, format, &Schema::default())?)
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    WordMldp,
    TokenTemp,
    DocVector,
}

#[derive(Args)]
struct PrivatizeArgs {
    #[command(flatten)]
    corpus: CorpusInput,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, value_enum)]
    mechanism: MechanismArg,
    /// Per-word or per-document budget.
    #[arg(long, required_unless_present = "temperature")]
    epsilon: Option<f64>,
    /// Sampling temperature of token-temp; its per-token budget is 2/T.
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, default_value_t = 20)]
    list_size: usize,
    /// Logit clip range `LO HI`; estimated from the corpus when absent.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    clip: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    clip_sample: usize,
    #[arg(long, default_value_t = 40)]
    max_new_tokens: usize,
    #[arg(long, default_value_t = 20_000)]
    vocab_cap: usize,
    #[arg(long, default_value_t = 0.5)]
    prompt_weight: f64,
    #[arg(long, default_value_t = 0.1)]
    clip_c: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    neighbor_cache: Option<PathBuf>,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    corpus: CorpusInput,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5, 0.75, 1.0])]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 0.9)]
    train_ratio: f64,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Directory receiving `f<i>-r<j>-train.jsonl` / `f<i>-val.jsonl`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Utility,
    Privacy,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureArg {
    BagOfWords,
    MeanEmbedding,
    RawVector,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, value_enum, default_value = "bag-of-words")]
    features: FeatureArg,
    #[arg(long, default_value_t = 5000)]
    vocab_cap: usize,
    /// Needed for mean-embedding features.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also write the model fitted on the given train order as JSON.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct NnArgs {
    #[arg(long)]
    private: PathBuf,
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    cap: usize,
}

#[derive(Args)]
struct GammaArgs {
    /// Evaluation CSV.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct RegressArgs {
    /// Pipeline output directories or `cells.csv` files; each needs a
    /// `dataset.json` beside it.
    #[arg(long = "in", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 5)]
    bins: usize,
    /// Bonferroni-adjust Dunn p values.
    #[arg(long)]
    bonferroni: bool,
    /// Directory for `regression.json` and `posthoc.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the cell plan and exit without writing anything.
    #[arg(long)]
    dry_run: bool,
    /// Continue a previous run recorded in the output manifest.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Pipeline output directory or an evaluation CSV.
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    documents: usize,
    #[arg(long, default_value_t = 10)]
    authors: usize,
    #[arg(long, default_value_t = 2)]
    labels: usize,
    #[arg(long, default_value_t = 2000)]
    vocab: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Privatize(a) => privatize(a),
        Command::Split(a) => split(a),
        Command::Eval(a) => eval(a),
        Command::Nn(a) => nn(a),
        Command::Gamma(a) => gamma(a),
        Command::Regress(a) => regress(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth(a),
    }
}

fn load_table(path: &Path) -> Result<EmbeddingTable> {
    load_embeddings(path).with_context(|| format!("loading embeddings {}", path.display()))
}

fn print_json<T: serde::Serialize + ?Sized>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn privatize(a: PrivatizeArgs) -> Result<ExitCode> {
    let corpus = a.corpus.load()?;
    let table = load_table(&a.embeddings)?;
    let (sweep, parameter) = match a.mechanism {
        MechanismArg::WordMldp => {
            let e = a.epsilon.context("--epsilon is required")?;
            (MechanismSweep::WordMldp { epsilons: vec![e], list_size: a.list_size }, e)
        }
        MechanismArg::DocVector => {
            let e = a.epsilon.context("--epsilon is required")?;
            (MechanismSweep::DocVector { epsilons: vec![e], clip_c: a.clip_c }, e)
        }
        MechanismArg::TokenTemp => {
            let t = a.temperature.context("--temperature is required for token-temp")?;
            let clip = a.clip.map(|c| [c[0], c[1]]);
            let sweep = MechanismSweep::TokenTemp {
                temperatures: vec![t],
                max_new_tokens: a.max_new_tokens,
                clip,
                clip_sample: a.clip_sample,
                vocab_cap: a.vocab_cap,
                prompt_weight: a.prompt_weight,
            };
            (sweep, t)
        }
    };
    let epsilon = if sweep.kind() == MechanismKind::TokenTemperature { temperature_epsilon(parameter) } else { parameter };
    let level = Level { level: 1, epsilon, parameter };
    let mut privatizer = Privatizer::new(&corpus, &table, a.seed, a.neighbor_cache.as_deref());
    let (private, config) = privatizer.privatize(0, &sweep, &level).map_err(anyhow::Error::msg)?;
    let file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_jsonl(&private, Some(&config.privacy_tag()), file)?;
    eprintln!(
        "wrote {} documents to {} ({}, epsilon {} per {})",
        private.len(),
        a.out.display(),
        config.kind().tag(),
        config.epsilon(),
        config.kind().epsilon_unit()
    );
    Ok(ExitCode::SUCCESS)
}

fn split(a: SplitArgs) -> Result<ExitCode> {
    let corpus = a.corpus.load()?;
    let spec = SplitSpec { fractions: a.fractions, train_ratio: a.train_ratio, seed: a.seed, repetitions: a.repetitions };
    let cells = make_splits(&corpus, &spec)?;
    fs::create_dir_all(&a.out)?;
    let write = |name: String, c: &Corpus| -> Result<()> {
        let path = a.out.join(name);
        write_jsonl(c, None, File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
        Ok(())
    };
    for cell in &cells {
        write(format!("f{}-r{}-train.jsonl", cell.fraction_index, cell.repetition), &cell.pair.train)?;
        if cell.repetition == 1 {
            write(format!("f{}-val.jsonl", cell.fraction_index), &cell.pair.val)?;
        }
        println!(
            "fraction {} rep {}: train {} val {}",
            cell.fraction,
            cell.repetition,
            cell.pair.train.len(),
            cell.pair.val.len()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn eval(a: EvalArgs) -> Result<ExitCode> {
    let train_c = load_path(&a.train, None)?;
    let val = load_path(&a.val, None)?;
    let table = a.embeddings.as_deref().map(load_table).transpose()?;
    let mode = match a.features {
        FeatureArg::BagOfWords => FeatureMode::BagOfWords,
        FeatureArg::MeanEmbedding => FeatureMode::MeanEmbedding,
        FeatureArg::RawVector => FeatureMode::RawVector,
    };
    let spec = FeatureSpec { mode, vocab_cap: a.vocab_cap };
    let task = match a.task {
        TaskArg::Utility => Task::Utility,
        TaskArg::Privacy => Task::Privacy,
    };
    let hyper = Hyper { epochs: a.epochs, lr: a.lr, l2: a.l2, seed: a.seed };
    let score = run_eval(&train_c, &val, task, &spec, a.reps, &hyper, table.as_ref())?;
    if let Some(path) = &a.model_out {
        let featurizer = Featurizer::fit(&train_c, &spec, table.as_ref())?;
        let x = featurizer.transform(&train_c)?;
        let model = train(&x, &task.labels(&train_c)?, task.label_set(&train_c), &hyper)?;
        fs::write(path, model.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    print_json(&score)?;
    Ok(ExitCode::SUCCESS)
}

fn nn(a: NnArgs) -> Result<ExitCode> {
    let private = load_path(&a.private, None)?;
    let original = load_path(&a.original, None)?;
    let table = load_table(&a.embeddings)?;
    let score = nn_indistinguishability_corpus(&private, &original, &table, a.cap)?;
    print_json(&serde_json::json!({ "mean_k": score.mean, "median_k": score.median, "documents": score.ranks.len() }))?;
    Ok(ExitCode::SUCCESS)
}

fn read_csv(path: &Path) -> Result<Vec<EvalRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_records(file).with_context(|| format!("reading {}", path.display()))
}

fn gamma(a: GammaArgs) -> Result<ExitCode> {
    let records = read_csv(&a.input)?;
    let mismatches = verify_gammas(&records, a.tol);
    let checked = records.iter().filter(|r| !r.is_baseline()).count();
    if mismatches.is_empty() {
        println!("{checked} rows checked, all gamma values agree within {}", a.tol);
        return Ok(ExitCode::SUCCESS);
    }
    for m in &mismatches {
        match m.recomputed {
            Some(v) => eprintln!("row {}: {} stored {} recomputed {}", m.row, m.field, m.stored, v),
            None => eprintln!("row {}: gamma cannot be recomputed", m.row),
        }
    }
    let mut rows: Vec<usize> = mismatches.iter().map(|m| m.row).collect();
    rows.dedup();
    eprintln!("{} of {checked} rows disagree", rows.len());
    Ok(ExitCode::from(EXIT_FAILURES))
}

/// Resolves a pipeline output directory or CSV to `(cells.csv, dataset.json)`.
fn result_paths(input: &Path) -> (PathBuf, PathBuf) {
    if input.is_dir() {
        (input.join("cells.csv"), input.join("dataset.json"))
    } else {
        let dir = input.parent().unwrap_or(Path::new("."));
        (input.to_path_buf(), dir.join("dataset.json"))
    }
}

fn regress(a: RegressArgs) -> Result<ExitCode> {
    let mut records = Vec::new();
    let mut datasets: Vec<DatasetSummary> = Vec::new();
    for input in &a.inputs {
        let (csv, info) = result_paths(input);
        records.extend(read_csv(&csv)?);
        let text = fs::read_to_string(&info).with_context(|| format!("reading {}", info.display()))?;
        let summary: DatasetSummary = serde_json::from_str(&text).with_context(|| format!("parsing {}", info.display()))?;
        if let Some(prev) = datasets.iter().find(|d| d.name == summary.name) {
            if prev != &summary {
                bail!("dataset `{}` described inconsistently across inputs", summary.name);
            }
        } else {
            datasets.push(summary);
        }
    }
    let cfg = StatsConfig { bins: a.bins, adjustment: if a.bonferroni { Adjustment::Bonferroni } else { Adjustment::None } };
    let report = analyze(&records, &datasets, &cfg);
    print!("{}", report.render());
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("regression.json"), serde_json::to_string_pretty(&report)?)?;
        if let Some(csv) = report.posthoc_csv() {
            fs::write(dir.join("posthoc.csv"), csv)?;
        }
    }
    Ok(if report.regression.is_some() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAILURES) })
}

fn pipeline(a: PipelineArgs) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    cfg.apply_env()?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = a.out {
        cfg.output = o;
    }
    if a.dry_run {
        cfg.validate()?;
        print!("{}", Plan::from_config(&cfg).render(&cfg));
        return Ok(ExitCode::SUCCESS);
    }
    let outcome = run_pipeline(&cfg, &RunOptions { resume: a.resume, stop_after: None })?;
    let private = outcome.records.iter().filter(|r| !r.is_baseline()).count();
    println!(
        "{} records ({} private cells) written to {}",
        outcome.records.len(),
        private,
        cfg.output.join("cells.csv").display()
    );
    if let Some(stats) = &outcome.stats {
        print!("{}", stats.render());
    }
    if outcome.failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} units failed: {}", outcome.failed.len(), outcome.failed.join(", "));
        Ok(ExitCode::from(EXIT_FAILURES))
    }
}

fn report(a: ReportArgs) -> Result<ExitCode> {
    let (csv, _) = result_paths(&a.input);
    let records = read_csv(&csv)?;
    let mut out = BufWriter::new(io::stdout().lock());
    write!(out, "{}", render_table2(&records))?;
    let regression = csv.parent().unwrap_or(Path::new(".")).join("regression.json");
    if let Ok(text) = fs::read_to_string(&regression) {
        match serde_json::from_str::<StatsReport>(&text) {
            Ok(stats) => write!(out, "\n{}", stats.render())?,
            Err(e) => log::warn!("ignoring {}: {e}", regression.display()),
        }
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn synth(a: SynthArgs) -> Result<ExitCode> {
    let spec = SyntheticSpec {
        documents: a.documents,
        authors: a.authors,
        utility_labels: a.labels,
        vocab_size: a.vocab,
        dim: a.dim,
        seed: a.seed,
        ..Default::default()
    };
    if spec.documents == 0 || spec.authors == 0 || spec.utility_labels == 0 || spec.vocab_size == 0 {
        bail!("documents, authors, labels and vocab must be positive");
    }
    let (corpus, emb) = write_files(&generate(&spec), &a.out)?;
    println!("{}\n{}", corpus.display(), emb.display());
    Ok(ExitCode::SUCCESS)
}
