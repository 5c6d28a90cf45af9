use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use replytriage::clock::{Clock, FixedClock, SystemClock};
use replytriage::corpus::{ingest_adapter, load_corpus, Corpus, FixtureAdapter, SnapshotAdapter};
use replytriage::evaluation::{
    cohen_kappa, compare_relevance_techniques, join_scores_with_likert, paired_labels,
    read_ground_truth, read_likert, read_scores, threshold_sweep, EvalReport, LabelField,
    DEFAULT_SWEEP_THRESHOLDS,
};
use replytriage::relevance::{RelevanceBackends, Strategy};
use replytriage::service::{
    run_pipeline, serve, AppState, LlmBackendKind, PipelineError, ResultStore, ServiceConfig,
    ToxicityBackendKind,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;

/// Failure carrying its exit status.
pub struct Failure {
    code: i32,
    message: String,
}

fn invalid(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: message.to_string(),
    }
}

fn backend(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_BACKEND,
        message: message.to_string(),
    }
}

#[derive(Parser)]
#[command(name = "replytriage", version, about = "Triage replies to news posts by toxicity and relevance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a corpus file from a fixture or a platform snapshot.
    Ingest(IngestArgs),
    /// Classify every reply in a corpus, reusing cached results.
    Classify(ClassifyArgs),
    /// Classify, then serve the read-only HTTP API.
    Serve(ServeArgs),
    /// Offline evaluation tools.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Args)]
struct IngestArgs {
    /// Corpus JSON to re-ingest through the fixture adapter.
    #[arg(long, conflicts_with = "snapshot", required_unless_present = "snapshot")]
    fixture: Option<PathBuf>,
    /// Directory with posts.json, replies.json and article HTML.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Account handle; "*" takes every post.
    #[arg(long, default_value = "*")]
    handle: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML service configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    toxicity: Option<ToxicityBackendKind>,
    #[arg(long)]
    toxicity_url: Option<String>,
    #[arg(long)]
    llm: Option<LlmBackendKind>,
    #[arg(long)]
    llm_url: Option<String>,
    #[arg(long)]
    replay_dir: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    max_inflight: Option<usize>,
    /// Timestamp for every written record (seconds since the Unix epoch);
    /// falls back to SOURCE_DATE_EPOCH, then the system clock.
    #[arg(long)]
    source_date_epoch: Option<i64>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    reports_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Score keyword, LDA and LLM relevance against labels.
    CompareRelevance(CompareArgs),
    /// Precision and recall of a toxicity score at several thresholds.
    SweepToxicity(SweepArgs),
    /// Agreement between two raters.
    Kappa(KappaArgs),
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// CSV with reply_id,relevant,toxic,rater_id.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    llm: Option<LlmBackendKind>,
    #[arg(long)]
    llm_url: Option<String>,
    #[arg(long)]
    replay_dir: Option<PathBuf>,
    #[arg(long)]
    source_date_epoch: Option<i64>,
    #[arg(long)]
    json: bool,
    /// Also write the report to <dir>/latest.json.
    #[arg(long)]
    reports_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// CSV with comment_id,r1,r2,r3,r4,r5.
    #[arg(long)]
    likert: PathBuf,
    /// CSV with comment_id,score.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long, default_value = "TOXICITY")]
    attribute: String,
    #[arg(long)]
    source_date_epoch: Option<i64>,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    reports_dir: Option<PathBuf>,
}

#[derive(Args)]
struct KappaArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    rater_a: String,
    #[arg(long)]
    rater_b: String,
    /// relevant or toxic.
    #[arg(long, default_value = "relevant")]
    field: String,
}

pub fn main_with_args(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command) -> Result<i32, Failure> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Classify(a) => classify(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Eval(EvalCommand::CompareRelevance(a)) => compare(a),
        Command::Eval(EvalCommand::SweepToxicity(a)) => sweep(a),
        Command::Eval(EvalCommand::Kappa(a)) => kappa(a),
    }
}

fn clock_for(flag: Option<i64>) -> Result<Arc<dyn Clock>, Failure> {
    if let Some(secs) = flag {
        let c = FixedClock::at_epoch(secs)
            .ok_or_else(|| invalid(format!("--source-date-epoch {secs} is out of range")))?;
        return Ok(Arc::new(c));
    }
    Ok(match FixedClock::from_source_date_epoch() {
        Some(c) => Arc::new(c),
        None => Arc::new(SystemClock),
    })
}

fn load_config(path: Option<&Path>) -> Result<ServiceConfig, Failure> {
    match path {
        Some(p) => ServiceConfig::load(p).map_err(invalid),
        None => Ok(ServiceConfig::default()),
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{what} {} does not exist", path.display())))
    }
}

fn ingest(a: IngestArgs) -> Result<i32, Failure> {
    let corpus = if let Some(path) = a.fixture {
        require_file(&path, "fixture")?;
        let adapter = FixtureAdapter::open(&path).map_err(invalid)?;
        ingest_adapter(&adapter, &a.handle)
    } else {
        let dir = a.snapshot.expect("clap requires one source");
        let adapter = SnapshotAdapter::open(&dir).map_err(invalid)?;
        ingest_adapter(&adapter, &a.handle)
    }
    .map_err(backend)?;
    corpus.save(&a.out).map_err(invalid)?;
    let (p, ar, r) = corpus.cardinalities();
    println!("wrote {}: {p} posts, {ar} articles, {r} replies", a.out.display());
    Ok(EXIT_OK)
}

struct Prepared {
    config: ServiceConfig,
    corpus: Arc<Corpus>,
    store: Arc<ResultStore>,
    clock: Arc<dyn Clock>,
}

fn prepare(a: PipelineArgs) -> Result<Prepared, Failure> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(v) = a.corpus {
        config.corpus = Some(v);
    }
    if let Some(v) = a.strategy {
        config.strategy = v;
    }
    if let Some(v) = a.toxicity {
        config.backends.toxicity = v;
    }
    if let Some(v) = a.toxicity_url {
        config.backends.toxicity_base_url = v;
    }
    if let Some(v) = a.llm {
        config.backends.llm = v;
    }
    if let Some(v) = a.llm_url {
        config.backends.llm_base_url = v;
    }
    if let Some(v) = a.replay_dir {
        config.backends.replay_dir = Some(v);
    }
    if let Some(v) = a.cache {
        config.cache = v;
    }
    if let Some(v) = a.max_inflight {
        config.max_inflight = v;
    }
    config.resolve().map_err(invalid)?;
    let corpus_path = config
        .corpus
        .clone()
        .ok_or_else(|| invalid("no corpus given (use --corpus or set corpus in the config)"))?;
    let corpus = Arc::new(load_corpus(&corpus_path).map_err(invalid)?);
    let store = Arc::new(ResultStore::open(&config.cache).map_err(invalid)?);
    Ok(Prepared {
        config,
        corpus,
        store,
        clock: clock_for(a.source_date_epoch)?,
    })
}

fn run(p: &Prepared) -> Result<replytriage::service::RunSummary, Failure> {
    let deps = p
        .config
        .classifiers(&p.corpus, p.clock.clone())
        .map_err(invalid)?;
    run_pipeline(&p.corpus, &deps, &p.config.triage(), &p.store, p.config.max_inflight).map_err(
        |e| match e {
            PipelineError::Relevance(e) => invalid(e),
            PipelineError::Store(e) => backend(e),
        },
    )
}

fn classify(a: ClassifyArgs) -> Result<i32, Failure> {
    let p = prepare(a.pipeline)?;
    let summary = run(&p)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    } else {
        print!("{}", summary.render());
    }
    if summary.pending() > 0 {
        eprintln!(
            "warning: {} replies could not be classified and stay pending",
            summary.pending()
        );
        return Ok(EXIT_BACKEND);
    }
    Ok(EXIT_OK)
}

fn serve_cmd(a: ServeArgs) -> Result<i32, Failure> {
    let mut p = prepare(a.pipeline)?;
    if let Some(l) = a.listen {
        p.config.listen = l;
    }
    if let Some(d) = a.reports_dir {
        p.config.reports_dir = Some(d);
    }
    let summary = run(&p)?;
    if summary.pending() > 0 {
        log::warn!("{} replies pending", summary.pending());
    }
    let state = AppState {
        corpus: p.corpus.clone(),
        store: p.store.clone(),
        reports_dir: p.config.reports_dir.clone(),
    };
    let handle = serve(state, &p.config.listen).map_err(invalid)?;
    println!("listening on {}", handle.addr());
    let _ = std::io::stdout().flush();
    handle.wait();
    Ok(EXIT_OK)
}

fn emit_report(report: &EvalReport, json: bool, reports_dir: Option<&Path>) -> Result<(), Failure> {
    let body = serde_json::to_string_pretty(report).expect("report serializes");
    if json {
        println!("{body}");
    } else {
        print!("{}", report.render_table());
    }
    if let Some(dir) = reports_dir {
        std::fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
        let path = dir.join("latest.json");
        std::fs::write(&path, body + "\n").map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<i32, Failure> {
    require_file(&a.labels, "labels file")?;
    let mut config = load_config(a.config.as_deref())?;
    if let Some(v) = a.corpus {
        config.corpus = Some(v);
    }
    if let Some(v) = a.llm {
        config.backends.llm = v;
    }
    if let Some(v) = a.llm_url {
        config.backends.llm_base_url = v;
    }
    if let Some(v) = a.replay_dir {
        config.backends.replay_dir = Some(v);
    }
    config.resolve().map_err(invalid)?;
    let corpus_path = config
        .corpus
        .clone()
        .ok_or_else(|| invalid("no corpus given (use --corpus or set corpus in the config)"))?;
    let corpus = load_corpus(&corpus_path).map_err(invalid)?;
    let labels = read_ground_truth(&a.labels).map_err(invalid)?;
    let backends = RelevanceBackends {
        topic_model: None,
        chat: Some(config.chat_backend().map_err(invalid)?),
    };
    let clock = clock_for(a.source_date_epoch)?;
    let report = compare_relevance_techniques(&corpus, &labels, &backends, &config.relevance, clock.now())
        .map_err(invalid)?;
    emit_report(&report, a.json, a.reports_dir.as_deref())?;
    Ok(if report.rows.iter().any(|r| r.failures > 0) {
        EXIT_BACKEND
    } else {
        EXIT_OK
    })
}

fn sweep(a: SweepArgs) -> Result<i32, Failure> {
    require_file(&a.likert, "Likert file")?;
    require_file(&a.scores, "scores file")?;
    let likert = read_likert(&a.likert).map_err(invalid)?;
    let scores = read_scores(&a.scores).map_err(invalid)?;
    let scored = join_scores_with_likert(&scores, &likert);
    let thresholds = a.thresholds.unwrap_or_else(|| DEFAULT_SWEEP_THRESHOLDS.to_vec());
    let clock = clock_for(a.source_date_epoch)?;
    let report = threshold_sweep(&a.attribute, &scored, &thresholds, clock.now()).map_err(invalid)?;
    emit_report(&report, a.json, a.reports_dir.as_deref())?;
    Ok(EXIT_OK)
}

fn kappa(a: KappaArgs) -> Result<i32, Failure> {
    require_file(&a.labels, "labels file")?;
    let field = match a.field.as_str() {
        "relevant" => LabelField::Relevant,
        "toxic" => LabelField::Toxic,
        other => return Err(invalid(format!("unknown field \"{other}\" (expected relevant or toxic)"))),
    };
    let labels = read_ground_truth(&a.labels).map_err(invalid)?;
    let (x, y) = paired_labels(&labels, &a.rater_a, &a.rater_b, field);
    let k = cohen_kappa(&x, &y).map_err(invalid)?;
    println!("kappa {k:.4} over {} shared items", x.len());
    Ok(EXIT_OK)
}
