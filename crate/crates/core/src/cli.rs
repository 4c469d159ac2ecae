//! The `dfp` command line: extract → rank → train → evaluate → report.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, unreadable inputs),
//! 2 data error (malformed inputs), 3 internal error (including failures
//! writing outputs).

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::classifier::{load_model, save_model, Model, ModelEnvelope, TrainingInfo};
use crate::harness::{
    comparison_report, evaluate, read_cited, read_literature, split_indices, Metrics, SplitSpec, Trainer, CITED_CSV,
    LITERATURE_CSV,
};
use crate::ingest::{extract_files, CaptureReport, Diagnostics};
use crate::model::{read_csv, write_csv, Dataset, DeviceMap, FeatureSchema, SchemaMode};
use crate::selection::{apply_removal, rank_features, Ranking};
use crate::table::SearchParams;
use crate::tree::TreeParams;

#[derive(Debug, Parser)]
#[command(name = "dfp", version, about = "Identify IoT devices from single-packet TCP/IP header features")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dissect captures into a labeled per-packet feature CSV.
    Extract(ExtractArgs),
    /// Rank features by gain ratio.
    Rank(RankArgs),
    /// Train a classifier on a seeded split of a dataset.
    Train(TrainArgs),
    /// Evaluate a model on the held-out rows (or all rows) of a dataset.
    Evaluate(EvaluateArgs),
    /// Render a comparison table of measured and published results.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Capture files (classic pcap).
    #[arg(long, required = true, num_args = 1..)]
    pcap: Vec<PathBuf>,
    /// CSV mapping MAC addresses to device labels.
    #[arg(long)]
    devices: PathBuf,
    /// `full24`, `reduced22`, or a JSON schema file.
    #[arg(long, default_value = "reduced22")]
    schema: String,
    /// Features to drop from the schema.
    #[arg(long, value_delimiter = ',')]
    remove: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Fail on the first unreadable capture instead of skipping it.
    #[arg(long)]
    strict: bool,
    /// Write per-capture diagnostics as JSON.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Features to drop before ranking.
    #[arg(long, value_delimiter = ',')]
    remove: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassifierKind {
    J48,
    Dtable,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    classifier: ClassifierKind,
    #[arg(long, env = "DFP_SEED", default_value_t = 0)]
    seed: u64,
    /// Training fraction.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    #[arg(long)]
    stratified: bool,
    /// Output model file.
    #[arg(long)]
    model: PathBuf,
    /// Keep only the k best-ranked features.
    #[arg(long)]
    top_k: Option<usize>,
    /// Ranking CSV for --top-k; by default the training split is ranked.
    #[arg(long, requires = "top_k")]
    ranking: Option<PathBuf>,
    /// Disable pruning (j48).
    #[arg(long, conflicts_with = "confidence")]
    no_prune: bool,
    /// Pruning confidence factor (j48).
    #[arg(long)]
    confidence: Option<f64>,
    /// Minimum instance weight per branch (j48).
    #[arg(long)]
    min_leaf: Option<f64>,
    /// Maximum tree depth (j48).
    #[arg(long)]
    max_depth: Option<usize>,
    /// Non-improving expansions before the subset search stops (dtable).
    #[arg(long)]
    stale_limit: Option<usize>,
    /// Dataset name recorded in the model; defaults to the file stem.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output metrics JSON.
    #[arg(long)]
    report: PathBuf,
    /// Evaluate every row instead of the rows held out at training time.
    #[arg(long)]
    all: bool,
    /// Dataset name for the report; defaults to the name stored in the model.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Md,
    Csv,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Metrics documents written by `evaluate`.
    #[arg(long, num_args = 1..)]
    metrics: Vec<PathBuf>,
    /// Literature rows; the bundled table is used if omitted.
    #[arg(long)]
    literature: Option<PathBuf>,
    /// Published figures to compare measured accuracies against; bundled if omitted.
    #[arg(long)]
    cited: Option<PathBuf>,
    /// Output file; Markdown goes to stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; inferred from the --out extension by default.
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

fn data_err<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{context}: {e}"))
}

/// Read an input file named by `flag`; failure to open is a usage error.
fn open_input(flag: &str, path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Usage(format!("{flag} {}: {e}", path.display())))
}

fn read_input(flag: &str, path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Usage(format!("{flag} {}: {e}", path.display())))
}

/// Write through a temporary file in the target directory, then rename, so
/// a failed run never leaves a partial output behind.
fn write_atomic<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), String>,
{
    let fail = |e: &dyn std::fmt::Display| CliError::Internal(format!("writing {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w).map_err(|e| fail(&e))?;
        w.flush().map_err(|e| fail(&e))?;
    }
    tmp.as_file().sync_all().map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

fn load_schema(arg: &str) -> Result<FeatureSchema, CliError> {
    if let Ok(mode) = arg.parse::<SchemaMode>() {
        return Ok(crate::model::canonical_schema(mode));
    }
    let text = fs::read_to_string(arg)
        .map_err(|e| CliError::Usage(format!("--schema {arg}: not a builtin schema name and not readable: {e}")))?;
    FeatureSchema::from_json(&text).map_err(|e| CliError::Data(format!("--schema {arg}: {e}")))
}

fn remove_features(schema: FeatureSchema, remove: &[String]) -> Result<FeatureSchema, CliError> {
    if remove.is_empty() {
        return Ok(schema);
    }
    let reduced = apply_removal(&schema, remove).map_err(|e| CliError::Usage(format!("--remove: {e}")))?;
    info!("removed {} feature(s): {}", remove.len(), remove.join(", "));
    Ok(reduced)
}

fn load_dataset(flag: &str, path: &Path) -> Result<(Dataset, String), CliError> {
    let bytes = read_input(flag, path)?;
    let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    let ds = read_csv(&bytes[..], None).map_err(|e| CliError::Data(format!("{flag} {}: {e}", path.display())))?;
    Ok((ds, digest))
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Serialize)]
struct DiagnosticsDoc<'a> {
    totals: &'a Diagnostics,
    captures: &'a [CaptureReport],
}

fn cmd_extract(a: ExtractArgs) -> Result<(), CliError> {
    let schema = remove_features(load_schema(&a.schema)?, &a.remove)?;
    let devices = DeviceMap::read_csv(open_input("--devices", &a.devices)?)
        .map_err(|e| CliError::Data(format!("--devices {}: {e}", a.devices.display())))?;
    for p in &a.pcap {
        if !p.is_file() {
            return Err(CliError::Usage(format!("--pcap {}: no such file", p.display())));
        }
    }
    let ex = extract_files(&a.pcap, &devices, &schema, a.strict).map_err(|e| CliError::Data(e.to_string()))?;
    if !ex.captures.is_empty() && ex.failures().count() == ex.captures.len() {
        return Err(CliError::Data("no capture could be read".into()));
    }
    let d = &ex.diagnostics;
    info!(
        "{} capture(s), {} packet(s): {} emitted, {} from unknown MACs, {} skipped",
        ex.captures.len(),
        d.packets,
        d.emitted,
        d.unknown_mac,
        d.skipped_total()
    );
    for (reason, n) in &d.skipped {
        info!("  skipped {reason}: {n}");
    }
    write_atomic(&a.out, |w| write_csv(&ex.dataset, w).map_err(|e| e.to_string()))?;
    if let Some(path) = &a.diagnostics {
        let doc = DiagnosticsDoc {
            totals: &ex.diagnostics,
            captures: &ex.captures,
        };
        write_atomic(path, |w| {
            serde_json::to_writer_pretty(&mut *w, &doc).map_err(|e| e.to_string())?;
            w.write_all(b"\n").map_err(|e| e.to_string())
        })?;
    }
    Ok(())
}

fn cmd_rank(a: RankArgs) -> Result<(), CliError> {
    let (ds, _) = load_dataset("--data", &a.data)?;
    let schema = remove_features(ds.schema().clone(), &a.remove)?;
    let ds = ds.project(&schema).map_err(data_err("--data"))?;
    let ranking = rank_features(&ds).map_err(data_err("--data"))?;
    for s in ranking.scores.iter().take(5) {
        info!("{:<32} {:.6}", s.feature, s.gain_ratio);
    }
    write_atomic(&a.out, |w| ranking.write_csv(w).map_err(|e| e.to_string()))
}

fn trainer(a: &TrainArgs) -> Result<Trainer, CliError> {
    let tree_flags = a.no_prune || a.confidence.is_some() || a.min_leaf.is_some() || a.max_depth.is_some();
    match a.classifier {
        ClassifierKind::J48 => {
            if a.stale_limit.is_some() {
                return Err(CliError::Usage("--stale-limit only applies to --classifier dtable".into()));
            }
            let d = TreeParams::default();
            let p = TreeParams {
                min_leaf_weight: a.min_leaf.unwrap_or(d.min_leaf_weight),
                confidence: a.confidence.unwrap_or(d.confidence),
                pruning: !a.no_prune,
                max_depth: a.max_depth,
            };
            p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(Trainer::J48(p))
        }
        ClassifierKind::Dtable => {
            if tree_flags {
                return Err(CliError::Usage(
                    "--no-prune, --confidence, --min-leaf and --max-depth only apply to --classifier j48".into(),
                ));
            }
            let p = SearchParams {
                stale_limit: a.stale_limit.unwrap_or(SearchParams::default().stale_limit),
            };
            if p.stale_limit == 0 {
                return Err(CliError::Usage("--stale-limit must be at least 1".into()));
            }
            Ok(Trainer::Dtable(p))
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let trainer = trainer(&a)?;
    let spec = SplitSpec {
        train_fraction: a.split,
        seed: a.seed,
        stratified: a.stratified,
    };
    if !(a.split > 0.0 && a.split < 1.0) {
        return Err(CliError::Usage(format!("--split must be in (0, 1), got {}", a.split)));
    }
    let (data, digest) = load_dataset("--data", &a.data)?;
    let (train_rows, test_rows) = split_indices(&data, &spec).map_err(data_err("--data"))?;
    let mut train = data.subset(&train_rows);
    info!("split {} rows: {} train, {} held out (seed {})", data.len(), train.len(), test_rows.len(), a.seed);

    let mut selected = None;
    if let Some(k) = a.top_k {
        if k == 0 {
            return Err(CliError::Usage("--top-k must be at least 1".into()));
        }
        let ranking = match &a.ranking {
            Some(path) => Ranking::read_csv(open_input("--ranking", path)?).map_err(data_err("--ranking"))?,
            None => rank_features(&train).map_err(data_err("--data"))?,
        };
        let names = ranking.top_k(k);
        let schema = FeatureSchema::new(
            names
                .iter()
                .map(|n| {
                    train.schema().index_of(n).map(|i| train.schema().features()[i].clone()).ok_or_else(|| {
                        CliError::Data(format!("--ranking: feature `{n}` is not in the dataset"))
                    })
                })
                .collect::<Result<_, _>>()?,
        )
        .map_err(data_err("--ranking"))?;
        train = train.project(&schema).map_err(data_err("--data"))?;
        info!("kept top {} feature(s): {}", names.len(), names.join(", "));
        selected = Some(names);
    }

    let model = trainer.fit(&train).map_err(data_err("training"))?;
    match &model {
        Model::J48(m) => info!("tree: {} nodes, {} leaves", m.node_count(), m.root.leaf_count()),
        Model::Dtable(m) => info!(
            "table: {} entries over [{}], merit {:.4}",
            m.table.len(),
            m.selected_features.join(", "),
            m.merit
        ),
    }
    let training = TrainingInfo {
        dataset: a.name.clone().unwrap_or_else(|| file_stem(&a.data)),
        seed: a.seed,
        train_fraction: a.split,
        stratified: a.stratified,
        train_instances: train.len(),
        data_sha256: digest,
        selected_features: selected,
    };
    let envelope = ModelEnvelope::new(model, Some(training));
    write_atomic(&a.model, |w| save_model(&envelope, w).map_err(|e| e.to_string()))
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let envelope = load_model(open_input("--model", &a.model)?)
        .map_err(|e| CliError::Data(format!("--model {}: {e}", a.model.display())))?;
    let (data, digest) = load_dataset("--data", &a.data)?;
    let clf = envelope.model.as_classifier();

    let rows: Vec<usize> = match (&envelope.training, a.all) {
        (Some(t), false) => {
            if t.data_sha256 != digest {
                warn!("--data differs from the file the model was trained on; held-out rows may not be unseen");
            }
            let spec = SplitSpec {
                train_fraction: t.train_fraction,
                seed: t.seed,
                stratified: t.stratified,
            };
            split_indices(&data, &spec).map_err(data_err("--data"))?.1
        }
        (None, false) => {
            warn!("model carries no split information; evaluating every row");
            (0..data.len()).collect()
        }
        (_, true) => (0..data.len()).collect(),
    };
    let test = data.subset(&rows);
    let schema = FeatureSchema::from_names(clf.schema().iter().map(String::as_str)).map_err(data_err("--model"))?;
    let test = test
        .project(&schema)
        .map_err(|e| CliError::Data(format!("--data does not carry the model's features: {e}")))?;

    let name = a
        .name
        .clone()
        .or_else(|| envelope.training.as_ref().map(|t| t.dataset.clone()))
        .unwrap_or_else(|| file_stem(&a.data));
    let metrics = evaluate(clf, &test, &name).map_err(data_err("evaluation"))?;
    info!(
        "{} on {}: accuracy {:.4} over {} instance(s)",
        metrics.model_kind, name, metrics.accuracy, metrics.instance_count
    );
    write_atomic(&a.report, |w| w.write_all(metrics.to_json().as_bytes()).map_err(|e| e.to_string()))
}

fn cmd_report(a: ReportArgs) -> Result<(), CliError> {
    let format = match (a.format, &a.out) {
        (Some(f), _) => f,
        (None, Some(p)) => match p.extension().and_then(|e| e.to_str()) {
            Some("csv") => ReportFormat::Csv,
            Some("md") | Some("markdown") => ReportFormat::Md,
            _ => {
                return Err(CliError::Usage(format!(
                    "--out {}: cannot infer the format; pass --format md|csv",
                    p.display()
                )))
            }
        },
        (None, None) => ReportFormat::Md,
    };
    let literature = match &a.literature {
        Some(p) => read_literature(open_input("--literature", p)?).map_err(data_err("--literature"))?,
        None => read_literature(LITERATURE_CSV.as_bytes()).map_err(|e| CliError::Internal(e.to_string()))?,
    };
    let cited = match &a.cited {
        Some(p) => read_cited(open_input("--cited", p)?).map_err(data_err("--cited"))?,
        None => read_cited(CITED_CSV.as_bytes()).map_err(|e| CliError::Internal(e.to_string()))?,
    };
    let mut measured = Vec::with_capacity(a.metrics.len());
    for p in &a.metrics {
        let text = String::from_utf8(read_input("--metrics", p)?)
            .map_err(|e| CliError::Data(format!("--metrics {}: {e}", p.display())))?;
        measured.push(Metrics::from_json(&text).map_err(|e| CliError::Data(format!("--metrics {}: {e}", p.display())))?);
    }
    let report = comparison_report(&literature, &measured, &cited).map_err(|e| CliError::Usage(e.to_string()))?;
    let render = |w: &mut dyn Write| -> Result<(), String> {
        match format {
            ReportFormat::Md => w.write_all(report.to_markdown().as_bytes()).map_err(|e| e.to_string()),
            ReportFormat::Csv => report.write_csv(w).map_err(|e| e.to_string()),
        }
    };
    match &a.out {
        Some(p) => write_atomic(p, render),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            render(&mut lock).map_err(CliError::Internal)
        }
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let result = match cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
