//! `fairaudit` command-line driver.
//!
//! Exit codes: 0 on success, 2 for usage and validation errors, 3 for
//! runtime and data errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairaudit::agreement::{krippendorff_alpha, AnnotationTable};
use fairaudit::csvio::{read_csv, write_csv};
use fairaudit::metrics::{audit_labels, FairnessReport, Measure};
use fairaudit::pipeline::{self, RunConfig, RunManifest, Stage, DEFAULT_EMBED_DIM, SCHEMA_VERSION};
use fairaudit::repair::{fit_quantiles, repair, RepairConfig};
use fairaudit::{generate, BiasScenario, Error, TabularDataset, TrainConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "fairaudit", version, about = "Fairness audit and bias mitigation for rating data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a scenario config
    Simulate(SimulateArgs),
    /// Disparate impact of every label against one protected attribute
    Audit(AuditArgs),
    /// Train per-label models under one mitigation stage and evaluate
    Run(RunArgs),
    /// Run the baseline and all three mitigation stages on one split
    Compare(CompareArgs),
    /// Write a dataset with repaired features
    Repair(RepairArgs),
    /// Krippendorff's alpha of a nominal annotation table
    Alpha(AlphaArgs),
}

#[derive(Args, Serialize)]
struct Common {
    /// Leave the timestamp out of the manifest
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Scenario file of `key = value` lines
    #[arg(long)]
    config: PathBuf,
    /// Output CSV (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct GroupArgs {
    /// Input CSV
    #[arg(long)]
    data: PathBuf,
    /// Protected attribute column
    #[arg(long)]
    protected: String,
    /// Privileged category (defaults to the first known category)
    #[arg(long)]
    privileged: Option<String>,
    /// Comma-separated subset of labels
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    /// Labels rolled up as positive
    #[arg(long, value_delimiter = ',')]
    positive: Vec<String>,
    /// Labels rolled up as negative
    #[arg(long, value_delimiter = ',')]
    negative: Vec<String>,
}

#[derive(Args, Serialize)]
struct AuditArgs {
    #[command(flatten)]
    group: GroupArgs,
    /// Output JSON report (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plot-data CSV (defaults to the report path with a `.plot.csv` suffix)
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct ModelArgs {
    #[command(flatten)]
    group: GroupArgs,
    /// Test fraction of the seeded split
    #[arg(long, default_value_t = 0.2)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent weights per protected group in the baseline
    #[arg(long)]
    group_weights: bool,
    /// Feed one-hot protected attributes to the classifier
    #[arg(long)]
    include_protected: bool,
    /// Transcript embedding width (power of two)
    #[arg(long, default_value_t = DEFAULT_EMBED_DIM)]
    embed_dim: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().max_iters)]
    max_iters: usize,
    #[arg(long, default_value_t = TrainConfig::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = TrainConfig::default().l2)]
    l2: f64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum StageArg {
    None,
    Pre,
    In,
    Post,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::None => Stage::None,
            StageArg::Pre => Stage::Pre,
            StageArg::In => Stage::In,
            StageArg::Post => Stage::Post,
        }
    }
}

#[derive(Args, Serialize)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "none")]
    stage: StageArg,
    /// Repair level in [0, 1] (pre stage only)
    #[arg(long)]
    repair_level: Option<f64>,
    /// Prejudice index weight (in stage only)
    #[arg(long)]
    eta: Option<f64>,
    /// Output JSON report (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the mitigated models as JSON
    #[arg(long)]
    models_out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    repair_level: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Output JSON report (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stage table CSV (defaults to the report path with a `.table.csv` suffix)
    #[arg(long)]
    table: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct RepairArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    protected: String,
    #[arg(long, default_value_t = 1.0)]
    repair_level: f64,
    /// Comma-separated features to repair (all when absent)
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Output CSV (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct AlphaArgs {
    /// CSV with an item column followed by one column per rater; empty cells are missing
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Reads an input file, recording its digest in the manifest.
fn read_input(path: &Path, manifest: &mut RunManifest) -> CliResult<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    manifest
        .inputs
        .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
    Ok(bytes)
}

fn read_dataset(path: &Path, manifest: &mut RunManifest) -> CliResult<TabularDataset> {
    let bytes = read_input(path, manifest)?;
    Ok(read_csv(bytes.as_slice())?)
}

fn manifest_for<A: Serialize>(command: &str, args: &A, common: &Common, seed: Option<u64>) -> CliResult<RunManifest> {
    let mut m = RunManifest::new(command);
    let mut flags = BTreeMap::new();
    flatten_flags(&serde_json::to_value(args)?, &mut flags);
    m.flags = flags;
    m.seed = seed;
    if !common.no_timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        m.timestamp = Some(secs.to_string());
    }
    Ok(m)
}

fn flatten_flags(v: &serde_json::Value, out: &mut BTreeMap<String, String>) {
    use serde_json::Value;
    let Value::Object(map) = v else { return };
    for (k, v) in map {
        let key = k.replace('_', "-");
        match v {
            Value::Object(_) => flatten_flags(v, out),
            Value::Null => {}
            Value::String(s) => {
                out.insert(key, s.clone());
            }
            Value::Array(items) => {
                let parts: Vec<String> = items
                    .iter()
                    .map(|i| i.as_str().map_or_else(|| i.to_string(), str::to_string))
                    .collect();
                out.insert(key, parts.join(","));
            }
            other => {
                out.insert(key, other.to_string());
            }
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => stdout(text.as_bytes())?,
    }
    Ok(())
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn stdout(bytes: &[u8]) -> CliResult<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(bytes) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// `report.json` -> `report.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut manifest = manifest_for("simulate", args, &args.common, args.seed)?;
    let text = String::from_utf8(read_input(&args.config, &mut manifest)?)
        .map_err(|_| CliError::Usage("scenario config is not UTF-8".into()))?;
    let mut scenario = BiasScenario::from_config_str(&text)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let ds = generate(&scenario)?;
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf, &[])?;
    match &args.out {
        Some(p) => fs::write(p, buf)?,
        None => stdout(&buf)?,
    }
    Ok(())
}

/// Applies `--privileged` and fills in labels from raw ratings when needed.
fn grouped_dataset(ds: TabularDataset, g: &GroupArgs) -> CliResult<TabularDataset> {
    let ds = match &g.privileged {
        Some(p) => {
            let spec = ds.protected(&g.protected)?.spec().reprivileged(p)?;
            ds.with_group_spec(spec)?
        }
        None => {
            ds.protected(&g.protected)?;
            ds
        }
    };
    for name in g.positive.iter().chain(&g.negative) {
        ds.label_index(name)?;
    }
    Ok(ds)
}

#[derive(Serialize)]
struct AuditRollupEntry {
    labels: Vec<String>,
    mean_summary_di: Measure,
}

#[derive(Serialize)]
struct AuditRollup {
    positive: AuditRollupEntry,
    negative: AuditRollupEntry,
}

#[derive(Serialize)]
struct AuditReport {
    schema_version: u32,
    manifest: RunManifest,
    #[serde(flatten)]
    report: FairnessReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    rollup: Option<AuditRollup>,
}

fn audit_rollup(report: &FairnessReport, labels: &[String]) -> AuditRollupEntry {
    let values: Vec<f64> = report
        .labels
        .iter()
        .filter(|l| labels.contains(&l.label))
        .filter_map(|l| l.fairness.summary())
        .collect();
    AuditRollupEntry {
        labels: labels.to_vec(),
        mean_summary_di: if values.is_empty() {
            Measure::undefined("no defined label in group")
        } else {
            Measure::Value(values.iter().sum::<f64>() / values.len() as f64)
        },
    }
}

fn audit(args: &AuditArgs) -> CliResult<()> {
    let mut manifest = manifest_for("audit", args, &args.common, None)?;
    let g = &args.group;
    let raw = read_dataset(&g.data, &mut manifest)?;
    let ds = grouped_dataset(pipeline::prepare(&raw, DEFAULT_EMBED_DIM, false)?, g)?;
    let indices: Vec<usize> = match &g.labels {
        Some(names) => names.iter().map(|n| ds.label_index(n)).collect::<Result<_, _>>()?,
        None => (0..ds.label_names().len()).collect(),
    };
    let spec = ds.protected(&g.protected)?.spec().clone();
    let report = audit_labels(&ds, &spec, &indices)?;

    let mut plot = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    plot.write_record(["label", "group_pair", "disparate_impact"])?;
    for (label, pair, di) in report.plot_rows() {
        plot.write_record([label, pair, di])?;
    }
    let plot = plot.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;

    let rollup = (!g.positive.is_empty() || !g.negative.is_empty()).then(|| AuditRollup {
        positive: audit_rollup(&report, &g.positive),
        negative: audit_rollup(&report, &g.negative),
    });
    let out = AuditReport {
        schema_version: SCHEMA_VERSION,
        manifest,
        report,
        rollup,
    };
    write_output(args.out.as_deref(), &to_json(&out)?)?;
    let plot_path = match (&args.plot, &args.out) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(o)) => Some(sibling(o, "plot.csv")),
        (None, None) => None,
    };
    if let Some(p) = plot_path {
        fs::write(p, plot)?;
    }
    Ok(())
}

fn run_config(m: &ModelArgs, stage: Stage, repair_level: Option<f64>, eta: Option<f64>) -> RunConfig {
    let g = &m.group;
    let mut cfg = RunConfig::new(g.protected.clone(), stage);
    cfg.privileged = g.privileged.clone();
    cfg.repair_level = repair_level;
    cfg.eta = eta;
    cfg.test_fraction = m.split;
    cfg.seed = m.seed;
    cfg.group_weights = m.group_weights;
    cfg.include_protected = m.include_protected;
    cfg.labels = g.labels.clone();
    cfg.embed_dim = m.embed_dim;
    cfg.train = TrainConfig {
        learning_rate: m.learning_rate,
        max_iters: m.max_iters,
        tol: m.tol,
        l2: m.l2,
        init_seed: None,
    };
    cfg.positive = g.positive.clone();
    cfg.negative = g.negative.clone();
    cfg
}

fn run(args: &RunArgs) -> CliResult<()> {
    let cfg = run_config(&args.model, args.stage.into(), args.repair_level, args.eta);
    cfg.validate()?;
    let mut manifest = manifest_for("run", args, &args.common, Some(args.model.seed))?;
    let ds = read_dataset(&args.model.group.data, &mut manifest)?;
    let out = pipeline::run(&ds, &cfg, manifest)?;
    write_output(args.out.as_deref(), &to_json(&out.report)?)?;
    if let Some(p) = &args.models_out {
        fs::write(p, to_json(&out.mitigated_models)?)?;
    }
    Ok(())
}

fn compare(args: &CompareArgs) -> CliResult<()> {
    let mut cfg = run_config(&args.model, Stage::None, None, None);
    cfg.validate()?;
    RunConfig { stage: Stage::Pre, repair_level: args.repair_level, ..cfg.clone() }.validate()?;
    RunConfig { stage: Stage::In, eta: args.eta, ..cfg.clone() }.validate()?;
    cfg.repair_level = args.repair_level;
    cfg.eta = args.eta;
    let mut manifest = manifest_for("compare", args, &args.common, Some(args.model.seed))?;
    let ds = read_dataset(&args.model.group.data, &mut manifest)?;
    let report = pipeline::compare(&ds, &cfg, manifest)?;
    write_output(args.out.as_deref(), &to_json(&report)?)?;
    let table = match (&args.table, &args.out) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(o)) => Some(sibling(o, "table.csv")),
        (None, None) => None,
    };
    if let Some(p) = table {
        fs::write(p, report.table_csv())?;
    }
    Ok(())
}

fn repair_cmd(args: &RepairArgs) -> CliResult<()> {
    let mut manifest = manifest_for("repair", args, &args.common, None)?;
    let ds = read_dataset(&args.data, &mut manifest)?;
    let mut cfg = RepairConfig::new(args.repair_level, args.protected.clone())?;
    if let Some(f) = &args.features {
        cfg = cfg.with_features(f.clone());
    }
    let table = fit_quantiles(&ds, &cfg)?;
    let repaired = repair(&ds, &table, &cfg)?;
    let features = match &args.features {
        Some(f) => f.join(";"),
        None => "all".into(),
    };
    let mut comments = vec![
        format!("repaired by fairaudit {}", manifest.version),
        format!("protected={} repair_level={} features={features}", args.protected, args.repair_level),
    ];
    for (path, digest) in &manifest.inputs {
        comments.push(format!("input {path} sha256={digest}"));
    }
    if let Some(t) = &manifest.timestamp {
        comments.push(format!("timestamp={t}"));
    }
    let mut buf = Vec::new();
    write_csv(&repaired, &mut buf, &comments)?;
    match &args.out {
        Some(p) => fs::write(p, buf)?,
        None => stdout(&buf)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct AlphaReport {
    schema_version: u32,
    manifest: RunManifest,
    n_items: usize,
    n_raters: usize,
    alpha: f64,
}

fn alpha(args: &AlphaArgs) -> CliResult<()> {
    let mut manifest = manifest_for("alpha", args, &args.common, None)?;
    let bytes = read_input(&args.data, &mut manifest)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes.as_slice());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(
            rec.iter()
                .skip(1)
                .map(|c| {
                    let c = c.trim();
                    (!c.is_empty()).then(|| c.to_string())
                })
                .collect(),
        );
    }
    let table = AnnotationTable::new(rows)?;
    let report = AlphaReport {
        schema_version: SCHEMA_VERSION,
        manifest,
        n_items: table.n_items(),
        n_raters: table.n_raters(),
        alpha: krippendorff_alpha(&table),
    };
    write_output(args.out.as_deref(), &to_json(&report)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Audit(a) => audit(a),
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Repair(a) => repair_cmd(a),
        Command::Alpha(a) => alpha(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
