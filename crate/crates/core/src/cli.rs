//! Command-line front end: `fetch`, `train`, `benchmark`, `gradcheck` and
//! `surface`.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage error, 3 runtime error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::fetch::{
    default_cache_dir, fetch, fetch_and_load, load_bundled, lookup, Origin,
};
use crate::dataset::{load_csv, Dataset, LabelColumn, StandardizationParams};
use crate::error::Error;
use crate::eval::{
    fit_method, fit_svml_pipeline, render_table, run_benchmark, surface_grid, training_partition,
    BenchmarkConfig, MethodId, TableFormat, Trained, DEFAULT_SEED,
};
use crate::metric::MetricShape;
use crate::svm::{ModelJson, SvmModel};
use crate::svml::stable_check;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// A failed command with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::Json(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "svmllab",
    version,
    about = "Metric learning for RBF-kernel SVMs"
)]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download or unpack datasets into the cache and print their paths.
    Fetch(FetchArgs),
    /// Fit one method on a whole dataset and write the model.
    Train(TrainArgs),
    /// Run the repeated-split benchmark and print the result table.
    Benchmark(BenchmarkArgs),
    /// Compare analytic and finite-difference gradients on random problems.
    Gradcheck(GradcheckArgs),
    /// Export the decision surface of a rect:2 model.
    Surface(SurfaceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Configured dataset id or path to a CSV file.
    #[arg(long)]
    pub dataset: String,
    /// Label column of a CSV file: a header name, a 0-based index or `last`.
    #[arg(long, default_value = "last")]
    pub label_column: String,
    /// Label value mapped to +1 in a CSV file.
    #[arg(long, default_value = "1")]
    pub positive_label: String,
    /// Cache directory (default: $SVMLLAB_CACHE or ~/.cache/svmllab).
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    #[arg(required = true)]
    pub ids: Vec<String>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "svml")]
    pub method: MethodId,
    /// Metric shape for SVML methods (full, diag, sphere, rect:<r>).
    #[arg(long)]
    pub shape: Option<MetricShape>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Model JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// SVML trace CSV (default: `<out>.trace.csv`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// JSON file with benchmark configuration keys (grid, svml, itml, nca, lmnn, solver, knn_k).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Sigmoid steepness for SVML.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Benchmark configuration JSON; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated dataset ids or CSV paths.
    #[arg(long, value_delimiter = ',')]
    pub datasets: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<MethodId>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Append completed cells here and skip those already present.
    #[arg(long)]
    pub journal: Option<PathBuf>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = "markdown")]
    pub format: TableFormat,
    /// Table output (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// One shape, or every shape when omitted.
    #[arg(long)]
    pub shape: Option<MetricShape>,
    #[arg(long, default_value_t = 5.0)]
    pub a: f64,
    /// Differentiate with respect to log C as well.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub learn_c: bool,
    /// Flip the sign of the indirect gradient path (negative control).
    #[arg(long)]
    pub corrupt: bool,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub resolution: usize,
    /// Grid CSV (`u,v,h`).
    #[arg(long)]
    pub out: PathBuf,
    /// Support-vector CSV (default: `<out>.sv.csv`).
    #[arg(long)]
    pub support_out: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

/// Where a model's training rows came from, stored in the model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: MethodId,
    pub dataset: String,
    pub label_column: String,
    pub positive_label: String,
    pub standardization: StandardizationParams,
    pub seed: u64,
    pub details: serde_json::Value,
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let mut stdout = std::io::stdout().lock();
    match execute(&cli.command, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, 2) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("RUST_LOG")
        .format_timestamp(None)
        .try_init();
}

/// Run a parsed command, writing its report to `out`.
pub fn execute(command: &Command, out: &mut dyn Write) -> CliResult<i32> {
    match command {
        Command::Fetch(a) => cmd_fetch(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Benchmark(a) => cmd_benchmark(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
        Command::Surface(a) => cmd_surface(a, out),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError {
        code: EXIT_RUNTIME,
        message: format!("{}: {e}", path.display()),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    writeln!(out, "{text}").map_err(io_err(Path::new("stdout")))
}

fn cache_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(default_cache_dir)
}

/// Load a configured id (bundled or fetched) or a CSV path.
pub fn load_dataset(
    source: &str,
    label_column: &str,
    positive_label: &str,
    cache: &Path,
) -> CliResult<Dataset> {
    if let Some(bench) = lookup(source) {
        let loaded = match bench.origin {
            Origin::Bundled(_) => load_bundled(source)?,
            Origin::Url(_) => fetch_and_load(source, cache)?,
        };
        return Ok(loaded.dataset);
    }
    let path = Path::new(source);
    if !path.is_file() {
        return Err(CliError::usage(format!(
            "{source:?} is neither a dataset id nor a file"
        )));
    }
    let label = match label_column.parse::<LabelColumn>() {
        Ok(l) => l,
        Err(never) => match never {},
    };
    let loaded = load_csv(path, &label, positive_label)?;
    if loaded.dropped_rows > 0 {
        log::warn!("{source}: dropped {} incomplete rows", loaded.dropped_rows);
    }
    Ok(loaded.dataset)
}

/// SHA-256 over the little-endian bytes of the feature rows and labels.
pub fn dataset_digest(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for v in ds.features().as_slice().iter().chain(ds.labels()) {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn read_bench_config(path: &Option<PathBuf>) -> CliResult<BenchmarkConfig> {
    match path {
        None => Ok(BenchmarkConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_fetch(args: &FetchArgs, out: &mut dyn Write) -> CliResult<i32> {
    let cache = cache_dir(&args.cache);
    for id in &args.ids {
        if lookup(id).is_none() && !id.contains("://") {
            return Err(CliError::usage(format!("unknown dataset id {id:?}")));
        }
    }
    let mut report = Vec::new();
    for id in &args.ids {
        let f = fetch(id, &cache)?;
        match args.format {
            OutputFormat::Text => {
                let note = if f.cached { " (cached)" } else { "" };
                emit(out, &format!("{}\t{}{note}", f.source_id, f.path.display()))?;
            }
            OutputFormat::Json => report.push(serde_json::json!({
                "id": f.source_id,
                "path": f.path,
                "cached": f.cached,
            })),
        }
    }
    if args.format == OutputFormat::Json {
        emit(out, &serde_json::Value::Array(report).to_string())?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> CliResult<i32> {
    let mut bench = read_bench_config(&args.config)?;
    if let Some(f) = args.folds {
        bench.grid.folds = f;
    }
    if let Some(a) = args.a {
        bench.svml.steepness_a = a;
    }
    if args.lambda.is_some() {
        bench.svml.lambda = args.lambda;
    }
    bench.base_seed = args.seed;
    bench.validate()?;

    let svml_shape = match args.method {
        MethodId::Svml => Some(MetricShape::Full),
        MethodId::SvmlDiag => Some(MetricShape::Diagonal),
        MethodId::SvmlSphere => Some(MetricShape::Spherical),
        _ => None,
    };
    if args.shape.is_some() && svml_shape.is_none() {
        return Err(CliError::usage(format!(
            "--shape applies to SVML methods, not {}",
            args.method
        )));
    }

    let d = &args.data;
    let raw = load_dataset(
        &d.dataset,
        &d.label_column,
        &d.positive_label,
        &cache_dir(&d.cache),
    )?;
    let scaling = StandardizationParams::fit(&raw)?;
    let data = scaling.apply(&raw)?;
    let part = training_partition(&data, args.seed)?;
    let trained = match svml_shape {
        Some(default) => {
            let shape = args.shape.unwrap_or(default);
            shape.validate(data.dim())?;
            fit_svml_pipeline(&data, &part, &bench, shape)
        }
        None => fit_method(args.method, &data, &part, &bench, args.seed),
    }
    .map_err(|e| CliError {
        code: EXIT_RUNTIME,
        message: format!("fit failed ({} on {}): {e}", args.method, d.dataset),
    })?;

    let provenance = Provenance {
        method: args.method,
        dataset: d.dataset.clone(),
        label_column: d.label_column.clone(),
        positive_label: d.positive_label.clone(),
        standardization: scaling,
        seed: args.seed,
        details: trained.details(),
    };
    let mut summary = serde_json::json!({
        "method": args.method,
        "dataset": d.dataset,
        "model": args.out,
        "details": trained.details(),
    });
    match &trained {
        Trained::Svm { model, trace, .. } => {
            let mut json = model.to_json(&dataset_digest(model.train()));
            json.extra = Some(serde_json::to_value(&provenance).map_err(Error::from)?);
            write_file(
                &args.out,
                &serde_json::to_vec_pretty(&json).map_err(Error::from)?,
            )?;
            summary["train_error"] = model.error_rate(model.train())?.into();
            summary["shape"] = model.metric().shape().to_string().into();
            if let Some(trace) = trace {
                let path = args
                    .trace
                    .clone()
                    .unwrap_or_else(|| with_suffix(&args.out, ".trace.csv"));
                let mut buf = Vec::new();
                trace.write_csv(&mut buf)?;
                write_file(&path, &buf)?;
                summary["trace"] = serde_json::to_value(&path).map_err(Error::from)?;
                summary["best_iteration"] = trace.best_iteration.into();
            }
        }
        Trained::Knn { metric, k, .. } => {
            let json = serde_json::json!({ "metric": metric, "k": k, "extra": provenance });
            write_file(
                &args.out,
                &serde_json::to_vec_pretty(&json).map_err(Error::from)?,
            )?;
        }
    }
    match args.format {
        OutputFormat::Json => emit(out, &summary.to_string())?,
        OutputFormat::Text => {
            emit(
                out,
                &format!(
                    "{} on {}: wrote {}",
                    args.method,
                    d.dataset,
                    args.out.display()
                ),
            )?;
            emit(out, &format!("details: {}", trained.details()))?;
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_benchmark(args: &BenchmarkArgs, out: &mut dyn Write) -> CliResult<i32> {
    let mut bench = read_bench_config(&args.config)?;
    if !args.datasets.is_empty() {
        bench.datasets = args.datasets.clone();
    }
    if !args.methods.is_empty() {
        bench.methods = args.methods.clone();
    }
    if args.repeats.is_some() {
        bench.repeats = args.repeats;
    }
    if let Some(s) = args.seed {
        bench.base_seed = s;
    }
    if let Some(f) = args.folds {
        bench.grid.folds = f;
    }
    if bench.datasets.is_empty() {
        return Err(CliError::usage("no datasets given"));
    }
    bench.validate()?;
    let cache = cache_dir(&args.cache);
    let mut loaded = Vec::new();
    for id in &bench.datasets {
        loaded.push((id.clone(), load_dataset(id, "last", "1", &cache)?));
    }
    let jobs = args.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let load = |id: &str| -> crate::Result<Dataset> {
        loaded
            .iter()
            .find(|(k, _)| k == id)
            .map(|(_, d)| d.clone())
            .ok_or_else(|| Error::Data(format!("dataset {id} not loaded")))
    };
    let rows = run_benchmark(&bench, load, args.journal.as_deref(), jobs)?;
    let table = render_table(&rows, args.format);
    match &args.out {
        Some(p) => write_file(p, table.as_bytes())?,
        None => out
            .write_all(table.as_bytes())
            .map_err(io_err(Path::new("stdout")))?,
    }
    Ok(EXIT_OK)
}

pub fn cmd_gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> CliResult<i32> {
    let shapes = match args.shape {
        Some(s) => vec![s],
        None => vec![
            MetricShape::Full,
            MetricShape::Diagonal,
            MetricShape::Spherical,
            MetricShape::Rectangular(2),
        ],
    };
    let mut failed = false;
    let mut report = Vec::new();
    for shape in shapes {
        let (_, r) = stable_check(args.seed, shape, args.a, args.learn_c, args.corrupt)?;
        let pass = r.passes(args.tolerance);
        failed |= !pass;
        match args.format {
            OutputFormat::Text => emit(
                out,
                &format!(
                    "{} shape={shape} a={} learn_c={} max_rel_error={:.3e}",
                    if pass { "PASS" } else { "FAIL" },
                    args.a,
                    args.learn_c,
                    r.max_rel_error
                ),
            )?,
            OutputFormat::Json => report.push(serde_json::json!({
                "shape": shape,
                "a": args.a,
                "learn_c": args.learn_c,
                "max_rel_error": r.max_rel_error,
                "pass": pass,
            })),
        }
    }
    if args.format == OutputFormat::Json {
        emit(out, &serde_json::Value::Array(report).to_string())?;
    }
    Ok(if failed { EXIT_CHECK_FAILED } else { EXIT_OK })
}

/// Rebuild a model written by `train`, reloading its training rows.
pub fn load_model(path: &Path, cache: &Path) -> CliResult<(SvmModel, Provenance)> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let json: ModelJson = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let prov: Provenance = json
        .extra
        .clone()
        .ok_or_else(|| CliError::usage(format!("{}: no training provenance", path.display())))
        .and_then(|v| serde_json::from_value(v).map_err(|e| CliError::usage(e.to_string())))?;
    let raw = load_dataset(
        &prov.dataset,
        &prov.label_column,
        &prov.positive_label,
        cache,
    )?;
    let train = prov.standardization.apply(&raw)?;
    let digest = dataset_digest(&train);
    if digest != json.train_digest {
        return Err(CliError {
            code: EXIT_RUNTIME,
            message: format!(
                "training rows of {} changed (digest {digest})",
                prov.dataset
            ),
        });
    }
    Ok((SvmModel::from_json(&json, Arc::new(train))?, prov))
}

pub fn cmd_surface(args: &SurfaceArgs, out: &mut dyn Write) -> CliResult<i32> {
    let (model, _) = load_model(&args.model, &cache_dir(&args.cache))?;
    if model.metric().shape() != MetricShape::Rectangular(2) {
        return Err(CliError::usage(format!(
            "surface export needs a rect:2 model, got {}",
            model.metric().shape()
        )));
    }
    if args.resolution < 2 {
        return Err(CliError::usage("resolution must be at least 2"));
    }
    let grid = surface_grid(&model, args.resolution)?;
    let support = args
        .support_out
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, ".sv.csv"));
    grid.write_csv(&args.out, &support)?;
    emit(
        out,
        &format!(
            "wrote {} ({} cells) and {} ({} support vectors)",
            args.out.display(),
            grid.cells.len(),
            support.display(),
            grid.support.len()
        ),
    )?;
    Ok(EXIT_OK)
}
