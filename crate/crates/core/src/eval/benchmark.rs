//! Repeated random-split benchmarking of SVMs under learned metrics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cv::{cv_select, GridConfig};
use crate::baselines::{itml_fit, knn_error, lmnn_fit, nca_fit, ItmlConfig, LmnnConfig, NcaConfig};
use crate::dataset::{split, split_labels, Dataset, Partition, SplitPlan, StandardizationParams};
use crate::error::{Error, Result};
use crate::metric::{covariance, InitScale, LinearMetric, MetricShape};
use crate::svm::{SolverOptions, SvmModel};
use crate::svml::{fit_svml, SvmlConfig, SvmlTrace};

/// Default base seed of every published run.
pub const DEFAULT_SEED: u64 = 20110101;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodId {
    EuclidCv,
    ItmlSvm,
    NcaSvm,
    LmnnSvm,
    Svml,
    SvmlDiag,
    SvmlSphere,
    Knn,
    KnnItml,
    KnnNca,
    KnnLmnn,
}

impl MethodId {
    pub const ALL: [MethodId; 11] = [
        MethodId::EuclidCv,
        MethodId::ItmlSvm,
        MethodId::NcaSvm,
        MethodId::LmnnSvm,
        MethodId::Svml,
        MethodId::SvmlDiag,
        MethodId::SvmlSphere,
        MethodId::Knn,
        MethodId::KnnItml,
        MethodId::KnnNca,
        MethodId::KnnLmnn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MethodId::EuclidCv => "euclid-cv",
            MethodId::ItmlSvm => "itml+svm",
            MethodId::NcaSvm => "nca+svm",
            MethodId::LmnnSvm => "lmnn+svm",
            MethodId::Svml => "svml",
            MethodId::SvmlDiag => "svml-diag",
            MethodId::SvmlSphere => "svml-sphere",
            MethodId::Knn => "knn",
            MethodId::KnnItml => "knn-itml",
            MethodId::KnnNca => "knn-nca",
            MethodId::KnnLmnn => "knn-lmnn",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

impl Serialize for MethodId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for MethodId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub datasets: Vec<String>,
    pub methods: Vec<MethodId>,
    /// Fixed repeat count; by default 200 below 1000 examples, 20 below 10000, else 1.
    pub repeats: Option<usize>,
    pub base_seed: u64,
    pub grid: GridConfig,
    pub knn_k: usize,
    /// Fit the standardization on each training split instead of the whole set.
    pub standardize_on_train: bool,
    pub svml: SvmlConfig,
    pub nca: NcaConfig,
    pub itml: ItmlConfig,
    pub lmnn: LmnnConfig,
    pub solver: SolverOptions,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            datasets: Vec::new(),
            methods: vec![MethodId::EuclidCv, MethodId::Svml],
            repeats: None,
            base_seed: DEFAULT_SEED,
            grid: GridConfig::default(),
            knn_k: 3,
            standardize_on_train: false,
            svml: SvmlConfig::default(),
            nca: NcaConfig::default(),
            itml: ItmlConfig::default(),
            lmnn: LmnnConfig::default(),
            solver: SolverOptions::default(),
        }
    }
}

/// Repeat tier for a dataset of `n` examples.
pub fn repeats_for(n: usize) -> usize {
    if n < 1000 {
        200
    } else if n < 10_000 {
        20
    } else {
        1
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == Some(0) {
            return Err(Error::InvalidArgument("repeats must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods selected".into()));
        }
        if self.knn_k == 0 {
            return Err(Error::InvalidArgument("knn_k must be positive".into()));
        }
        self.grid.validate()?;
        self.svml.validate()
    }

    pub fn repeats_for(&self, n: usize) -> usize {
        self.repeats.unwrap_or_else(|| repeats_for(n))
    }

    /// Digest of everything that affects results except the dataset and
    /// method lists (so a journal can be extended with new cells).
    pub fn digest(&self) -> String {
        let mut s = self.clone();
        s.datasets.clear();
        s.methods.clear();
        s.repeats = None;
        let json = serde_json::to_vec(&s).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    /// Seed of repeat `r`; shared by all methods so splits are paired.
    pub fn repeat_seed(&self, r: usize) -> u64 {
        self.base_seed.wrapping_add(r as u64)
    }
}

/// Outcome of one method on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub error: f64,
    pub fit_seconds: f64,
    /// Selected hyperparameters and other method-specific facts.
    pub details: serde_json::Value,
}

/// One line of the journal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub config_digest: String,
    pub dataset: String,
    pub method: MethodId,
    pub repeat: usize,
    pub seed: u64,
    pub error_pct: Option<f64>,
    pub fit_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default)]
    pub details: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: String,
    pub mean_error_pct: f64,
    pub std_error_pct: f64,
    pub mean_fit_seconds: f64,
    pub repeats: usize,
    #[serde(default)]
    pub failures: usize,
}

/// The 80/20 split of repeat seed `seed`, with the training part split again
/// 50/50 and the second half 50/50 (SVML's T, V and hold-out).
pub fn benchmark_partition(data: &Dataset, seed: u64) -> Result<Partition> {
    split(data, &SplitPlan::new(seed, 0.8).with_nested(&[0.5, 0.5]))
}

/// Rescale `metric` so that its mean squared pairwise distance on `x`
/// equals that of `I/√d`, the reference point of the width grid.
pub fn normalize_to_grid(metric: &LinearMetric, train: &Dataset) -> Result<LinearMetric> {
    let c = covariance(train.features());
    let l = metric.to_matrix();
    let lcl = l.matmul(&c)?.matmul(&l.transpose())?;
    let tr_l: f64 = (0..lcl.rows()).map(|i| lcl[(i, i)]).sum();
    let tr_c: f64 = (0..c.rows()).map(|i| c[(i, i)]).sum();
    let d = train.dim() as f64;
    if !(tr_l > 0.0) || !(tr_c > 0.0) {
        return Err(Error::Data("degenerate metric or constant features".into()));
    }
    Ok(metric.scaled((tr_c / (d * tr_l)).sqrt()))
}

fn learned_metric(
    method: MethodId,
    train: &Dataset,
    bench: &BenchmarkConfig,
    seed: u64,
) -> Result<Option<LinearMetric>> {
    let d = train.dim();
    Ok(match method {
        MethodId::ItmlSvm | MethodId::KnnItml => {
            let cfg = ItmlConfig {
                seed,
                ..bench.itml.clone()
            };
            Some(itml_fit(train, &cfg)?.metric)
        }
        MethodId::NcaSvm | MethodId::KnnNca => {
            let init = LinearMetric::init_default(MetricShape::Full, d, None, InitScale::InvSqrtD)?;
            Some(nca_fit(train, &init, &bench.nca)?)
        }
        MethodId::LmnnSvm | MethodId::KnnLmnn => Some(lmnn_fit(train, &bench.lmnn)?.metric),
        _ => None,
    })
}

/// A fitted pipeline: an SVM, or a kNN rule under a metric.
#[derive(Clone, Debug)]
pub enum Trained {
    Svm {
        model: SvmModel,
        trace: Option<SvmlTrace>,
        details: serde_json::Value,
    },
    Knn {
        train: Dataset,
        metric: LinearMetric,
        k: usize,
    },
}

impl Trained {
    /// Fraction of `eval` misclassified.
    pub fn error_rate(&self, eval: &Dataset) -> Result<f64> {
        match self {
            Trained::Svm { model, .. } => model.error_rate(eval),
            Trained::Knn { train, metric, k } => knn_error(train, metric, *k, eval),
        }
    }

    pub fn details(&self) -> serde_json::Value {
        match self {
            Trained::Svm { details, .. } => details.clone(),
            Trained::Knn { k, .. } => serde_json::json!({ "k": k }),
        }
    }
}

/// Fit `method` on the training rows of `part` (and, for SVML, its nested
/// T/V/hold-out parts). The test rows are never read.
pub fn fit_method(
    method: MethodId,
    data: &Dataset,
    part: &Partition,
    bench: &BenchmarkConfig,
    seed: u64,
) -> Result<Trained> {
    let train = data.subset(&part.train);
    let d = data.dim();
    Ok(match method {
        MethodId::EuclidCv | MethodId::ItmlSvm | MethodId::NcaSvm | MethodId::LmnnSvm => {
            let base = match learned_metric(method, &train, bench, seed)? {
                Some(m) => normalize_to_grid(&m, &train)?,
                None => LinearMetric::init_default(
                    MetricShape::Spherical,
                    d,
                    None,
                    InitScale::InvSqrtD,
                )?,
            };
            let sel = cv_select(&train, &base, &bench.grid, seed, &bench.solver)?;
            log::info!(
                "{method}: sigma^2 {} C {} (cv error {:.4})",
                sel.sigma_sq,
                sel.c,
                sel.cv_error
            );
            let model = SvmModel::fit(Arc::new(train), &sel.metric, sel.c, &bench.solver)?;
            let details = serde_json::json!({
                "sigma_sq": sel.sigma_sq,
                "C": sel.c,
                "cv_error": sel.cv_error,
                "support": model.support_idx().len(),
            });
            Trained::Svm {
                model,
                trace: None,
                details,
            }
        }
        MethodId::Svml | MethodId::SvmlDiag | MethodId::SvmlSphere => {
            let shape = match method {
                MethodId::Svml => MetricShape::Full,
                MethodId::SvmlDiag => MetricShape::Diagonal,
                _ => MetricShape::Spherical,
            };
            fit_svml_pipeline(data, part, bench, shape)?
        }
        MethodId::Knn | MethodId::KnnItml | MethodId::KnnNca | MethodId::KnnLmnn => {
            let metric = match learned_metric(method, &train, bench, seed)? {
                Some(m) => m,
                None => LinearMetric::identity(d)?,
            };
            Trained::Knn {
                train,
                metric,
                k: bench.knn_k,
            }
        }
    })
}

/// SVML with `shape` (overriding the configured one) on the nested parts of
/// `part`, then an SVM with the learned `(L, C)` refit on all training rows.
pub fn fit_svml_pipeline(
    data: &Dataset,
    part: &Partition,
    bench: &BenchmarkConfig,
    shape: MetricShape,
) -> Result<Trained> {
    if part.nested.len() != 3 {
        return Err(Error::InvalidArgument(
            "SVML needs a T/V/hold-out partition".into(),
        ));
    }
    let cfg = SvmlConfig {
        shape,
        ..bench.svml.clone()
    };
    let t = Arc::new(data.subset(&part.nested[0]));
    let v = data.subset(&part.nested[1]);
    let h = data.subset(&part.nested[2]);
    let fit = fit_svml(t, &v, &h, &cfg)?;
    let model = SvmModel::fit(
        Arc::new(data.subset(&part.train)),
        &fit.metric,
        fit.c,
        &bench.solver,
    )?;
    let details = serde_json::json!({
        "C": fit.c,
        "iterations": fit.trace.rows.len(),
        "best_iteration": fit.trace.best_iteration,
        "support": model.support_idx().len(),
    });
    Ok(Trained::Svm {
        model,
        trace: Some(fit.trace),
        details,
    })
}

/// Run `method` on one partition of an already standardized dataset.
pub fn run_cell(
    method: MethodId,
    data: &Dataset,
    part: &Partition,
    bench: &BenchmarkConfig,
    seed: u64,
) -> Result<CellResult> {
    let start = Instant::now();
    let trained = fit_method(method, data, part, bench, seed)?;
    let error = trained.error_rate(&data.subset(&part.test))?;
    Ok(CellResult {
        error,
        fit_seconds: start.elapsed().as_secs_f64(),
        details: trained.details(),
    })
}

/// A partition that trains on every row: `train` is everything, `test` is
/// empty, and `nested` holds T (half) and V, hold-out (a quarter each).
pub fn training_partition(data: &Dataset, seed: u64) -> Result<Partition> {
    let labels = data.labels();
    let first = split_labels(labels, &SplitPlan::new(seed, 0.5))?;
    let rest: Vec<f64> = first.test.iter().map(|&i| labels[i]).collect();
    let second = split_labels(&rest, &SplitPlan::new(seed, 0.5))?;
    let map = |idx: &[usize]| idx.iter().map(|&i| first.test[i]).collect::<Vec<usize>>();
    Ok(Partition {
        train: (0..data.len()).collect(),
        test: Vec::new(),
        nested: vec![first.train, map(&second.train), map(&second.test)],
    })
}

/// Standardize as configured and draw partition `r`.
pub fn prepare_repeat(
    data: &Dataset,
    bench: &BenchmarkConfig,
    r: usize,
) -> Result<(Dataset, Partition)> {
    let seed = bench.repeat_seed(r);
    let part = benchmark_partition(data, seed)?;
    let reference = if bench.standardize_on_train {
        data.subset(&part.train)
    } else {
        data.clone()
    };
    let scaled = StandardizationParams::fit(&reference)?.apply(data)?;
    Ok((scaled, part))
}

/// Read every well-formed entry of a journal written for `digest`.
pub fn read_journal(path: &Path, digest: &str) -> Result<Vec<JournalEntry>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<JournalEntry>(&line) {
            Ok(e) if e.config_digest == digest => out.push(e),
            Ok(_) => {}
            // a torn final line from an interrupted run
            Err(e) => log::warn!("skipping unreadable journal line: {e}"),
        }
    }
    Ok(out)
}

/// Mean and sample standard deviation per (dataset, method), in configured order.
pub fn aggregate(entries: &[JournalEntry], bench: &BenchmarkConfig) -> Vec<ResultRow> {
    let mut by_cell: BTreeMap<(String, MethodId), BTreeMap<usize, &JournalEntry>> = BTreeMap::new();
    for e in entries {
        by_cell
            .entry((e.dataset.clone(), e.method))
            .or_default()
            .entry(e.repeat)
            .or_insert(e);
    }
    let mut rows = Vec::new();
    for ds in &bench.datasets {
        for &m in &bench.methods {
            let Some(cells) = by_cell.get(&(ds.clone(), m)) else {
                continue;
            };
            let ok: Vec<&JournalEntry> = cells
                .values()
                .copied()
                .filter(|e| e.error_pct.is_some())
                .collect();
            let errs: Vec<f64> = ok.iter().map(|e| e.error_pct.unwrap()).collect();
            let k = errs.len();
            let mean = if k > 0 {
                errs.iter().sum::<f64>() / k as f64
            } else {
                f64::NAN
            };
            let std = if k > 1 {
                (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
            } else {
                0.0
            };
            let secs = if k > 0 {
                ok.iter().map(|e| e.fit_seconds).sum::<f64>() / k as f64
            } else {
                f64::NAN
            };
            rows.push(ResultRow {
                dataset: ds.clone(),
                method: m.name().to_string(),
                mean_error_pct: mean,
                std_error_pct: std,
                mean_fit_seconds: secs,
                repeats: k,
                failures: cells.len() - k,
            });
        }
    }
    rows
}

/// Run every (dataset, method, repeat) cell of `bench` on a pool of `jobs`
/// threads. With a journal, completed cells are appended as they finish and
/// cells already present are skipped.
pub fn run_benchmark<F>(
    bench: &BenchmarkConfig,
    load: F,
    journal: Option<&Path>,
    jobs: usize,
) -> Result<Vec<ResultRow>>
where
    F: Fn(&str) -> Result<Dataset> + Sync,
{
    bench.validate()?;
    let digest = bench.digest();
    let mut entries = match journal {
        Some(p) => read_journal(p, &digest)?,
        None => Vec::new(),
    };
    let done: HashSet<(String, MethodId, usize)> = entries
        .iter()
        .map(|e| (e.dataset.clone(), e.method, e.repeat))
        .collect();

    let mut data = Vec::new();
    for id in &bench.datasets {
        data.push(Arc::new(load(id)?));
    }
    let mut cells = Vec::new();
    for (di, id) in bench.datasets.iter().enumerate() {
        for r in 0..bench.repeats_for(data[di].len()) {
            for &m in &bench.methods {
                if !done.contains(&(id.clone(), m, r)) {
                    cells.push((di, r, m));
                }
            }
        }
    }
    log::info!(
        "{} cells to run ({} already journaled)",
        cells.len(),
        done.len()
    );

    let sink = match journal {
        Some(p) => Some(Mutex::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| Error::io(p, e))?,
        )),
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let new: Result<Vec<JournalEntry>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(di, r, m)| {
                let id = &bench.datasets[di];
                let seed = bench.repeat_seed(r);
                let start = Instant::now();
                let outcome = prepare_repeat(&data[di], bench, r)
                    .and_then(|(scaled, part)| run_cell(m, &scaled, &part, bench, seed));
                let entry = match outcome {
                    Ok(c) => JournalEntry {
                        config_digest: digest.clone(),
                        dataset: id.clone(),
                        method: m,
                        repeat: r,
                        seed,
                        error_pct: Some(100.0 * c.error),
                        fit_seconds: c.fit_seconds,
                        failure: None,
                        details: c.details,
                    },
                    Err(e) => {
                        log::warn!("{id}/{m}/{r} failed: {e}");
                        JournalEntry {
                            config_digest: digest.clone(),
                            dataset: id.clone(),
                            method: m,
                            repeat: r,
                            seed,
                            error_pct: None,
                            fit_seconds: start.elapsed().as_secs_f64(),
                            failure: Some(e.to_string()),
                            details: serde_json::Value::Null,
                        }
                    }
                };
                if let Some(sink) = &sink {
                    let mut line = serde_json::to_string(&entry)?;
                    line.push('\n');
                    let mut f = sink.lock().expect("journal lock");
                    f.write_all(line.as_bytes())
                        .map_err(|e| Error::io(journal.unwrap(), e))?;
                    f.flush().map_err(|e| Error::io(journal.unwrap(), e))?;
                }
                Ok(entry)
            })
            .collect()
    });
    entries.extend(new?);
    Ok(aggregate(&entries, bench))
}
