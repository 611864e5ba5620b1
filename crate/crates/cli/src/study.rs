//! Running a study: ground-truth GTE, every design × replication, and the
//! files that summarize them.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trainloop::designs::run_experiment;
use trainloop::exec::Executor;
use trainloop::rng::replication_seed;
use trainloop::stats::{aggregate, mean_std, Mode, StatsError};
use trainloop::{
    DesignError, Interaction, Method, Metric, MetricVector, PairedGlobal, ReplicationResult, SummaryStats,
};

use crate::config::RunSpec;
use crate::format::fmt_g;
use crate::plot::violin_svg;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StudyError + '_ {
    move |source| StudyError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Ground truth from paired global runs, one pair per replication seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub key: String,
    pub globals: Vec<PairedGlobal>,
}

impl GroundTruth {
    pub fn compute(spec: &RunSpec, executor: &Executor) -> Result<Self, StudyError> {
        let globals = executor.try_map(spec.replications, |rep| {
            PairedGlobal::run(&spec.task(Method::Pooling, replication_seed(spec.base_seed, rep)))
        })?;
        Ok(Self {
            key: spec.gte_key(),
            globals,
        })
    }

    /// Mean paired difference; zero by definition in A/A studies.
    pub fn gte(&self, aa: bool) -> MetricVector {
        if aa {
            return MetricVector::default();
        }
        MetricVector::from_fn(|m| self.estimate(m).0)
    }

    /// Mean and standard error of the paired differences for `metric`.
    pub fn estimate(&self, metric: Metric) -> (f64, f64) {
        let d: Vec<f64> = self.globals.iter().map(|g| g.difference().get(metric)).collect();
        let (mean, std) = mean_std(&d);
        let se = if d.len() > 1 {
            std / (d.len() as f64).sqrt()
        } else {
            f64::NAN
        };
        (mean, se)
    }

    fn cache_path(dir: &Path, key: &str) -> PathBuf {
        dir.join(".gte-cache").join(format!("{key}.json"))
    }

    /// Reuse a cached ground truth under `dir` when the key matches.
    pub fn load_or_compute(spec: &RunSpec, executor: &Executor, dir: &Path) -> Result<Self, StudyError> {
        let key = spec.gte_key();
        let path = Self::cache_path(dir, &key);
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(cached) = serde_json::from_str::<GroundTruth>(&text) {
                if cached.key == key && cached.globals.len() == spec.replications {
                    return Ok(cached);
                }
            }
        }
        let fresh = Self::compute(spec, executor)?;
        let parent = path.parent().expect("cache file has a parent");
        fs::create_dir_all(parent).map_err(io_err(parent))?;
        let text = serde_json::to_string(&fresh).map_err(|source| StudyError::Json {
            path: path.clone(),
            source,
        })?;
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(fresh)
    }

    /// `{metric: {estimate, std_error, replications}}`.
    pub fn to_json(&self, aa: bool) -> String {
        let mut root = serde_json::Map::new();
        for m in Metric::ALL {
            let (estimate, se) = if aa { (0.0, 0.0) } else { self.estimate(m) };
            root.insert(
                m.name().into(),
                serde_json::json!({
                    "estimate": estimate,
                    "std_error": if se.is_finite() { serde_json::json!(se) } else { serde_json::Value::Null },
                    "replications": self.globals.len(),
                }),
            );
        }
        serde_json::to_string_pretty(&serde_json::Value::Object(root)).expect("plain JSON") + "\n"
    }
}

/// Everything a study produced, in memory.
#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub truth: GroundTruth,
    pub gte: MetricVector,
    /// Sorted by (method, rep).
    pub results: Vec<ReplicationResult>,
    /// `None` with a single replication (spread is undefined).
    pub summary: Option<SummaryStats>,
}

/// Log rows of one replication as CSV.
pub fn log_csv(log: &[Interaction]) -> String {
    let mut out = String::from("period,user_index,z,is_short,finished,stay_duration,fr_hat,sd_hat,g_out\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.period,
            r.user_index,
            r.treated as u8,
            r.is_short as u8,
            r.finished as u8,
            fmt_g(r.stay_duration),
            fmt_g(r.fr_hat),
            fmt_g(r.sd_hat),
            r.g_out.map(fmt_g).unwrap_or_default()
        ));
    }
    out
}

/// Run every design × replication. Logs are returned only when requested.
pub fn run_study(
    spec: &RunSpec,
    executor: &Executor,
    truth: GroundTruth,
) -> Result<(StudyOutcome, Vec<(String, String)>), StudyError> {
    let tasks: Vec<(Method, usize)> = spec
        .methods
        .iter()
        .flat_map(|&m| (0..spec.replications).map(move |r| (m, r)))
        .collect();
    let ran = executor.try_map(tasks.len(), |i| -> Result<_, StudyError> {
        let (method, rep) = tasks[i];
        let config = spec.task(method, replication_seed(spec.base_seed, rep));
        let state = run_experiment(&config)?;
        let result = ReplicationResult::from_log(
            method,
            rep,
            config.seed,
            &state.log,
            config.alpha_treatment,
            config.alpha_control,
        )?;
        let log = spec
            .emit_logs
            .then(|| (format!("{}_rep{rep}.csv", method.name()), log_csv(&state.log)));
        Ok((result, log))
    })?;
    let mut results = Vec::with_capacity(ran.len());
    let mut logs = Vec::new();
    for (result, log) in ran {
        results.push(result);
        logs.extend(log);
    }
    results.sort_by(|a, b| (a.method.name(), a.rep).cmp(&(b.method.name(), b.rep)));
    logs.sort();

    let aa = spec.is_aa();
    let gte = truth.gte(aa);
    let summary = if spec.replications >= 2 {
        Some(aggregate(&results, &gte, if aa { Mode::AA } else { Mode::AB })?)
    } else {
        None
    };
    Ok((
        StudyOutcome {
            truth,
            gte,
            results,
            summary,
        },
        logs,
    ))
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn replications_csv(results: &[ReplicationResult]) -> String {
    let mut rows = Vec::new();
    for r in results {
        let mut metrics = Metric::ALL;
        metrics.sort_by_key(|m| m.name());
        for m in metrics {
            let e = r.metric(m);
            rows.push(vec![
                r.method.name().to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
                m.name().to_string(),
                fmt_g(e.treatment_mean),
                fmt_g(e.control_mean),
                fmt_g(e.estimate),
                fmt_g(e.se),
            ]);
        }
    }
    csv_text(
        &[
            "method",
            "rep",
            "seed",
            "metric",
            "treatment_mean",
            "control_mean",
            "estimate",
            "se",
        ],
        rows,
    )
}

pub const SUMMARY_HEADER: [&str; 7] = [
    "method",
    "metric",
    "bias",
    "std",
    "mean_se",
    "type1_rate",
    "mean_estimate",
];

pub fn summary_csv(summary: &SummaryStats) -> String {
    let mut rows: Vec<_> = summary
        .rows
        .iter()
        .map(|r| {
            vec![
                r.method.name().to_string(),
                r.metric.name().to_string(),
                fmt_g(r.bias),
                fmt_g(r.std),
                fmt_g(r.mean_se),
                r.type1_rate.map(fmt_g).unwrap_or_default(),
                fmt_g(r.mean_estimate),
            ]
        })
        .collect();
    rows.sort();
    csv_text(&SUMMARY_HEADER, rows)
}

pub const VALUES_HEADER: [&str; 4] = ["method", "rep", "treatment_value", "control_value"];

/// Per-replication experimentation values, with `global` rows from the
/// ground-truth runs.
pub fn values_csv(results: &[ReplicationResult], truth: &GroundTruth) -> String {
    let mut rows: Vec<(String, usize, f64, f64)> = truth
        .globals
        .iter()
        .enumerate()
        .map(|(rep, g)| ("global".to_string(), rep, g.treatment.value, g.control.value))
        .collect();
    rows.extend(
        results
            .iter()
            .map(|r| (r.method.name().to_string(), r.rep, r.treatment_value, r.control_value)),
    );
    rows.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    csv_text(
        &VALUES_HEADER,
        rows.into_iter()
            .map(|(m, rep, t, c)| vec![m, rep.to_string(), fmt_g(t), fmt_g(c)])
            .collect(),
    )
}

pub fn diagnostics_csv(results: &[ReplicationResult]) -> String {
    let rows = results
        .iter()
        .filter_map(|r| {
            r.weightnet_logloss_bits
                .map(|ll| vec![r.method.name().to_string(), r.rep.to_string(), fmt_g(ll)])
        })
        .collect();
    csv_text(&["method", "rep", "weightnet_logloss_bits"], rows)
}

/// Mean and SEM of the global-regime values: (treatment, control).
pub fn global_values(truth: &GroundTruth) -> ((f64, f64), (f64, f64)) {
    let sem = |v: Vec<f64>| {
        let (m, s) = mean_std(&v);
        (m, s / (v.len() as f64).sqrt())
    };
    (
        sem(truth.globals.iter().map(|g| g.treatment.value).collect()),
        sem(truth.globals.iter().map(|g| g.control.value).collect()),
    )
}

/// Files are staged in a scratch directory and moved into place only after
/// every one of them was written, so a failed study leaves no partial set.
struct Staging {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Staging {
    fn new(out: &Path) -> Result<Self, StudyError> {
        let dir = out.join(format!(".staging-{}", std::process::id()));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), StudyError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(contents.as_bytes()).map_err(io_err(&path))?;
        self.files.push(PathBuf::from(name));
        Ok(())
    }

    fn commit(mut self, out: &Path) -> Result<Vec<PathBuf>, StudyError> {
        let mut placed = Vec::new();
        for name in std::mem::take(&mut self.files) {
            let target = out.join(&name);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
            fs::rename(self.dir.join(&name), &target).map_err(io_err(&target))?;
            placed.push(target);
        }
        Ok(placed)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

/// Run the study described by `spec` and write its outputs. Returns the
/// in-memory outcome and the paths written.
pub fn simulate(spec: &RunSpec) -> Result<(StudyOutcome, Vec<PathBuf>), StudyError> {
    let out = &spec.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let executor = Executor::with_threads(spec.threads);
    let truth = GroundTruth::load_or_compute(spec, &executor, out)?;
    let (outcome, logs) = run_study(spec, &executor, truth)?;

    let mut staging = Staging::new(out)?;
    staging.write("gte.json", &outcome.truth.to_json(spec.is_aa()))?;
    staging.write("replications.csv", &replications_csv(&outcome.results))?;
    staging.write("values.csv", &values_csv(&outcome.results, &outcome.truth))?;
    if spec.methods.contains(&Method::Weighted) {
        staging.write("diagnostics.csv", &diagnostics_csv(&outcome.results))?;
    }
    if let Some(summary) = &outcome.summary {
        staging.write("summary.csv", &summary_csv(summary))?;
    }
    if spec.emit_plots {
        for m in Metric::ALL {
            let svg = violin_svg(m, &outcome.results, outcome.gte.get(m));
            staging.write(&format!("violin_{}.svg", m.name()), &svg)?;
        }
    }
    for (name, text) in &logs {
        staging.write(&format!("logs/{name}"), text)?;
    }
    let written = staging.commit(out)?;
    Ok((outcome, written))
}

/// Ground truth only: writes `gte.json`.
pub fn gte_only(spec: &RunSpec) -> Result<(GroundTruth, PathBuf), StudyError> {
    let out = &spec.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let truth = GroundTruth::load_or_compute(spec, &Executor::with_threads(spec.threads), out)?;
    let path = out.join("gte.json");
    fs::write(&path, truth.to_json(spec.is_aa())).map_err(io_err(&path))?;
    Ok((truth, path))
}
