//! Run specification: a flat `key = value` file plus same-named flags.
//!
//! ```text
//! # comment
//! alpha_treatment = 9
//! alpha_control = 10
//! p = 0.5
//! methods = weighted, pooling
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;
use trainloop::{EnvParams, ExperimentConfig, Method};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key}`: cannot parse `{value}`: {reason}")]
    Parse { key: String, value: String, reason: String },
    #[error("`{key}`: {reason}")]
    Range { key: String, reason: String },
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

/// Every recognized key with a short description (also the `--help` text).
pub const KEYS: &[(&str, &str)] = &[
    ("alpha_treatment", "fusion coefficient of the treatment arm (required)"),
    ("alpha_control", "fusion coefficient of the control arm (required)"),
    ("p", "probability of assignment to treatment (required)"),
    ("periods", "experiment periods T [10000]"),
    ("batch", "users per period B [128]"),
    ("n_candidates", "candidate videos per user, even [100]"),
    ("feature_dim", "feature dimension [10]"),
    ("warmup_periods", "periods before weighted training starts [200]"),
    (
        "production_burnin_periods",
        "periods used to build the production model [200]",
    ),
    ("lr_sgd", "SGD learning rate of the predictors [0.1]"),
    ("lr_adam", "Adam learning rate of the weighting model [0.001]"),
    (
        "methods",
        "comma-separated designs [weighted,splitting,pooling,snapshot]",
    ),
    ("replications", "independent replications per design [100]"),
    ("base_seed", "base seed of every random stream [0]"),
    ("threads", "worker threads [available cores]"),
    ("emit_logs", "write per-replication interaction logs [false]"),
    ("emit_plots", "write violin plots [true]"),
    ("clip_epsilon", "clamp weighting-model outputs to [eps, 1-eps] [none]"),
    ("output_dir", "directory receiving the outputs [out]"),
];

const REQUIRED: [&str; 3] = ["alpha_treatment", "alpha_control", "p"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    /// Template for every run; `method` and `seed` are filled per task.
    pub experiment: ExperimentConfig,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub base_seed: u64,
    pub threads: usize,
    pub output_dir: PathBuf,
    pub emit_logs: bool,
    pub emit_plots: bool,
}

/// Raw settings in application order; later entries win.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut settings = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.trim().to_string(),
            })?;
            settings.set(key.trim(), value.trim())?;
        }
        Ok(settings)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| ConfigError::Parse {
                    key: key.to_string(),
                    value: v.clone(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn into_spec(self) -> Result<RunSpec, ConfigError> {
        for key in REQUIRED {
            if !self.values.contains_key(key) {
                return Err(ConfigError::Missing(key));
            }
        }
        let alpha_treatment: f64 = self.get("alpha_treatment")?.expect("checked above");
        let alpha_control: f64 = self.get("alpha_control")?.expect("checked above");
        let p: f64 = self.get("p")?.expect("checked above");
        if !(0.0..=1.0).contains(&p) {
            return Err(range("p", format!("{p} is outside [0, 1]")));
        }

        let methods = match self.values.get("methods") {
            None => Method::ALL.to_vec(),
            Some(list) => {
                let mut methods = Vec::new();
                for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let m: Method = name.parse().map_err(|_| ConfigError::Parse {
                        key: "methods".into(),
                        value: name.into(),
                        reason: "expected weighted, splitting, pooling or snapshot".into(),
                    })?;
                    if !methods.contains(&m) {
                        methods.push(m);
                    }
                }
                methods
            }
        };
        if methods.is_empty() {
            return Err(range("methods", "at least one design is required"));
        }

        let feature_dim = self.get_or("feature_dim", 10usize)?;
        let n_candidates = self.get_or("n_candidates", 100usize)?;
        let env = EnvParams::with_dims(feature_dim, n_candidates).map_err(|e| {
            let key = if feature_dim == 0 {
                "feature_dim"
            } else {
                "n_candidates"
            };
            range(key, e.to_string())
        })?;

        let mut experiment = ExperimentConfig::reference(alpha_treatment, alpha_control, p, methods[0]);
        experiment.env = env;
        experiment.periods = self.get_or("periods", experiment.periods)?;
        experiment.batch = self.get_or("batch", experiment.batch)?;
        experiment.warmup_periods = self.get_or("warmup_periods", experiment.warmup_periods)?;
        experiment.production_burnin_periods =
            self.get_or("production_burnin_periods", experiment.production_burnin_periods)?;
        experiment.learning_rate_sgd = self.get_or("lr_sgd", experiment.learning_rate_sgd)?;
        experiment.learning_rate_adam = self.get_or("lr_adam", experiment.learning_rate_adam)?;
        experiment.clip_epsilon = match self.values.get("clip_epsilon").map(String::as_str) {
            None | Some("none") | Some("") => None,
            Some(_) => self.get("clip_epsilon")?,
        };
        for &m in &methods {
            let mut c = experiment.clone();
            c.method = m;
            c.validate().map_err(|e| match e {
                trainloop::DesignError::InvalidConfig { key, reason } => range(key, reason),
                other => range("config", other.to_string()),
            })?;
        }

        let replications = self.get_or("replications", 100usize)?;
        if replications == 0 {
            return Err(range("replications", "must be at least 1"));
        }
        let default_threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        let threads = self.get_or("threads", default_threads)?;
        if threads == 0 {
            return Err(range("threads", "must be at least 1"));
        }

        Ok(RunSpec {
            experiment,
            methods,
            replications,
            base_seed: self.get_or("base_seed", 0u64)?,
            threads,
            output_dir: self.get_or("output_dir", PathBuf::from("out"))?,
            emit_logs: self.get_or("emit_logs", false)?,
            emit_plots: self.get_or("emit_plots", true)?,
        })
    }
}

fn range(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        key: key.to_string(),
        reason: reason.into(),
    }
}

impl RunSpec {
    /// Config for one (method, seed) task.
    pub fn task(&self, method: Method, seed: u64) -> ExperimentConfig {
        let mut c = self.experiment.clone();
        c.method = method;
        c.seed = seed;
        c
    }

    /// A/A studies compare identical arms; bias is then measured against 0.
    pub fn is_aa(&self) -> bool {
        self.experiment.alpha_treatment == self.experiment.alpha_control
    }

    /// Hash of every input the global runs depend on.
    pub fn gte_key(&self) -> String {
        let c = &self.experiment;
        let mut text = String::new();
        let _ = write!(
            text,
            "alpha_t={:?};alpha_c={:?};periods={};batch={};burnin={};lr={:?};base_seed={};reps={};",
            c.alpha_treatment,
            c.alpha_control,
            c.periods,
            c.batch,
            c.production_burnin_periods,
            c.learning_rate_sgd,
            self.base_seed,
            self.replications
        );
        let e = &c.env;
        let _ = write!(
            text,
            "d={};n={};fr_s={:?};fr_l={:?};sd_s={:?};sd_l={:?};off={:?}",
            e.feature_dim,
            e.n_candidates,
            e.beta_fr_short,
            e.beta_fr_long,
            e.beta_sd_short,
            e.beta_sd_long,
            e.fr_offset
        );
        Sha256::digest(text.as_bytes())
            .iter()
            .take(12)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
