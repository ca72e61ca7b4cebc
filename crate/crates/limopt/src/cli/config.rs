//! Experiment settings and the `key=value` text format shared by config
//! and grid files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use limopt_core::{AdamParams, OptimizerConfig, OptimizerKind};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, ValueEnum)]
pub enum ProblemKind {
    Noise,
    Quadratic,
    Logreg,
    Mlp2,
    Mlp3,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Noise => "noise",
            ProblemKind::Quadratic => "quadratic",
            ProblemKind::Logreg => "logreg",
            ProblemKind::Mlp2 => "mlp2",
            ProblemKind::Mlp3 => "mlp3",
        }
    }

    /// Trained on a labelled dataset rather than an analytic oracle.
    pub fn is_classification(self) -> bool {
        !matches!(self, ProblemKind::Noise | ProblemKind::Quadratic)
    }

    /// Number of hidden layers of the network, zero for the others.
    pub fn hidden_layers(self) -> usize {
        match self {
            ProblemKind::Mlp2 => 2,
            ProblemKind::Mlp3 => 3,
            _ => 0,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::value_variants()
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::usage(format!(
                    "unknown problem '{s}' (expected noise, quadratic, logreg, mlp2 or mlp3)"
                ))
            })
    }
}

/// Keys accepted in config and grid files.
pub const CONFIG_KEYS: &[&str] = &[
    "problem",
    "optimizer",
    "alpha0",
    "gamma",
    "beta",
    "batch",
    "iters",
    "seed",
    "data",
    "hidden_width",
    "out",
    "dim",
    "sigma",
    "noise_mv",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub optimizer: OptimizerKind,
    pub alpha0: f64,
    /// Fixed decay factor for sgdm.
    pub gamma: f64,
    /// Exponent of the inverse-proportional decay for lim.
    pub beta: f64,
    pub batch: usize,
    pub iters: u64,
    pub seed: u64,
    /// Directory holding uncompressed MNIST training files.
    pub data_path: Option<PathBuf>,
    pub hidden_width: usize,
    pub out_dir: PathBuf,
    /// Dimension of the noise and quadratic oracles.
    pub dim: usize,
    /// Per-coordinate noise level of the noise and quadratic oracles.
    pub sigma: f64,
    /// Gradient-dependent noise coefficient of the quadratic oracle.
    pub noise_mv: f64,
    pub adam: AdamParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemKind::Quadratic,
            optimizer: OptimizerKind::Lim,
            alpha0: 0.1,
            gamma: 0.9,
            beta: 2.0,
            batch: 128,
            iters: 1000,
            seed: 0,
            data_path: None,
            hidden_width: 128,
            out_dir: PathBuf::from("."),
            dim: 10,
            sigma: 1.0,
            noise_mv: 0.0,
            adam: AdamParams::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::usage(format!("invalid value '{value}' for '{key}'")))
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl ExperimentConfig {
    /// Sets one field from its text form; unknown keys are usage errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match normalize_key(key).as_str() {
            "problem" => self.problem = value.parse()?,
            "optimizer" => {
                self.optimizer = value
                    .parse()
                    .map_err(|e: limopt_core::Error| Error::usage(e.to_string()))?
            }
            "alpha0" => self.alpha0 = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "beta" => self.beta = parse_value(key, value)?,
            "batch" => self.batch = parse_value(key, value)?,
            "iters" => self.iters = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "data" => self.data_path = Some(PathBuf::from(value)),
            "hidden_width" => self.hidden_width = parse_value(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "dim" => self.dim = parse_value(key, value)?,
            "sigma" => self.sigma = parse_value(key, value)?,
            "noise_mv" => self.noise_mv = parse_value(key, value)?,
            "adam_beta1" => self.adam.beta1 = parse_value(key, value)?,
            "adam_beta2" => self.adam.beta2 = parse_value(key, value)?,
            "adam_epsilon" => self.adam.epsilon = parse_value(key, value)?,
            other => return Err(Error::usage(format!("unknown parameter '{other}'"))),
        }
        Ok(())
    }

    /// Applies every entry of a parsed `key=value` file in order.
    pub fn apply_entries(&mut self, entries: &[KeyValue]) -> Result<()> {
        for e in entries {
            self.set(&e.key, &e.value)
                .map_err(|err| Error::usage(format!("line {}: {}", e.line, strip_usage(&err))))?;
        }
        Ok(())
    }

    /// Optimizer settings; fails on out-of-range schedule parameters.
    pub fn optimizer_config(&self) -> Result<OptimizerConfig> {
        let c = match self.optimizer {
            OptimizerKind::Sgd => OptimizerConfig::sgd(self.alpha0),
            OptimizerKind::Sgdm => OptimizerConfig::sgdm(self.alpha0, self.gamma),
            OptimizerKind::Lim => OptimizerConfig::lim(self.alpha0, self.beta),
            OptimizerKind::Adam => OptimizerConfig::adam(self.alpha0, self.adam),
        };
        Ok(c?)
    }

    /// Checks every setting without doing any work and returns the
    /// optimizer settings.
    pub fn validate(&self) -> Result<OptimizerConfig> {
        let oc = self.optimizer_config()?;
        if self.batch == 0 {
            return Err(Error::usage("batch must be >= 1"));
        }
        if self.iters == 0 {
            return Err(Error::usage("iters must be >= 1"));
        }
        if self.problem.is_classification() {
            if self.problem.hidden_layers() > 0 && self.hidden_width == 0 {
                return Err(Error::usage("hidden_width must be >= 1"));
            }
        } else {
            if self.data_path.is_some() {
                return Err(Error::usage(format!(
                    "--data only applies to logreg, mlp2 and mlp3, not {}",
                    self.problem
                )));
            }
            if self.dim == 0 {
                return Err(Error::usage("dim must be >= 1"));
            }
            if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
                return Err(Error::usage(format!(
                    "sigma must be >= 0, got {}",
                    self.sigma
                )));
            }
            if !(self.noise_mv >= 0.0 && self.noise_mv.is_finite()) {
                return Err(Error::usage(format!(
                    "noise_mv must be >= 0, got {}",
                    self.noise_mv
                )));
            }
            if self.problem == ProblemKind::Noise && self.noise_mv != 0.0 {
                return Err(Error::usage(
                    "noise_mv only applies to the quadratic problem",
                ));
            }
        }
        Ok(oc)
    }

    /// Settings recorded in output manifests, schedule keys first.
    pub fn manifest(&self) -> Vec<(String, String)> {
        let mut m: Vec<(String, String)> = vec![
            ("problem".into(), self.problem.to_string()),
            ("optimizer".into(), self.optimizer.to_string()),
            ("alpha0".into(), self.alpha0.to_string()),
        ];
        match self.optimizer {
            OptimizerKind::Sgdm => m.push(("gamma".into(), self.gamma.to_string())),
            OptimizerKind::Lim => m.push(("beta".into(), self.beta.to_string())),
            OptimizerKind::Adam => {
                m.push(("adam_beta1".into(), self.adam.beta1.to_string()));
                m.push(("adam_beta2".into(), self.adam.beta2.to_string()));
                m.push(("adam_epsilon".into(), self.adam.epsilon.to_string()));
            }
            OptimizerKind::Sgd => {}
        }
        m.push(("seed".into(), self.seed.to_string()));
        m.push(("iters".into(), self.iters.to_string()));
        m.push(("batch".into(), self.batch.to_string()));
        if self.problem.is_classification() {
            if self.problem.hidden_layers() > 0 {
                m.push(("hidden_width".into(), self.hidden_width.to_string()));
            }
            let data = match &self.data_path {
                Some(p) => p.display().to_string(),
                None => "synthetic".into(),
            };
            m.push(("data".into(), data));
        } else {
            m.push(("dim".into(), self.dim.to_string()));
            m.push(("sigma".into(), self.sigma.to_string()));
            if self.problem == ProblemKind::Quadratic {
                m.push(("noise_mv".into(), self.noise_mv.to_string()));
            }
        }
        m
    }

    /// `<problem>_<optimizer>_s<seed>.csv`
    pub fn run_file_name(&self) -> String {
        format!("{}_{}_s{}.csv", self.problem, self.optimizer, self.seed)
    }
}

fn strip_usage(e: &Error) -> String {
    match e {
        Error::Usage(m) => m.clone(),
        other => other.to_string(),
    }
}

/// One non-comment line of a `key=value` file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyValue {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Parses `key=value` lines; blank lines and lines starting with `#` are
/// skipped. Keys must be known and appear at most once.
pub fn parse_key_values(text: &str) -> Result<Vec<KeyValue>> {
    let mut out: Vec<KeyValue> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let Some((k, v)) = t.split_once('=') else {
            return Err(Error::Parse {
                line,
                msg: format!("expected key=value, found '{t}'"),
            });
        };
        let key = normalize_key(k);
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::usage(format!(
                "line {line}: unknown parameter '{key}'"
            )));
        }
        if out.iter().any(|e| e.key == key) {
            return Err(Error::usage(format!("line {line}: '{key}' given twice")));
        }
        out.push(KeyValue {
            line,
            key,
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> Result<Vec<KeyValue>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_key_values(&text)
}
