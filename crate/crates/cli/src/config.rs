//! Experiment configuration: JSON documents whose keys mirror the struct
//! fields, overridable from the command line.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use tcr_core::methods::MethodRegistry;
use tcr_core::noise::NoiseSpec;
use tcr_core::trainer::TrainConfig;

/// Synthetic blob generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub spread: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 500,
            dim: 2,
            spread: 0.3,
            test_fraction: 0.2,
            seed: 7,
        }
    }
}

impl DataConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.classes < 2 {
            out.push(format!("data.classes must be >= 2, got {}", self.classes));
        }
        if self.per_class == 0 {
            out.push("data.per_class must be >= 1".into());
        }
        if self.dim == 0 {
            out.push("data.dim must be >= 1".into());
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            out.push(format!("data.spread must be positive, got {}", self.spread));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            out.push(format!(
                "data.test_fraction must be in (0, 1), got {}",
                self.test_fraction
            ));
        }
        out
    }
}

/// Hyperparameters that a sweep grid may vary.
pub const GRID_KEYS: &[&str] = &[
    "alpha",
    "batch_size",
    "beta",
    "delta",
    "epochs",
    "gamma",
    "lr",
    "momentum",
    "q",
    "squeeze_start",
    "weight_decay",
];

/// Everything one `train` run or one `sweep` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    /// Generated when `train_path`/`test_path` are absent.
    pub data: DataConfig,
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// Noise recipe such as `uniform:0.4`, `asymmetric:0.4`, `openset:0.4`.
    pub noise: String,
    pub noise_seed: u64,
    /// Sample ids whose predictions are recorded every epoch.
    pub trace: Vec<u64>,
    pub out: Option<PathBuf>,
    /// Sweep only: methods crossed with the grid and the seeds.
    pub methods: Vec<String>,
    pub grid: BTreeMap<String, Vec<f64>>,
    pub seeds: Vec<u64>,
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            data: DataConfig::default(),
            train_path: None,
            test_path: None,
            noise: "none".into(),
            noise_seed: 3,
            trace: Vec::new(),
            out: None,
            methods: Vec::new(),
            grid: BTreeMap::new(),
            seeds: Vec::new(),
            parallel: false,
        }
    }
}

impl ExperimentConfig {
    /// Parses a JSON document, rejecting keys that name no field.
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).context("config is not valid JSON")?;
        let Some(object) = value.as_object() else {
            bail!("config must be a JSON object");
        };
        let known = serde_json::to_value(Self::default())?;
        let unknown: Vec<&str> = object
            .keys()
            .filter(|k| known.get(k.as_str()).is_none())
            .map(String::as_str)
            .collect();
        if !unknown.is_empty() {
            bail!("unknown config keys: {}", unknown.join(", "));
        }
        serde_json::from_value(value).context("config has a field of the wrong type")
    }

    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn noise_spec(&self) -> anyhow::Result<NoiseSpec> {
        self.noise
            .parse::<NoiseSpec>()
            .with_context(|| format!("invalid noise spec {:?}", self.noise))
    }

    /// Problems that block a single training run.
    pub fn problems(&self, registry: &MethodRegistry) -> Vec<String> {
        let mut out = self.train.problems();
        out.extend(self.data.problems());
        if let Err(e) = self.noise_spec().and_then(|s| Ok(s.validate()?)) {
            out.push(format!("{e:#}"));
        }
        if !registry.contains(&self.train.method) {
            out.push(unknown_method(&self.train.method, registry));
        }
        if self.train_path.is_some() != self.test_path.is_some() {
            out.push("train_path and test_path must be given together".into());
        }
        out
    }

    /// Problems that block a sweep. The base `method` is ignored in favour
    /// of `methods`.
    pub fn sweep_problems(&self, registry: &MethodRegistry) -> Vec<String> {
        let mut out: Vec<String> = self
            .problems(registry)
            .into_iter()
            .filter(|p| !p.starts_with("unknown method"))
            .collect();
        if self.methods.is_empty() {
            out.push("sweep needs at least one entry in methods".into());
        }
        for m in &self.methods {
            if !registry.contains(m) {
                out.push(unknown_method(m, registry));
            }
        }
        if self.seeds.is_empty() {
            out.push("sweep needs at least one entry in seeds".into());
        }
        for (key, values) in &self.grid {
            if !GRID_KEYS.contains(&key.as_str()) {
                out.push(format!(
                    "grid key {key:?} is not sweepable (expected one of {})",
                    GRID_KEYS.join(", ")
                ));
            } else if values.is_empty() {
                out.push(format!("grid key {key:?} has no values"));
            }
        }
        out
    }
}

fn unknown_method(name: &str, registry: &MethodRegistry) -> String {
    let known: Vec<&str> = registry.names().collect();
    format!("unknown method {name:?} (known: {})", known.join(", "))
}

/// Sets one named hyperparameter; integer-valued keys reject fractions.
pub fn set_param(config: &mut TrainConfig, key: &str, value: f64) -> anyhow::Result<()> {
    let as_count = || -> anyhow::Result<usize> {
        if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
            Ok(value as usize)
        } else {
            bail!("{key} must be a non-negative integer, got {value}")
        }
    };
    match key {
        "alpha" => config.alpha = value,
        "beta" => config.beta = value,
        "gamma" => config.gamma = value,
        "lr" => config.lr = value,
        "momentum" => config.momentum = value,
        "q" => config.q = value,
        "weight_decay" => config.weight_decay = value,
        "batch_size" => config.batch_size = as_count()?,
        "delta" => config.delta = as_count()?,
        "epochs" => config.epochs = as_count()?,
        "squeeze_start" => config.squeeze_start = Some(as_count()?),
        other => bail!("unknown hyperparameter {other:?}"),
    }
    Ok(())
}
