use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use ssl_har::baselines::{LogRegConfig, PseudoLabelConfig, SelfTrainConfig};
use ssl_har::data::{SplitMode, SynthConfig};
use ssl_har::experiment::{ExperimentConfig, Method};
use ssl_har::training::{TrainConfig, DEFAULT_SPEC};

/// A rejected configuration; the CLI exits with status 2.
#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.msg)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(key: impl Into<String>, msg: impl Into<String>) -> anyhow::Error {
    ConfigError { key: key.into(), msg: msg.into() }.into()
}

/// Synthetic corpus generated in place of a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSource {
    pub subjects: usize,
    pub classes: usize,
    pub rate: f64,
    /// Seconds of each activity per subject.
    pub seconds: f64,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
    pub params: SynthConfig,
}

impl Default for SynthSource {
    fn default() -> Self {
        Self { subjects: 6, classes: 6, rate: 20.0, seconds: 120.0, seed: None, params: SynthConfig::default() }
    }
}

/// Everything one invocation needs. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Corpus CSV (`subject,label,t,ch0..`).
    pub data: Option<PathBuf>,
    /// Used when `data` is absent.
    pub synth: Option<SynthSource>,
    pub window_seconds: f64,
    pub overlap: f64,
    pub out: PathBuf,
    pub seed: u64,

    pub model_kind: Method,
    pub n_labeled: usize,
    pub n_unlabeled: Option<usize>,
    pub split_mode: SplitMode,
    pub validation: bool,
    /// `train`: subject kept out of training and scored.
    pub holdout_subject: Option<String>,
    /// `loso`/`sweep-lambda`: run only the first folds.
    pub max_folds: Option<usize>,
    /// `sweep-lambda`: levels to emphasize; all of `0..=L` by default.
    pub sweep_levels: Option<Vec<usize>>,

    pub spec: String,
    pub sigma: f64,
    pub lambdas: Vec<f64>,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_opt: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub steps_per_epoch: Option<usize>,
    pub bn_momentum: f64,
    pub reconstruct_labeled: bool,
    pub normalized_targets: bool,
    pub detach_targets: bool,

    pub logreg: LogRegConfig,
    pub self_train: SelfTrainConfig,
    pub pseudo: PseudoLabelConfig,
    pub pretrain_epochs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            data: None,
            synth: None,
            window_seconds: 2.0,
            overlap: 0.5,
            out: PathBuf::from("out"),
            seed: 0,
            model_kind: Method::Ladder,
            n_labeled: 50,
            n_unlabeled: None,
            split_mode: SplitMode::Inductive,
            validation: false,
            holdout_subject: None,
            max_folds: None,
            sweep_levels: None,
            spec: DEFAULT_SPEC.to_string(),
            sigma: t.sigma,
            lambdas: t.lambdas,
            batch_labeled: t.batch_labeled,
            batch_unlabeled: t.batch_unlabeled,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            eps_opt: t.eps_opt,
            max_epochs: t.max_epochs,
            patience: t.patience,
            steps_per_epoch: t.steps_per_epoch,
            bn_momentum: t.bn_momentum,
            reconstruct_labeled: t.reconstruct_labeled,
            normalized_targets: t.normalized_targets,
            detach_targets: t.detach_targets,
            logreg: LogRegConfig::default(),
            self_train: SelfTrainConfig::default(),
            pseudo: PseudoLabelConfig::default(),
            pretrain_epochs: None,
        }
    }
}

/// The first backticked word of a message, which names the key in serde
/// and validation errors.
fn key_in(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

/// Parses `value` as JSON, falling back to a plain string.
fn parse_override(value: &str) -> Value {
    serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()))
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies `key=value` overrides,
    /// then deserializes with full key validation.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<RunConfig> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", p.display()))?;
                serde_json::from_str::<Value>(&text).map_err(|e| config_err("<document>", e.to_string()))?
            }
            None => Value::Object(Default::default()),
        };
        let obj = doc.as_object_mut().ok_or_else(|| config_err("<document>", "config must be a JSON object"))?;
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| config_err(o.clone(), "override must look like key=value"))?;
            obj.insert(k.to_string(), parse_override(v));
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
            let path = e.path().to_string();
            let msg = e.inner().to_string();
            let key = match (msg.starts_with("unknown field"), key_in(&msg)) {
                (true, Some(field)) if path == "." => field,
                (true, Some(field)) if path == field || path.ends_with(&format!(".{field}")) => path,
                (true, Some(field)) => format!("{path}.{field}"),
                _ => path,
            };
            config_err(key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.data.is_some() && self.synth.is_some() {
            return Err(config_err("data", "give either `data` or `synth`, not both"));
        }
        if !(self.window_seconds > 0.0 && self.window_seconds.is_finite()) {
            return Err(config_err("window_seconds", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(config_err("overlap", "must lie in [0, 1)"));
        }
        if self.n_labeled == 0 {
            return Err(config_err("n_labeled", "must be >= 1"));
        }
        if self.max_folds == Some(0) {
            return Err(config_err("max_folds", "must be >= 1"));
        }
        if let Some(s) = &self.synth {
            if s.subjects < 2 || s.classes < 2 {
                return Err(config_err("synth", "needs at least 2 subjects and 2 classes"));
            }
            if !(s.rate > 0.0 && s.seconds > 0.0) {
                return Err(config_err("synth", "rate and seconds must be positive"));
            }
        }
        let t = self.experiment().train_config();
        t.validate().map_err(|e| {
            let msg = e.to_string();
            config_err(key_in(&msg).unwrap_or_else(|| "train".into()), msg)
        })?;
        self.pseudo.validate().map_err(|e| config_err("pseudo", e.to_string()))?;
        let st = self.self_train.threshold;
        if !(st > 0.0 && st < 1.0) {
            return Err(config_err("self_train", format!("threshold must lie in (0, 1), got {st}")));
        }
        if !(self.logreg.l2 >= 0.0 && self.logreg.learning_rate > 0.0) {
            return Err(config_err("logreg", "l2 must be >= 0 and learning_rate > 0"));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model_kind: self.model_kind.network_kind().unwrap_or(ssl_har::network::ModelKind::Supervised),
            spec: self.spec.clone(),
            sigma: self.sigma,
            lambdas: self.lambdas.clone(),
            batch_labeled: self.batch_labeled,
            batch_unlabeled: self.batch_unlabeled,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps_opt: self.eps_opt,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            steps_per_epoch: self.steps_per_epoch,
            bn_momentum: self.bn_momentum,
            reconstruct_labeled: self.reconstruct_labeled,
            normalized_targets: self.normalized_targets,
            detach_targets: self.detach_targets,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            method: self.model_kind,
            train: self.train_config(),
            n_labeled: self.n_labeled,
            n_unlabeled: self.n_unlabeled,
            split: self.split_mode,
            validation: self.validation,
            logreg: self.logreg.clone(),
            self_train: self.self_train.clone(),
            pseudo: self.pseudo.clone(),
            pretrain_epochs: self.pretrain_epochs,
        }
    }
}
