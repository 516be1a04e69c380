//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored and
//! unknown keys are rejected. An empty value clears an optional path.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::{Task, DEFAULT_SAMPLE_LEN};
use crate::nn::{AdamConfig, Pairing, Profile};
use crate::views::{HeaderCategory, ViewKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("bad value for {key}: {msg}")]
    Value { key: String, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub labels: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub view: ViewKind,
    pub category: HeaderCategory,
    pub n: usize,
    pub task: Task,
    pub include_non_ip: bool,
    pub drop_empty: bool,
    pub profile: Profile,
    pub pairing: Pairing,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    /// Patience in epochs; `None` keeps training and retains the best epoch.
    pub early_stop: Option<usize>,
    pub val_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        RunConfig {
            labels: None,
            dataset: None,
            weights: None,
            out: None,
            view: ViewKind::Session,
            category: HeaderCategory::NoHeaders,
            n: DEFAULT_SAMPLE_LEN,
            task: Task::Binary,
            include_non_ip: false,
            drop_empty: false,
            profile: Profile::Wide,
            pairing: Pairing::Crossed,
            epochs: 50,
            batch: 20,
            seed: 0,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            early_stop: None,
            val_fraction: 0.2,
        }
    }
}

pub const KEYS: [&str; 21] = [
    "labels",
    "dataset",
    "weights",
    "out",
    "view",
    "category",
    "n",
    "task",
    "include_non_ip",
    "drop_empty",
    "profile",
    "pairing",
    "epochs",
    "batch",
    "seed",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "early_stop",
    "val_fraction",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value { key: key.into(), msg: e.to_string() })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Value { key: key.into(), msg: format!("expected true or false, got '{value}'") }),
    }
}

fn parse_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "labels" => self.labels = parse_path(value),
            "dataset" => self.dataset = parse_path(value),
            "weights" => self.weights = parse_path(value),
            "out" => self.out = parse_path(value),
            "view" => self.view = parse_value(key, value)?,
            "category" => self.category = parse_value(key, value)?,
            "n" => self.n = parse_value(key, value)?,
            "task" => self.task = parse_value(key, value)?,
            "include_non_ip" => self.include_non_ip = parse_bool(key, value)?,
            "drop_empty" => self.drop_empty = parse_bool(key, value)?,
            "profile" => self.profile = parse_value(key, value)?,
            "pairing" => self.pairing = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch" => self.batch = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "beta1" => self.beta1 = parse_value(key, value)?,
            "beta2" => self.beta2 = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "early_stop" => {
                self.early_stop = match value {
                    "off" | "" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "val_fraction" => {
                let v: f64 = parse_value(key, value)?;
                if !(0.0..1.0).contains(&v) {
                    return Err(ConfigError::Value { key: key.into(), msg: "must be in [0, 1)".into() });
                }
                self.val_fraction = v;
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "labels" => show_path(&self.labels),
            "dataset" => show_path(&self.dataset),
            "weights" => show_path(&self.weights),
            "out" => show_path(&self.out),
            "view" => self.view.name().to_string(),
            "category" => self.category.flag_name().to_string(),
            "n" => self.n.to_string(),
            "task" => self.task.flag_name().to_string(),
            "include_non_ip" => self.include_non_ip.to_string(),
            "drop_empty" => self.drop_empty.to_string(),
            "profile" => self.profile.name().to_string(),
            "pairing" => self.pairing.name().to_string(),
            "epochs" => self.epochs.to_string(),
            "batch" => self.batch.to_string(),
            "seed" => self.seed.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "early_stop" => self.early_stop.map_or_else(|| "off".to_string(), |p| p.to_string()),
            "val_fraction" => self.val_fraction.to_string(),
            _ => return None,
        })
    }

    /// Applies the settings in `text` on top of `self`.
    pub fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, msg: format!("expected key = value, got '{line}'") })?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                ConfigError::Value { .. } | ConfigError::UnknownKey(_) => ConfigError::Syntax { line: i + 1, msg: e.to_string() },
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut c = RunConfig::default();
        c.apply(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        RunConfig::parse(&text)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("every key renders"));
        }
        s
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }
}
