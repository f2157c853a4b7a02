//! Run configuration: JSON file, command-line overrides, seed resolution and
//! the config hash recorded in every report.

use std::fs;
use std::path::{Path, PathBuf};

use gava_core::evaluator::{ExternalEvaluator, OverlapOracle};
use gava_core::{Evaluator, Strategy, StrategyConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SEED_ENV: &str = "GAVA_LOOP_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub theta: f64,
    pub context_size: usize,
    pub sample_count: usize,
    pub max_references: usize,
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: Option<u64>,
    pub temperature: f64,
    pub dedupe: bool,
    pub references_include_target: bool,
    /// `oracle` or `external:<shell command>`.
    pub evaluator: String,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Share of the training file held out as dev set when no dev file is given.
    pub dev_fraction: f64,
    /// Reject examples whose candidate count differs from `context_size`.
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = StrategyConfig::default();
        Self {
            strategy: s.strategy,
            theta: s.theta,
            context_size: s.context_size,
            sample_count: s.sample_count,
            max_references: s.max_references,
            epochs: s.epochs,
            patience: s.patience,
            lr: s.lr,
            batch_size: s.batch_size,
            seed: None,
            temperature: s.temperature,
            dedupe: s.dedupe,
            references_include_target: s.references_include_target,
            evaluator: "oracle".into(),
            train: None,
            dev: None,
            input: None,
            checkpoint: None,
            out: None,
            dev_fraction: 0.1,
            strict: true,
        }
    }
}

/// Parses `key=value`; the value is read as JSON when possible and as a bare
/// string otherwise.
pub fn parse_override(raw: &str) -> Result<(String, Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{raw}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!("override `{raw}` has an empty key")));
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.to_string(), value))
}

/// Reads the config file (absent or empty means all defaults) and applies the
/// overrides in order. Unknown keys and type mismatches are errors.
pub fn load_config(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunConfig, CliError> {
    let mut object = match path {
        None => Map::new(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| CliError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            if text.trim().is_empty() {
                Map::new()
            } else {
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(CliError::Config(format!("{}: expected a JSON object", p.display()))),
                    Err(e) => return Err(CliError::Config(format!("{}: {e}", p.display()))),
                }
            }
        }
    };
    for (k, v) in overrides {
        object.insert(k.clone(), v.clone());
    }
    serde_json::from_value(Value::Object(object)).map_err(|e| CliError::Config(e.to_string()))
}

impl RunConfig {
    /// Fills in the seed from the environment fallback (or 0) when neither the
    /// file nor the command line set it.
    pub fn resolve_seed(&mut self) -> Result<u64, CliError> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        let seed = match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?,
            Err(_) => 0,
        };
        self.seed = Some(seed);
        Ok(seed)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn strategy_config(&self) -> StrategyConfig {
        StrategyConfig {
            strategy: self.strategy,
            theta: self.theta,
            context_size: self.context_size,
            sample_count: self.sample_count,
            max_references: self.max_references,
            epochs: self.epochs,
            patience: self.patience,
            lr: self.lr,
            batch_size: self.batch_size,
            seed: self.seed(),
            temperature: self.temperature,
            dedupe: self.dedupe,
            references_include_target: self.references_include_target,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.strategy_config().validate()?;
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(CliError::Config(format!("dev_fraction {} outside (0, 1)", self.dev_fraction)));
        }
        self.evaluator()?;
        Ok(())
    }

    pub fn evaluator(&self) -> Result<Box<dyn Evaluator>, CliError> {
        match self.evaluator.as_str() {
            "oracle" => Ok(Box::new(OverlapOracle)),
            other => match other.strip_prefix("external:") {
                Some(cmd) => Ok(Box::new(ExternalEvaluator::new(cmd)?)),
                None => Err(CliError::Config(format!(
                    "evaluator `{other}` is neither `oracle` nor `external:<command>`"
                ))),
            },
        }
    }

    /// SHA-256 over the canonical JSON form (sorted keys), ignoring `out`.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut value {
            m.remove("out");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}
