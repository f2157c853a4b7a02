use std::fs;
use std::path::Path;

use gava_core::strategies::{EpochRecord, TrainingHistory};
use gava_core::Strategy;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gava_score: Option<f64>,
    /// Share of annotated answers judged correct.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub augmented_size: Option<usize>,
}

/// Run summary. Every field except `wall_clock_seconds` is a function of the
/// config, the seed and the input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<EpochRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    /// Baseline run that produced the augmentation model, when one was trained.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_history: Option<Vec<EpochRecord>>,
    pub metrics: ReportMetrics,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_hash,
            seed,
            strategy: None,
            history: None,
            best_epoch: None,
            base_history: None,
            metrics: ReportMetrics::default(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn with_history(mut self, history: &TrainingHistory) -> Self {
        self.history = Some(history.epochs.clone());
        self.best_epoch = Some(history.best_epoch);
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn write_report(path: &Path, report: &RunReport) -> Result<(), CliError> {
    fs::write(path, report.to_json()).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
