//! Evaluation protocol: human-annotation aggregation, answering accuracy,
//! dataset-level evaluator score, and Pearson/Spearman correlation studies.

use std::collections::BTreeMap;
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AnnotationRecord, Dataset};
use crate::error::{Error, Result};
use crate::evaluator::{references_for_example, Evaluator, ReferencePolicy, ScoreRequest};
use crate::generator::Generator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessVerdict {
    pub question_id: String,
    pub mean_judgment: f64,
    /// `mean_judgment > 0.5`; a split jury counts as incorrect.
    pub is_correct: bool,
}

pub fn aggregate_annotations(question_id: impl Into<String>, records: &[AnnotationRecord]) -> Result<CorrectnessVerdict> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no annotations to aggregate".into()));
    }
    if let Some(bad) = records.iter().find(|r| !(0.0..=1.0).contains(&r.judgment)) {
        return Err(Error::InvalidData(format!(
            "judgment {} from `{}` outside [0, 1]",
            bad.judgment, bad.rater_id
        )));
    }
    let mean = records.iter().map(|r| r.judgment).sum::<f64>() / records.len() as f64;
    Ok(CorrectnessVerdict {
        question_id: question_id.into(),
        mean_judgment: mean,
        is_correct: mean > 0.5,
    })
}

/// Correct answers over all judged answers.
pub fn answering_accuracy(verdicts: &[CorrectnessVerdict]) -> Result<f64> {
    if verdicts.is_empty() {
        return Err(Error::InvalidArgument("no verdicts".into()));
    }
    Ok(verdicts.iter().filter(|v| v.is_correct).count() as f64 / verdicts.len() as f64)
}

/// Accuracy over the examples of `dataset` that carry annotations, or `None`
/// when none do.
pub fn dataset_accuracy(dataset: &Dataset) -> Result<Option<f64>> {
    let verdicts = dataset
        .examples
        .iter()
        .filter_map(|e| e.annotations.as_ref().filter(|a| !a.is_empty()).map(|a| (e.id(), a)))
        .map(|(id, records)| aggregate_annotations(id, records))
        .collect::<Result<Vec<_>>>()?;
    if verdicts.is_empty() {
        return Ok(None);
    }
    answering_accuracy(&verdicts).map(Some)
}

/// Mean evaluator score of one greedy generation per question, each scored
/// against references drawn from that question's candidates.
pub fn gava_score_dataset<G: Generator, E: Evaluator + ?Sized>(
    model: &G,
    dataset: &Dataset,
    evaluator: &E,
    policy: ReferencePolicy,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty dataset".into()));
    }
    let prepared = dataset
        .examples
        .par_iter()
        .map(|e| {
            let answer = model.greedy(&e.question, &e.candidate_texts())?;
            let refs = references_for_example(e, policy)?;
            Ok((answer.text, refs))
        })
        .collect::<Result<Vec<_>>>()?;
    let requests: Vec<ScoreRequest<'_>> = dataset
        .examples
        .iter()
        .zip(&prepared)
        .map(|(e, (answer, refs))| ScoreRequest {
            question: &e.question,
            answer,
            references: refs,
        })
        .collect();
    let scores = evaluator.score_batch(&requests)?;
    Ok(scores.iter().map(|s| s.value()).sum::<f64>() / scores.len() as f64)
}

/// A named column of per-system metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricColumn {
    pub name: String,
    pub values: Vec<f64>,
}

impl MetricColumn {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

fn check_pair(x: &MetricColumn, y: &MetricColumn) -> Result<()> {
    if x.values.len() != y.values.len() {
        return Err(Error::InvalidArgument(format!(
            "columns `{}` ({}) and `{}` ({}) differ in length",
            x.name,
            x.values.len(),
            y.name,
            y.values.len()
        )));
    }
    if x.values.len() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least two systems".into()));
    }
    if x.values.iter().chain(&y.values).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric column value".into()));
    }
    Ok(())
}

fn pearson_values(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Sample Pearson correlation.
pub fn pearson(x: &MetricColumn, y: &MetricColumn) -> Result<f64> {
    check_pair(x, y)?;
    pearson_values(&x.values, &y.values).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "zero variance in `{}` or `{}`",
            x.name, y.name
        ))
    })
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Spearman's rank correlation: Pearson over average ranks.
pub fn spearman(x: &MetricColumn, y: &MetricColumn) -> Result<f64> {
    check_pair(x, y)?;
    pearson_values(&average_ranks(&x.values), &average_ranks(&y.values)).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "`{}` or `{}` is constant; rank correlation undefined",
            x.name, y.name
        ))
    })
}

/// Per-system metric table: one reference column (human judgments) and any
/// number of automatic-metric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationStudy {
    pub systems: Vec<String>,
    pub reference: MetricColumn,
    pub metrics: Vec<MetricColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson: BTreeMap<String, f64>,
    pub spearman: BTreeMap<String, f64>,
}

impl CorrelationStudy {
    /// Parses a CSV with header `system,manual,<metric>...`.
    pub fn from_csv(input: impl Read) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "system" || &headers[1] != "manual" {
            return Err(Error::InvalidData(
                "correlation CSV header must start with `system,manual` and name at least one metric".into(),
            ));
        }
        let mut systems = Vec::new();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len() - 1];
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            systems.push(record[0].to_string());
            for (col, cell) in record.iter().skip(1).enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::InvalidData(format!(
                        "row {}: `{}` value `{cell}` is not a number",
                        row + 2,
                        &headers[col + 1]
                    ))
                })?;
                columns[col].push(v);
            }
        }
        let mut columns = columns.into_iter();
        let reference = MetricColumn::new("manual", columns.next().unwrap_or_default());
        let metrics = headers
            .iter()
            .skip(2)
            .zip(columns)
            .map(|(name, values)| MetricColumn::new(name, values))
            .collect();
        Ok(Self {
            systems,
            reference,
            metrics,
        })
    }

    pub fn run(&self) -> Result<CorrelationReport> {
        let mut report = CorrelationReport {
            pearson: BTreeMap::new(),
            spearman: BTreeMap::new(),
        };
        for m in &self.metrics {
            report.pearson.insert(m.name.clone(), pearson(&self.reference, m)?);
            report.spearman.insert(m.name.clone(), spearman(&self.reference, m)?);
        }
        Ok(report)
    }
}
