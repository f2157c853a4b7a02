//! Domain records, the JSONL dataset format, validation and splits.
//!
//! One example per line:
//!
//! ```json
//! {"id": "q1", "question": "who won?", "candidates": [{"text": "Alice won.", "label": "correct"}],
//!  "target": "Alice won the race.", "annotations": [{"rater_id": "r1", "judgment": 1}]}
//! ```
//!
//! `label`, `target` and `annotations` may be `null`. Augmented datasets carry an
//! extra `"provenance"` field.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::UnitScore;
use crate::rng::SplitMix64;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidArgument("question text is empty".into()));
        }
        Ok(Self {
            id: id.into(),
            text,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Correct,
    Incorrect,
}

/// A candidate answer sentence. `label: None` means unlabeled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerCandidate {
    pub text: String,
    #[serde(default)]
    pub label: Option<Label>,
}

impl AnswerCandidate {
    pub fn unlabeled(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            label: None,
        }
    }

    pub fn labeled(text: impl Into<String>, label: Label) -> Self {
        Self {
            text: text.into(),
            label: Some(label),
        }
    }

    pub fn is_correct(&self) -> bool {
        self.label == Some(Label::Correct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub rater_id: String,
    /// 0/1 for binary raters, anything in `[0, 1]` for graded ones.
    pub judgment: f64,
}

impl AnnotationRecord {
    pub fn new(rater_id: impl Into<String>, judgment: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&judgment) {
            return Err(Error::InvalidArgument(format!(
                "judgment {judgment} outside [0, 1]"
            )));
        }
        Ok(Self {
            rater_id: rater_id.into(),
            judgment,
        })
    }
}

/// Where an example in an augmented dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Sda,
    Dda,
}

/// One training unit: a question, its `k` context candidates and an optional target.
#[derive(Debug, Clone, PartialEq)]
pub struct GenQaExample {
    pub question: Question,
    pub candidates: Vec<AnswerCandidate>,
    pub target: Option<String>,
    pub annotations: Option<Vec<AnnotationRecord>>,
    pub provenance: Option<Provenance>,
}

impl GenQaExample {
    pub fn new(question: Question, candidates: Vec<AnswerCandidate>, target: Option<String>) -> Self {
        Self {
            question,
            candidates,
            target,
            annotations: None,
            provenance: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.question.id
    }

    pub fn candidate_texts(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.text.clone()).collect()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.candidates.iter().all(|c| c.label.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Sampled,
    Candidate,
    Target,
}

/// An answer produced (or pooled) for a question, with its log-probability under
/// the generator and, once scored, the evaluator score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub text: String,
    pub score: Option<UnitScore>,
    pub logprob: f64,
    pub origin: Origin,
}

impl GeneratedAnswer {
    pub fn new(text: impl Into<String>, logprob: f64, origin: Origin) -> Result<Self> {
        if !logprob.is_finite() || logprob > 0.0 {
            return Err(Error::NonFinite(format!("log-probability {logprob}")));
        }
        Ok(Self {
            text: text.into(),
            score: None,
            logprob,
            origin,
        })
    }

    pub fn with_score(mut self, score: UnitScore) -> Self {
        self.score = Some(score);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub source: String,
    pub schema_version: u32,
}

impl Default for DatasetMetadata {
    fn default() -> Self {
        Self {
            source: String::new(),
            schema_version: SCHEMA_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub examples: Vec<GenQaExample>,
    pub metadata: DatasetMetadata,
}

impl Dataset {
    pub fn new(examples: Vec<GenQaExample>, source: impl Into<String>) -> Self {
        Self {
            examples,
            metadata: DatasetMetadata {
                source: source.into(),
                schema_version: SCHEMA_VERSION,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count_provenance(&self, provenance: Provenance) -> usize {
        self.examples
            .iter()
            .filter(|e| e.provenance == Some(provenance))
            .count()
    }
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ExampleRecord {
    id: String,
    question: String,
    candidates: Vec<AnswerCandidate>,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    annotations: Option<Vec<AnnotationRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

impl From<ExampleRecord> for GenQaExample {
    fn from(r: ExampleRecord) -> Self {
        GenQaExample {
            question: Question {
                id: r.id,
                text: r.question,
            },
            candidates: r.candidates,
            target: r.target,
            annotations: r.annotations,
            provenance: r.provenance,
        }
    }
}

impl From<&GenQaExample> for ExampleRecord {
    fn from(e: &GenQaExample) -> Self {
        ExampleRecord {
            id: e.question.id.clone(),
            question: e.question.text.clone(),
            candidates: e.candidates.clone(),
            target: e.target.clone(),
            annotations: e.annotations.clone(),
            provenance: e.provenance,
        }
    }
}

/// Serializes one example as a single JSONL line (without the newline).
pub fn example_to_json_line(example: &GenQaExample) -> Result<String> {
    Ok(serde_json::to_string(&ExampleRecord::from(example))?)
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyQuestion,
    EmptyCandidate { index: usize },
    CandidateCount { expected: usize, found: usize },
    EmptyTarget,
    AnnotationOutOfRange { index: usize, judgment: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyQuestion => write!(f, "question text is empty"),
            Violation::EmptyCandidate { index } => write!(f, "candidate {index} is empty"),
            Violation::CandidateCount { expected, found } => {
                write!(f, "expected {expected} candidates, found {found}")
            }
            Violation::EmptyTarget => write!(f, "target is present but empty"),
            Violation::AnnotationOutOfRange { index, judgment } => {
                write!(f, "annotation {index} judgment {judgment} outside [0, 1]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

pub fn validate_example(example: &GenQaExample, expected_k: usize) -> ValidationReport {
    let mut violations = Vec::new();
    if example.question.text.trim().is_empty() {
        violations.push(Violation::EmptyQuestion);
    }
    for (index, c) in example.candidates.iter().enumerate() {
        if c.text.trim().is_empty() {
            violations.push(Violation::EmptyCandidate { index });
        }
    }
    if example.candidates.len() != expected_k {
        violations.push(Violation::CandidateCount {
            expected: expected_k,
            found: example.candidates.len(),
        });
    }
    if matches!(&example.target, Some(t) if t.trim().is_empty()) {
        violations.push(Violation::EmptyTarget);
    }
    for (index, a) in example.annotations.iter().flatten().enumerate() {
        if !(0.0..=1.0).contains(&a.judgment) {
            violations.push(Violation::AnnotationOutOfRange {
                index,
                judgment: a.judgment,
            });
        }
    }
    ValidationReport { violations }
}

// ---------------------------------------------------------------------------
// Loading and saving
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    pub expected_k: usize,
    /// Strict mode rejects examples with fewer than `expected_k` candidates.
    /// Longer lists are truncated in both modes.
    pub strict: bool,
}

impl LoadOptions {
    pub fn strict(expected_k: usize) -> Self {
        Self {
            expected_k,
            strict: true,
        }
    }

    pub fn lenient(expected_k: usize) -> Self {
        Self {
            expected_k,
            strict: false,
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, options: LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    if options.expected_k == 0 {
        return Err(Error::InvalidArgument("expected_k must be positive".into()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_dataset(BufReader::new(file), options, source)
}

pub fn read_dataset(reader: impl BufRead, options: LoadOptions, source: impl Into<String>) -> Result<Dataset> {
    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Record {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ExampleRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut example = GenQaExample::from(record);
        example.candidates.truncate(options.expected_k);

        let mut report = validate_example(&example, options.expected_k);
        if !options.strict {
            report
                .violations
                .retain(|v| !matches!(v, Violation::CandidateCount { .. }));
            if example.candidates.is_empty() {
                report.violations.push(Violation::CandidateCount {
                    expected: options.expected_k,
                    found: 0,
                });
            }
        }
        if !report.is_valid() {
            return Err(Error::Record {
                line: line_no,
                message: format!("example `{}`: {report}", example.id()),
            });
        }
        if !seen.insert(example.question.id.clone()) {
            return Err(Error::Record {
                line: line_no,
                message: format!("duplicate example id `{}`", example.id()),
            });
        }
        examples.push(example);
    }
    Ok(Dataset::new(examples, source))
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_dataset(&mut out, dataset).and_then(|_| out.flush().map_err(|e| Error::io(path, e)))
}

pub fn write_dataset(out: &mut impl Write, dataset: &Dataset) -> Result<()> {
    for example in &dataset.examples {
        let line = example_to_json_line(example)?;
        writeln!(out, "{line}").map_err(|e| Error::io("<dataset writer>", e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

/// Deterministic train/dev partition.
///
/// The dev set gets `round(n · dev_fraction)` examples, clamped to `[1, n - 1]`
/// when `n ≥ 2`. Membership comes from a seeded shuffle; both parts keep the
/// original example order.
pub fn split_dataset(dataset: &Dataset, dev_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "dev fraction {dev_fraction} outside (0, 1)"
        )));
    }
    let n = dataset.len();
    let mut dev_count = (n as f64 * dev_fraction).round() as usize;
    if n >= 2 {
        dev_count = dev_count.clamp(1, n - 1);
    }
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let mut is_dev = vec![false; n];
    for &i in &order[..dev_count] {
        is_dev[i] = true;
    }
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for (example, dev_member) in dataset.examples.iter().zip(is_dev) {
        if dev_member {
            dev.push(example.clone());
        } else {
            train.push(example.clone());
        }
    }
    let meta = |suffix: &str| DatasetMetadata {
        source: format!("{}:{suffix}", dataset.metadata.source),
        schema_version: dataset.metadata.schema_version,
    };
    Ok((
        Dataset {
            examples: train,
            metadata: meta("train"),
        },
        Dataset {
            examples: dev,
            metadata: meta("dev"),
        },
    ))
}
