//! Multi-reference answer evaluation.
//!
//! An evaluator scores a `(question, answer)` pair against a set of positive
//! (correct) and negative (incorrect) reference answers and returns a correctness
//! probability in `[0, 1]`. Backends implement [`Evaluator`]; two ship here:
//! [`OverlapOracle`], a deterministic token-overlap scorer, and
//! [`ExternalEvaluator`], which delegates to a child process over JSONL.

mod auroc;
mod external;
mod instances;
mod oracle;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use auroc::{auroc, select_checkpoint_by_auroc, EvaluatorTrainingConfig};
pub use external::{read_score_responses, write_score_requests, ExternalEvaluator};
pub use instances::{build_gava_training_instances, GavaTrainingInstance};
pub use oracle::{overlap_oracle_score, OverlapOracle, NEGATIVE_PENALTY};

use crate::data::{AnswerCandidate, GenQaExample, Label, Question};
use crate::error::{Error, Result};

/// A probability-like score, always within `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct UnitScore(f64);

impl UnitScore {
    pub const ZERO: UnitScore = UnitScore(0.0);
    pub const ONE: UnitScore = UnitScore(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::InvalidArgument(format!("score {value} outside [0, 1]")))
        }
    }

    /// Clamps a finite value into `[0, 1]`; NaN is rejected.
    pub fn clamped(value: f64) -> Result<Self> {
        if value.is_nan() {
            return Err(Error::NonFinite("score is NaN".into()));
        }
        Ok(Self(value.clamp(0.0, 1.0)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for UnitScore {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        UnitScore::new(value)
    }
}

impl From<UnitScore> for f64 {
    fn from(s: UnitScore) -> f64 {
        s.0
    }
}

impl fmt::Display for UnitScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Ordered positive and negative reference answers.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReferenceSet {
    positives: Vec<String>,
    negatives: Vec<String>,
}

impl ReferenceSet {
    pub fn new(positives: Vec<String>, negatives: Vec<String>) -> Result<Self> {
        if positives.iter().chain(&negatives).any(|r| r.trim().is_empty()) {
            return Err(Error::InvalidArgument("empty reference answer".into()));
        }
        Ok(Self {
            positives,
            negatives,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn positives(&self) -> &[String] {
        &self.positives
    }

    pub fn negatives(&self) -> &[String] {
        &self.negatives
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, text: &str) -> bool {
        self.positives.iter().chain(&self.negatives).any(|r| r == text)
    }

    /// The same set with every reference whose text equals `text` removed.
    pub fn without(&self, text: &str) -> Self {
        Self {
            positives: self.positives.iter().filter(|r| *r != text).cloned().collect(),
            negatives: self.negatives.iter().filter(|r| *r != text).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentRole {
    Question,
    Answer,
    PositiveReference,
    NegativeReference,
}

impl SegmentRole {
    pub fn prompt(self) -> &'static str {
        match self {
            SegmentRole::Question => "question:",
            SegmentRole::Answer => "answer:",
            SegmentRole::PositiveReference => "correct:",
            SegmentRole::NegativeReference => "wrong:",
        }
    }
}

/// The evaluator input: tagged segments and their flat rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSequence {
    pub segments: Vec<(SegmentRole, String)>,
    pub rendered: String,
}

/// `question: <q> answer: <a>` followed by `correct: <r>` for each positive and
/// `wrong: <r>` for each negative, single-space separated.
pub fn encode_multi_reference(question: &Question, answer: &str, refs: &ReferenceSet) -> PromptSequence {
    let mut segments = Vec::with_capacity(2 + refs.len());
    segments.push((SegmentRole::Question, question.text.clone()));
    segments.push((SegmentRole::Answer, answer.to_string()));
    segments.extend(
        refs.positives()
            .iter()
            .map(|r| (SegmentRole::PositiveReference, r.clone())),
    );
    segments.extend(
        refs.negatives()
            .iter()
            .map(|r| (SegmentRole::NegativeReference, r.clone())),
    );
    let rendered = segments
        .iter()
        .map(|(role, text)| format!("{} {}", role.prompt(), text))
        .collect::<Vec<_>>()
        .join(" ");
    PromptSequence { segments, rendered }
}

/// Picks at most `n` references from labeled candidates.
///
/// Up to `⌈n/2⌉` correct candidates come first, then incorrect ones fill the
/// remaining slots; if the incorrect ones run out, further correct ones fill the
/// rest. Dataset order is kept inside each group. When no candidate carries a
/// label, the first `n` candidates are all used as positives. Unlabeled
/// candidates in a partially labeled list are ignored.
pub fn select_references(candidates: &[AnswerCandidate], n: usize) -> Result<ReferenceSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("reference limit n must be at least 1".into()));
    }
    if candidates.iter().all(|c| c.label.is_none()) {
        let positives = candidates.iter().take(n).map(|c| c.text.clone()).collect();
        return ReferenceSet::new(positives, Vec::new());
    }
    let correct: Vec<&str> = candidates
        .iter()
        .filter(|c| c.label == Some(Label::Correct))
        .map(|c| c.text.as_str())
        .collect();
    let incorrect: Vec<&str> = candidates
        .iter()
        .filter(|c| c.label == Some(Label::Incorrect))
        .map(|c| c.text.as_str())
        .collect();

    let mut n_pos = correct.len().min(n.div_ceil(2));
    let n_neg = incorrect.len().min(n - n_pos);
    n_pos = correct.len().min(n - n_neg);

    ReferenceSet::new(
        correct[..n_pos].iter().map(|s| s.to_string()).collect(),
        incorrect[..n_neg].iter().map(|s| s.to_string()).collect(),
    )
}

/// How references are assembled for an example's context candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferencePolicy {
    pub max_references: usize,
    /// Also use the human target `t`, as a correct reference, when present.
    pub include_target: bool,
}

impl Default for ReferencePolicy {
    fn default() -> Self {
        Self {
            max_references: 5,
            include_target: false,
        }
    }
}

/// References built from an example's candidates `{a_1..a_k}`, honoring their
/// labels when present.
pub fn references_for_example(example: &GenQaExample, policy: ReferencePolicy) -> Result<ReferenceSet> {
    match (&example.target, policy.include_target) {
        (Some(t), true) => {
            let labeled = example.candidates.iter().any(|c| c.label.is_some());
            let target = AnswerCandidate {
                text: t.clone(),
                label: labeled.then_some(Label::Correct),
            };
            let mut pool = Vec::with_capacity(example.candidates.len() + 1);
            pool.push(target);
            pool.extend(example.candidates.iter().cloned());
            select_references(&pool, policy.max_references)
        }
        _ => select_references(&example.candidates, policy.max_references),
    }
}

/// One scoring call.
#[derive(Debug, Clone, Copy)]
pub struct ScoreRequest<'a> {
    pub question: &'a Question,
    pub answer: &'a str,
    pub references: &'a ReferenceSet,
}

/// Scoring contract for evaluator backends.
///
/// Scores must be deterministic for fixed backend parameters and lie in `[0, 1]`.
/// Implementations are shared across threads.
pub trait Evaluator: Send + Sync {
    fn score(&self, question: &Question, answer: &str, references: &ReferenceSet) -> Result<UnitScore>;

    /// Scores many requests, preserving order. Backends with per-call overhead
    /// should override this.
    fn score_batch(&self, requests: &[ScoreRequest<'_>]) -> Result<Vec<UnitScore>> {
        requests
            .par_iter()
            .map(|r| self.score(r.question, r.answer, r.references))
            .collect()
    }
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn score(&self, question: &Question, answer: &str, references: &ReferenceSet) -> Result<UnitScore> {
        (**self).score(question, answer, references)
    }

    fn score_batch(&self, requests: &[ScoreRequest<'_>]) -> Result<Vec<UnitScore>> {
        (**self).score_batch(requests)
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn score(&self, question: &Question, answer: &str, references: &ReferenceSet) -> Result<UnitScore> {
        (**self).score(question, answer, references)
    }

    fn score_batch(&self, requests: &[ScoreRequest<'_>]) -> Result<Vec<UnitScore>> {
        (**self).score_batch(requests)
    }
}

pub(crate) fn check_answer(answer: &str) -> Result<()> {
    if answer.trim().is_empty() {
        return Err(Error::InvalidArgument("answer to score is empty".into()));
    }
    Ok(())
}
