//! Evaluator-supervised training of answer-generation (GenQA) models.
//!
//! The crate is split along the pipeline:
//!
//! - [`data`]: examples, datasets, JSONL I/O, validation and deterministic splits.
//! - [`evaluator`]: the multi-reference answer evaluator (prompt encoding, reference
//!   selection, the scoring contract, a token-overlap oracle backend, an external
//!   process backend, training-instance construction and AUROC).
//! - [`generator`]: the generator contract and a log-linear copy generator with
//!   analytic gradients.
//! - [`strategies`]: static augmentation, dynamic augmentation, loss weighting and
//!   the shared training loop with early stopping.
//! - [`metrics`]: annotation aggregation, accuracy, dataset-level evaluator score and
//!   the Pearson/Spearman correlation harness.
//! - [`synthetic`]: seeded synthetic corpora for experiments and tests.

pub mod data;
pub mod error;
pub mod evaluator;
pub mod generator;
pub mod metrics;
pub mod rng;
pub mod strategies;
pub mod synthetic;
pub mod text;

pub use data::{
    AnnotationRecord, AnswerCandidate, Dataset, DatasetMetadata, GenQaExample, GeneratedAnswer,
    Label, Origin, Provenance, Question,
};
pub use error::{Error, Result};
pub use evaluator::{Evaluator, OverlapOracle, ReferenceSet, UnitScore};
pub use generator::{DecodingConfig, Generator, GeneratorParams};
pub use strategies::{Strategy, StrategyConfig, TrainingHistory};
