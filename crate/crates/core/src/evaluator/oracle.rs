use crate::data::Question;
use crate::error::{Error, Result};
use crate::text::{token_f1_tokens, tokens};

use super::{check_answer, Evaluator, ReferenceSet, UnitScore};

/// Weight of the best negative-reference overlap in [`overlap_oracle_score`].
pub const NEGATIVE_PENALTY: f64 = 0.5;

/// Deterministic stand-in for a learned evaluator.
///
/// `score = clamp(max F1(answer, positive) − 0.5 · max F1(answer, negative), 0, 1)`
/// over lowercased whitespace tokens. The question does not enter the score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OverlapOracle;

pub fn overlap_oracle_score(_question: &Question, answer: &str, refs: &ReferenceSet) -> Result<UnitScore> {
    check_answer(answer)?;
    if refs.positives().is_empty() {
        return Err(Error::Evaluator(
            "overlap oracle needs at least one positive reference".into(),
        ));
    }
    let answer = tokens(answer);
    let best = |refs: &[String]| {
        refs.iter()
            .map(|r| token_f1_tokens(&answer, &tokens(r)))
            .fold(0.0_f64, f64::max)
    };
    UnitScore::clamped(best(refs.positives()) - NEGATIVE_PENALTY * best(refs.negatives()))
}

impl Evaluator for OverlapOracle {
    fn score(&self, question: &Question, answer: &str, references: &ReferenceSet) -> Result<UnitScore> {
        overlap_oracle_score(question, answer, references)
    }
}
