use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, Question};
use crate::error::{Error, Result};

use super::{encode_multi_reference, select_references, ReferenceSet};

/// One labeled evaluator training input: a candidate answer judged against
/// references drawn from the other candidates of its question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GavaTrainingInstance {
    pub question: Question,
    pub answer: String,
    pub label: bool,
    pub references: ReferenceSet,
}

impl GavaTrainingInstance {
    pub fn rendered(&self) -> String {
        encode_multi_reference(&self.question, &self.answer, &self.references).rendered
    }
}

/// Builds one instance per labeled candidate.
///
/// References are selected from the question's other candidates; candidates
/// whose text equals the answer are left out as well, so an answer never
/// appears among its own references.
pub fn build_gava_training_instances(dataset: &Dataset, n: usize) -> Result<Vec<GavaTrainingInstance>> {
    let mut out = Vec::new();
    for example in &dataset.examples {
        for (i, candidate) in example.candidates.iter().enumerate() {
            let label = candidate.label.ok_or_else(|| {
                Error::InvalidData(format!(
                    "example `{}` candidate {i} is unlabeled",
                    example.id()
                ))
            })?;
            let others: Vec<_> = example
                .candidates
                .iter()
                .filter(|c| c.text != candidate.text)
                .cloned()
                .collect();
            out.push(GavaTrainingInstance {
                question: example.question.clone(),
                answer: candidate.text.clone(),
                label: label == Label::Correct,
                references: select_references(&others, n)?,
            });
        }
    }
    Ok(out)
}
