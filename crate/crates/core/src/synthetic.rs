//! Seeded synthetic GenQA corpora.
//!
//! Each question asks for a relation between pseudo-words and comes with `k`
//! labeled candidates drawn from four kinds:
//!
//! - a concise correct answer restating part of the question plus the right entity;
//! - optionally a verbose correct answer wrapping the concise one in filler;
//! - optionally a distractor restating part of the question with a wrong entity;
//! - optionally a near miss with one question word and the wrong entity;
//! - off-topic filler sentences.
//!
//! The human target is the concise answer, except that with probability
//! `target_noise` it copies an incorrect candidate instead.

use serde::{Deserialize, Serialize};

use crate::data::{AnswerCandidate, Dataset, GenQaExample, Label, Question};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub questions: usize,
    pub context_size: usize,
    pub seed: u64,
    pub target_noise: f64,
    pub near_miss_rate: f64,
    pub verbose_rate: f64,
    /// Probability of an incorrect answer that restates the whole question.
    pub distractor_rate: f64,
    /// Prefix for question ids.
    pub id_prefix: String,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            questions: 300,
            context_size: 5,
            seed: 0,
            target_noise: 0.0,
            near_miss_rate: 0.5,
            verbose_rate: 0.5,
            distractor_rate: 0.5,
            id_prefix: "syn".into(),
        }
    }
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "kl"];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

fn pick<'a>(rng: &mut SplitMix64, items: &'a [&'a str]) -> &'a str {
    items[rng.below(items.len())]
}

fn word(rng: &mut SplitMix64) -> String {
    let syllables = 2 + rng.below(2);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(pick(rng, ONSETS));
        w.push_str(pick(rng, NUCLEI));
    }
    w
}

fn words(rng: &mut SplitMix64, n: usize) -> Vec<String> {
    (0..n).map(|_| word(rng)).collect()
}

fn sample_from(rng: &mut SplitMix64, pool: &[String], n: usize) -> Vec<String> {
    (0..n).map(|_| pool[rng.below(pool.len())].clone()).collect()
}

fn off_topic(rng: &mut SplitMix64, filler: &[String]) -> String {
    let len = 8 + rng.below(5);
    sample_from(rng, filler, len).join(" ")
}

/// A random subsequence of `tokens` with `n` elements, order kept.
fn restate(rng: &mut SplitMix64, tokens: &[String], n: usize) -> Vec<String> {
    let mut idx: Vec<usize> = (0..tokens.len()).collect();
    rng.shuffle(&mut idx);
    let mut keep = idx[..n.min(tokens.len())].to_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| tokens[i].clone()).collect()
}

fn example(rng: &mut SplitMix64, index: usize, config: &SyntheticConfig) -> Result<GenQaExample> {
    let topic = words(rng, 4);
    let entity = word(rng);
    let wrong = word(rng);
    let filler = words(rng, 12);
    let [w1, w2, w3, w4] = [&topic[0], &topic[1], &topic[2], &topic[3]];

    let text = format!("what is the {w1} {w2} of {w3} {w4}");
    let question = Question::new(format!("{}-{index:04}", config.id_prefix), text.clone())?;
    let q_tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();

    let concise = {
        let n = 3 + rng.below(4);
        let mut parts = restate(rng, &q_tokens, n);
        parts.push(entity.clone());
        parts.join(" ")
    };
    let mut candidates = vec![AnswerCandidate::labeled(concise.clone(), Label::Correct)];
    if candidates.len() < config.context_size && rng.next_f64() < config.verbose_rate {
        let (before, after) = (1 + rng.below(4), 1 + rng.below(4));
        let mut parts = sample_from(rng, &filler, before);
        parts.push(concise.clone());
        parts.extend(sample_from(rng, &filler, after));
        candidates.push(AnswerCandidate::labeled(parts.join(" "), Label::Correct));
    }
    if candidates.len() < config.context_size && rng.next_f64() < config.distractor_rate {
        let (n, extra) = (2 + rng.below(6), rng.below(3));
        let mut parts = restate(rng, &q_tokens, n);
        parts.push(wrong.clone());
        parts.extend(words(rng, extra));
        candidates.push(AnswerCandidate::labeled(parts.join(" "), Label::Incorrect));
    }
    if candidates.len() < config.context_size && rng.next_f64() < config.near_miss_rate {
        let extra = words(rng, 3);
        candidates.push(AnswerCandidate::labeled(
            format!("{w3} {wrong} {} {} {}", extra[0], extra[1], extra[2]),
            Label::Incorrect,
        ));
    }
    while candidates.len() < config.context_size {
        candidates.push(AnswerCandidate::labeled(off_topic(rng, &filler), Label::Incorrect));
    }
    rng.shuffle(&mut candidates);

    let noisy = rng.next_f64() < config.target_noise;
    let target = candidates
        .iter()
        .filter(|c| noisy && c.label == Some(Label::Incorrect))
        .last()
        .map(|c| c.text.clone())
        .unwrap_or(concise);
    Ok(GenQaExample::new(question, candidates, Some(target)))
}

/// Generates a labeled corpus; the same config always yields the same corpus.
pub fn generate(config: &SyntheticConfig) -> Result<Dataset> {
    if config.context_size == 0 {
        return Err(Error::InvalidArgument("context_size must be at least 1".into()));
    }
    for (name, p) in [
        ("target_noise", config.target_noise),
        ("near_miss_rate", config.near_miss_rate),
        ("verbose_rate", config.verbose_rate),
        ("distractor_rate", config.distractor_rate),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("{name} {p} outside [0, 1]")));
        }
    }
    let mut rng = SplitMix64::new(config.seed);
    let examples = (0..config.questions)
        .map(|i| example(&mut rng, i, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(examples, format!("synthetic-{}", config.seed)))
}
