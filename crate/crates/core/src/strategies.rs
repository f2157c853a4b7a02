//! Evaluator-supervised training strategies.
//!
//! - **Static augmentation (SDA)**: before training, sample answers from a base
//!   model, keep those the evaluator scores at or above `theta`, and add each
//!   survivor as an alternate target of its question.
//! - **Dynamic augmentation (DDA)**: at the start of every epoch, pool the
//!   candidates, the human target and the filtered samples of the current model,
//!   rank the pool by evaluator score, and rebuild the example with the best member
//!   as target and the next `k` as context.
//! - **Loss weighting (LW)**: scale each example's loss by one minus the
//!   evaluator score of the model's current greedy answer.
//!
//! All strategies share [`run_training`]: shuffled mini-batches, a dev-set
//! evaluator score after every epoch, early stopping, and best-epoch selection.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AnswerCandidate, Dataset, GenQaExample, GeneratedAnswer, Origin, Provenance};
use crate::error::{Error, Result};
use crate::evaluator::{references_for_example, Evaluator, ReferencePolicy, ReferenceSet, ScoreRequest, UnitScore};
use crate::generator::{DecodingConfig, Generator};
use crate::metrics::gava_score_dataset;
use crate::rng::{stream_seed, SplitMix64};

const SDA_STREAM: u64 = 1;
const DDA_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Baseline,
    Sda,
    Dda,
    Lw,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Strategy::Baseline),
            "sda" => Ok(Strategy::Sda),
            "dda" => Ok(Strategy::Dda),
            "lw" => Ok(Strategy::Lw),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy `{other}` (expected baseline, sda, dda or lw)"
            ))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Baseline => "baseline",
            Strategy::Sda => "sda",
            Strategy::Dda => "dda",
            Strategy::Lw => "lw",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    /// Minimum evaluator score for a sampled answer to be kept.
    pub theta: f64,
    /// Number of context candidates `k`.
    pub context_size: usize,
    /// Answers sampled per question `l`.
    pub sample_count: usize,
    /// Maximum number of evaluator references `n`.
    pub max_references: usize,
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub temperature: f64,
    pub dedupe: bool,
    pub references_include_target: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Baseline,
            theta: 0.9,
            context_size: 5,
            sample_count: 5,
            max_references: 5,
            epochs: 15,
            patience: 3,
            lr: 5e-6,
            batch_size: 32,
            seed: 0,
            temperature: 1.0,
            dedupe: true,
            references_include_target: false,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta {} outside [0, 1]", self.theta));
        }
        for (name, value) in [
            ("context_size", self.context_size),
            ("sample_count", self.sample_count),
            ("max_references", self.max_references),
            ("epochs", self.epochs),
            ("patience", self.patience),
            ("batch_size", self.batch_size),
        ] {
            if value == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        self.decoding().validate()
    }

    pub fn decoding(&self) -> DecodingConfig {
        DecodingConfig {
            temperature: self.temperature,
            sample_count: self.sample_count,
            dedupe: self.dedupe,
        }
    }

    pub fn reference_policy(&self) -> ReferencePolicy {
        ReferencePolicy {
            max_references: self.max_references,
            include_target: self.references_include_target,
        }
    }
}

/// Keeps the answers scoring at least `theta`, in input order.
pub fn filter_generations(scored: &[GeneratedAnswer], theta: f64) -> Result<Vec<GeneratedAnswer>> {
    let mut kept = Vec::new();
    for g in scored {
        let score = g
            .score
            .ok_or_else(|| Error::InvalidArgument(format!("generation `{}` is unscored", g.text)))?;
        if score.value() >= theta {
            kept.push(g.clone());
        }
    }
    Ok(kept)
}

fn score_against<E: Evaluator + ?Sized>(
    evaluator: &E,
    example: &GenQaExample,
    answers: Vec<GeneratedAnswer>,
    references: &[ReferenceSet],
) -> Result<Vec<GeneratedAnswer>> {
    let requests: Vec<ScoreRequest<'_>> = answers
        .iter()
        .zip(references)
        .map(|(a, r)| ScoreRequest {
            question: &example.question,
            answer: &a.text,
            references: r,
        })
        .collect();
    let scores = evaluator.score_batch(&requests)?;
    Ok(answers
        .into_iter()
        .zip(scores)
        .map(|(a, s)| a.with_score(s))
        .collect())
}

/// Samples `l` answers and keeps those scoring at least `theta` against the
/// example's candidate references.
pub fn sample_and_filter<G: Generator, E: Evaluator + ?Sized>(
    model: &G,
    example: &GenQaExample,
    evaluator: &E,
    config: &StrategyConfig,
    seed: u64,
) -> Result<Vec<GeneratedAnswer>> {
    let samples = model.sample(&example.question, &example.candidate_texts(), &config.decoding(), seed)?;
    let refs = references_for_example(example, config.reference_policy())?;
    let shared = vec![refs; samples.len()];
    let scored = score_against(evaluator, example, samples, &shared)?;
    filter_generations(&scored, config.theta)
}

/// Static augmentation.
///
/// Every original example is kept (tagged `original` unless it already carries
/// a provenance); each surviving sample `g` of example `i` adds
/// `(q, a_1..a_k, g)` with id `<id>#sda<j>` after all originals. Example `i`
/// samples with seed `stream_seed(config.seed, [1, i])`.
pub fn augment_static<G: Generator, E: Evaluator + ?Sized>(
    dataset: &Dataset,
    base: &G,
    evaluator: &E,
    config: &StrategyConfig,
) -> Result<Dataset> {
    config.validate()?;
    let survivors = dataset
        .examples
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            if e.candidates.is_empty() {
                return Err(Error::InvalidData(format!("example `{}` has no candidates", e.id())));
            }
            sample_and_filter(base, e, evaluator, config, stream_seed(config.seed, &[SDA_STREAM, i as u64]))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut examples: Vec<GenQaExample> = dataset
        .examples
        .iter()
        .cloned()
        .map(|mut e| {
            e.provenance.get_or_insert(Provenance::Original);
            e
        })
        .collect();
    for (original, kept) in dataset.examples.iter().zip(survivors) {
        for (j, g) in kept.into_iter().enumerate() {
            let mut question = original.question.clone();
            question.id = format!("{}#sda{j}", original.question.id);
            examples.push(GenQaExample {
                question,
                candidates: original.candidates.clone(),
                target: Some(g.text),
                annotations: None,
                provenance: Some(Provenance::Sda),
            });
        }
    }
    Ok(Dataset {
        examples,
        metadata: dataset.metadata.clone(),
    })
}

/// The pooled answers `A = {a_1..a_k, t} ∪ G` with their evaluator scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub members: Vec<GeneratedAnswer>,
    pub scores: Vec<UnitScore>,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Pool indices by descending score, lower index first on ties.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.members.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].value().total_cmp(&self.scores[a].value()));
        order
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicRebuild {
    pub example: GenQaExample,
    pub pool: CandidatePool,
    /// Pool index of the member chosen as target.
    pub target_member: usize,
    /// Size of the filtered sample set `G`.
    pub filtered: usize,
}

/// References used to score one pool member: the example's candidate
/// references minus any reference equal to the member's own text. If that
/// removal would leave no correct reference, the full set is used.
pub fn pool_member_references(full: &ReferenceSet, candidates: &[AnswerCandidate], text: &str) -> ReferenceSet {
    if !candidates.iter().any(|c| c.text == text) {
        return full.clone();
    }
    let reduced = full.without(text);
    if reduced.positives().is_empty() {
        full.clone()
    } else {
        reduced
    }
}

/// Dynamic rebuild of one example with the current model.
///
/// The new target is the top-scoring pool member; the new context is the next
/// `k` members by score, skipping exact duplicates of the target text. When the
/// pool runs short, the lowest-scoring original candidates are recycled.
pub fn rebuild_example_dynamic<G: Generator, E: Evaluator + ?Sized>(
    example: &GenQaExample,
    model: &G,
    evaluator: &E,
    config: &StrategyConfig,
    seed: u64,
) -> Result<DynamicRebuild> {
    if example.candidates.is_empty() {
        return Err(Error::InvalidData(format!("example `{}` has no candidates", example.id())));
    }
    let k = config.context_size;
    let filtered = sample_and_filter(model, example, evaluator, config, seed)?;
    let n_filtered = filtered.len();

    let texts = example.candidate_texts();
    let mut members = Vec::with_capacity(texts.len() + 1 + n_filtered);
    let logprobs = model.log_probs(&example.question, &texts)?;
    for (text, lp) in texts.iter().zip(&logprobs) {
        members.push(GeneratedAnswer::new(text.clone(), *lp, Origin::Candidate)?);
    }
    if let Some(t) = &example.target {
        let idx = crate::generator::align_target(t, &texts)?;
        members.push(GeneratedAnswer::new(t.clone(), logprobs[idx], Origin::Target)?);
    }
    members.extend(filtered.into_iter().map(|mut g| {
        g.score = None;
        g
    }));

    let full = references_for_example(example, config.reference_policy())?;
    let refs: Vec<ReferenceSet> = members
        .iter()
        .map(|m| pool_member_references(&full, &example.candidates, &m.text))
        .collect();
    let members = score_against(evaluator, example, members, &refs)?;
    let scores: Vec<UnitScore> = members.iter().map(|m| m.score.expect("scored")).collect();
    let pool = CandidatePool { members, scores };

    let ranking = pool.ranking();
    let target_member = ranking[0];
    let target_text = pool.members[target_member].text.clone();
    let mut context: Vec<usize> = ranking[1..]
        .iter()
        .copied()
        .filter(|&i| pool.members[i].text != target_text)
        .take(k)
        .collect();
    if context.len() < k {
        let mut originals: Vec<usize> = (0..pool.len())
            .filter(|&i| pool.members[i].origin == Origin::Candidate)
            .collect();
        originals.sort_by(|&a, &b| pool.scores[a].value().total_cmp(&pool.scores[b].value()));
        let preferred: Vec<usize> = originals
            .iter()
            .copied()
            .filter(|&i| pool.members[i].text != target_text)
            .collect();
        let recycle = if preferred.is_empty() { originals } else { preferred };
        context.extend(recycle.iter().cycle().take(k - context.len()));
    }

    let label_of = |text: &str| example.candidates.iter().find(|c| c.text == text).and_then(|c| c.label);
    let candidates = context
        .iter()
        .map(|&i| {
            let text = pool.members[i].text.clone();
            AnswerCandidate {
                label: label_of(&text),
                text,
            }
        })
        .collect();
    let rebuilt = GenQaExample {
        question: example.question.clone(),
        candidates,
        target: Some(target_text),
        annotations: None,
        provenance: Some(Provenance::Dda),
    };
    Ok(DynamicRebuild {
        example: rebuilt,
        pool,
        target_member,
        filtered: n_filtered,
    })
}

/// Loss-weighting factor `1 − s`.
pub fn lw_weight(score: UnitScore) -> f64 {
    1.0 - score.value()
}

/// Per-instance LW weights from the model's greedy answers.
pub fn lw_weights<G: Generator, E: Evaluator + ?Sized>(
    model: &G,
    examples: &[&GenQaExample],
    evaluator: &E,
    policy: ReferencePolicy,
) -> Result<Vec<f64>> {
    let prepared = examples
        .par_iter()
        .map(|e| {
            let g = model.greedy(&e.question, &e.candidate_texts())?;
            Ok((g.text, references_for_example(e, policy)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let requests: Vec<ScoreRequest<'_>> = examples
        .iter()
        .zip(&prepared)
        .map(|(e, (answer, refs))| ScoreRequest {
            question: &e.question,
            answer,
            references: refs,
        })
        .collect();
    Ok(evaluator.score_batch(&requests)?.into_iter().map(lw_weight).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss_mean: f64,
    pub dev_gava_score: f64,
    /// SDA: augmented examples in the training set; DDA: filtered samples
    /// pooled this epoch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub augmented_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the highest dev score, first on ties.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch)
    }

    pub fn dev_scores(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.dev_gava_score).collect()
    }

    /// The epoch records as a JSON array.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.epochs)?;
        s.push('\n');
        Ok(s)
    }
}

/// Trains from `initial` with the configured strategy and returns the
/// best-epoch model with the per-epoch history.
///
/// Baseline and LW need a target on every training example. SDA trains on a
/// dataset already passed through [`augment_static`] and skips examples
/// without a target. DDA rebuilds every training example from its original at
/// the start of each epoch with the model of that moment.
pub fn run_training<G: Generator, E: Evaluator + ?Sized>(
    initial: &G,
    train: &Dataset,
    dev: &Dataset,
    evaluator: &E,
    config: &StrategyConfig,
) -> Result<(G, TrainingHistory)> {
    config.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::InvalidArgument("training and dev sets must be non-empty".into()));
    }
    let base: Vec<&GenQaExample> = match config.strategy {
        Strategy::Baseline | Strategy::Lw => {
            if let Some(e) = train.examples.iter().find(|e| e.target.is_none()) {
                return Err(Error::MissingTarget(e.id().to_string()));
            }
            train.examples.iter().collect()
        }
        Strategy::Sda => {
            let with_target: Vec<_> = train.examples.iter().filter(|e| e.target.is_some()).collect();
            if with_target.is_empty() {
                return Err(Error::InvalidData("no training example has a target".into()));
            }
            with_target
        }
        Strategy::Dda => train.examples.iter().collect(),
    };
    let policy = config.reference_policy();

    let mut model = initial.clone();
    let mut best_model = initial.clone();
    let mut best: Option<(usize, f64)> = None;
    let mut since_best = 0;
    let mut records = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let (examples, augmented_size): (Vec<GenQaExample>, Option<usize>) = match config.strategy {
            Strategy::Dda => {
                let snapshot = model.clone();
                let rebuilt = base
                    .par_iter()
                    .enumerate()
                    .map(|(i, e)| {
                        let seed = stream_seed(config.seed, &[DDA_STREAM, epoch as u64, i as u64]);
                        rebuild_example_dynamic(e, &snapshot, evaluator, config, seed)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let filtered = rebuilt.iter().map(|r| r.filtered).sum();
                (rebuilt.into_iter().map(|r| r.example).collect(), Some(filtered))
            }
            Strategy::Sda => (
                base.iter().map(|e| (*e).clone()).collect(),
                Some(train.count_provenance(Provenance::Sda)),
            ),
            _ => (base.iter().map(|e| (*e).clone()).collect(), None),
        };

        let mut order: Vec<usize> = (0..examples.len()).collect();
        SplitMix64::new(stream_seed(config.seed, &[SHUFFLE_STREAM, epoch as u64])).shuffle(&mut order);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&GenQaExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let weights = match config.strategy {
                Strategy::Lw => lw_weights(&model, &batch, evaluator, policy)?,
                _ => vec![1.0; batch.len()],
            };
            let weighted: Vec<(&GenQaExample, f64)> = batch.into_iter().zip(weights).collect();
            let (next, mean_loss) = model.step(&weighted, config.lr)?;
            loss_sum += mean_loss * weighted.len() as f64;
            model = next;
        }

        let dev_score = gava_score_dataset(&model, dev, evaluator, policy)?;
        records.push(EpochRecord {
            epoch,
            train_loss_mean: loss_sum / examples.len() as f64,
            dev_gava_score: dev_score,
            augmented_size,
        });

        if best.map_or(true, |(_, s)| dev_score > s) {
            best = Some((epoch, dev_score));
            best_model = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = epoch < config.epochs;
                break;
            }
        }
    }

    let (best_epoch, _) = best.expect("at least one epoch runs");
    Ok((
        best_model,
        TrainingHistory {
            epochs: records,
            best_epoch,
            stopped_early,
        },
    ))
}

/// Output of the full static-augmentation pipeline.
#[derive(Debug, Clone)]
pub struct SdaRun<G> {
    pub base_model: G,
    pub base_history: TrainingHistory,
    pub augmented: Dataset,
    pub model: G,
    pub history: TrainingHistory,
}

impl<G> SdaRun<G> {
    pub fn augmented_size(&self) -> usize {
        self.augmented.count_provenance(Provenance::Sda)
    }
}

/// Trains a base model on `train`, augments `train` with it, then continues
/// training from the base model on the augmented set.
pub fn run_sda_pipeline<G: Generator, E: Evaluator + ?Sized>(
    initial: &G,
    train: &Dataset,
    dev: &Dataset,
    evaluator: &E,
    config: &StrategyConfig,
) -> Result<SdaRun<G>> {
    let base_config = StrategyConfig {
        strategy: Strategy::Baseline,
        ..config.clone()
    };
    let (base_model, base_history) = run_training(initial, train, dev, evaluator, &base_config)?;
    let augmented = augment_static(train, &base_model, evaluator, config)?;
    let sda_config = StrategyConfig {
        strategy: Strategy::Sda,
        ..config.clone()
    };
    let (model, history) = run_training(&base_model, &augmented, dev, evaluator, &sda_config)?;
    Ok(SdaRun {
        base_model,
        base_history,
        augmented,
        model,
        history,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::data::{Label, Question};
    use crate::evaluator::OverlapOracle;
    use crate::generator::GeneratorParams;

    struct ByText(HashMap<String, f64>);

    impl Evaluator for ByText {
        fn score(&self, _: &crate::data::Question, answer: &str, _: &ReferenceSet) -> Result<UnitScore> {
            UnitScore::new(*self.0.get(answer).unwrap_or(&0.0))
        }
    }

    struct Constant(f64);

    impl Evaluator for Constant {
        fn score(&self, _: &crate::data::Question, _: &str, _: &ReferenceSet) -> Result<UnitScore> {
            UnitScore::new(self.0)
        }
    }

    /// Returns `seq[i]` for every request of the i-th batch.
    struct Scripted {
        seq: Vec<f64>,
        calls: AtomicUsize,
    }

    impl Evaluator for Scripted {
        fn score(&self, _: &crate::data::Question, _: &str, _: &ReferenceSet) -> Result<UnitScore> {
            unreachable!()
        }

        fn score_batch(&self, requests: &[ScoreRequest<'_>]) -> Result<Vec<UnitScore>> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            let s = UnitScore::new(self.seq[i.min(self.seq.len() - 1)])?;
            Ok(vec![s; requests.len()])
        }
    }

    fn scored(values: &[f64]) -> Vec<GeneratedAnswer> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                GeneratedAnswer::new(format!("g{i}"), -1.0, Origin::Sampled)
                    .unwrap()
                    .with_score(UnitScore::new(v).unwrap())
            })
            .collect()
    }

    fn example(id: &str, target: Option<&str>) -> GenQaExample {
        GenQaExample::new(
            Question::new(id, "who wrote the book").unwrap(),
            vec![
                AnswerCandidate::labeled("the book was written by ann", Label::Correct),
                AnswerCandidate::labeled("bob wrote a song", Label::Incorrect),
                AnswerCandidate::labeled("the weather is nice", Label::Incorrect),
            ],
            target.map(str::to_string),
        )
    }

    fn config(strategy: Strategy) -> StrategyConfig {
        StrategyConfig {
            strategy,
            context_size: 3,
            sample_count: 3,
            lr: 0.5,
            batch_size: 2,
            epochs: 5,
            ..Default::default()
        }
    }

    #[test]
    fn filter_examples() {
        let g = scored(&[0.95, 0.60, 0.91]);
        let kept: Vec<_> = filter_generations(&g, 0.9).unwrap().into_iter().map(|g| g.text).collect();
        assert_eq!(kept, ["g0", "g2"]);
        assert_eq!(filter_generations(&g, 0.0).unwrap().len(), 3);
        assert!(filter_generations(&g, 0.99).unwrap().is_empty());
        let unscored = GeneratedAnswer::new("x", 0.0, Origin::Sampled).unwrap();
        assert!(filter_generations(&[unscored], 0.5).is_err());
    }

    #[test]
    fn filter_is_monotone_in_theta() {
        let g = scored(&[0.1, 0.5, 0.7, 0.9, 0.95, 0.3]);
        let mut prev = usize::MAX;
        for theta in [0.0, 0.3, 0.5, 0.7, 0.9, 1.0] {
            let n = filter_generations(&g, theta).unwrap().len();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn lw_weight_examples() {
        assert_eq!(lw_weight(UnitScore::ONE), 0.0);
        assert_eq!(lw_weight(UnitScore::ZERO), 1.0);
        assert!((lw_weight(UnitScore::new(0.73).unwrap()) - 0.27).abs() < 1e-15);
    }

    #[test]
    fn augment_appends_survivors() {
        let ds = Dataset::new(vec![example("q1", Some("ann"))], "t");
        let eval = ByText(HashMap::from([
            ("the book was written by ann".to_string(), 0.95),
            ("bob wrote a song".to_string(), 0.92),
            ("the weather is nice".to_string(), 0.1),
        ]));
        // uniform copy distribution with dedupe off: three draws
        let cfg = StrategyConfig {
            dedupe: false,
            ..config(Strategy::Sda)
        };
        let out = augment_static(&ds, &GeneratorParams::zeros(), &eval, &cfg).unwrap();
        let samples = GeneratorParams::zeros()
            .sample(&ds.examples[0].question, &ds.examples[0].candidate_texts(), &cfg.decoding(), stream_seed(0, &[1, 0]))
            .unwrap();
        let expected = samples.iter().filter(|g| eval.0[&g.text] >= 0.9).count();
        assert_eq!(out.len(), 1 + expected);
        assert_eq!(out.examples[0].question, ds.examples[0].question);
        assert_eq!(out.examples[0].provenance, Some(Provenance::Original));
        for (j, e) in out.examples[1..].iter().enumerate() {
            assert_eq!(e.id(), format!("q1#sda{j}"));
            assert_eq!(e.candidates, ds.examples[0].candidates);
            assert_eq!(e.provenance, Some(Provenance::Sda));
        }
    }

    #[test]
    fn augment_at_theta_one_keeps_input() {
        let ds = Dataset::new(vec![example("a", Some("ann")), example("b", None)], "t");
        let cfg = StrategyConfig {
            theta: 1.0,
            ..config(Strategy::Sda)
        };
        // the oracle penalizes overlap with the incorrect references, so nothing reaches 1
        let out = augment_static(&ds, &GeneratorParams::zeros(), &OverlapOracle, &cfg).unwrap();
        assert_eq!(out.len(), ds.len());
        for (a, b) in out.examples.iter().zip(&ds.examples) {
            assert_eq!((&a.question, &a.candidates, &a.target), (&b.question, &b.candidates, &b.target));
        }
    }

    #[test]
    fn dynamic_pool_size_without_dedupe() {
        let e = example("q", Some("written by ann"));
        let cfg = StrategyConfig {
            theta: 0.0,
            dedupe: false,
            ..config(Strategy::Dda)
        };
        let r = rebuild_example_dynamic(&e, &GeneratorParams::zeros(), &OverlapOracle, &cfg, 7).unwrap();
        assert_eq!(r.filtered, 3);
        assert_eq!(r.pool.len(), 3 + 1 + 3);
        assert_eq!(r.pool.members[3].origin, Origin::Target);
        assert_eq!(r.example.candidates.len(), 3);
    }

    #[test]
    fn dynamic_keeps_dominant_target() {
        let e = example("q", Some("ann"));
        let eval = ByText(HashMap::from([
            ("ann".to_string(), 1.0),
            ("the book was written by ann".to_string(), 0.8),
            ("bob wrote a song".to_string(), 0.2),
            ("the weather is nice".to_string(), 0.5),
        ]));
        let cfg = StrategyConfig {
            theta: 1.0,
            ..config(Strategy::Dda)
        };
        let r = rebuild_example_dynamic(&e, &GeneratorParams::zeros(), &eval, &cfg, 1).unwrap();
        assert_eq!(r.filtered, 0);
        assert_eq!(r.example.target.as_deref(), Some("ann"));
        let texts = r.example.candidate_texts();
        assert_eq!(texts, ["the book was written by ann", "the weather is nice", "bob wrote a song"]);
        assert_eq!(r.example.candidates[0].label, Some(Label::Correct));
        assert_eq!(r.example.provenance, Some(Provenance::Dda));
    }

    #[test]
    fn dynamic_tie_prefers_lower_pool_index() {
        let e = example("q", Some("ann"));
        let cfg = StrategyConfig {
            theta: 1.0,
            ..config(Strategy::Dda)
        };
        let r = rebuild_example_dynamic(&e, &GeneratorParams::zeros(), &Constant(0.5), &cfg, 1).unwrap();
        assert_eq!(r.target_member, 0);
        assert_eq!(r.example.target.as_deref(), Some("the book was written by ann"));
        // pool of 4 leaves 3 for the context after the target
        assert_eq!(r.example.candidate_texts(), ["bob wrote a song", "the weather is nice", "ann"]);
    }

    #[test]
    fn dynamic_pads_short_pool() {
        let e = example("q", None);
        let cfg = StrategyConfig {
            theta: 1.0,
            context_size: 3,
            ..config(Strategy::Dda)
        };
        let eval = ByText(HashMap::from([
            ("the book was written by ann".to_string(), 0.9),
            ("bob wrote a song".to_string(), 0.2),
            ("the weather is nice".to_string(), 0.5),
        ]));
        let r = rebuild_example_dynamic(&e, &GeneratorParams::zeros(), &eval, &cfg, 1).unwrap();
        assert_eq!(r.example.target.as_deref(), Some("the book was written by ann"));
        assert_eq!(
            r.example.candidate_texts(),
            ["the weather is nice", "bob wrote a song", "bob wrote a song"]
        );
    }

    #[test]
    fn self_reference_excluded_unless_last_positive() {
        let e = GenQaExample::new(
            Question::new("q", "who").unwrap(),
            vec![
                AnswerCandidate::labeled("ann", Label::Correct),
                AnswerCandidate::labeled("ann smith", Label::Correct),
                AnswerCandidate::labeled("bob", Label::Incorrect),
            ],
            None,
        );
        let full = references_for_example(&e, ReferencePolicy::default()).unwrap();
        let r = pool_member_references(&full, &e.candidates, "ann");
        assert!(!r.contains("ann") && r.contains("ann smith"));
        assert_eq!(pool_member_references(&full, &e.candidates, "bob").negatives().len(), 0);
        assert_eq!(pool_member_references(&full, &e.candidates, "carl"), full);
        let lone = full.without("ann");
        assert_eq!(pool_member_references(&lone, &e.candidates, "ann smith"), lone);
    }

    #[test]
    fn early_stopping_returns_best_epoch() {
        let train = Dataset::new((0..4).map(|i| example(&format!("t{i}"), Some("ann"))).collect(), "train");
        let dev = Dataset::new(vec![example("d", Some("ann"))], "dev");
        let eval = Scripted {
            seq: vec![0.50, 0.60, 0.59, 0.58, 0.57, 0.9],
            calls: AtomicUsize::new(0),
        };
        let cfg = StrategyConfig {
            epochs: 10,
            ..config(Strategy::Baseline)
        };
        let (model, h) = run_training(&GeneratorParams::zeros(), &train, &dev, &eval, &cfg).unwrap();
        assert_eq!(h.epochs.len(), 5);
        assert_eq!(h.best_epoch, 2);
        assert!(h.stopped_early);
        let one = StrategyConfig { epochs: 2, ..cfg };
        let eval = Scripted {
            seq: vec![0.5, 0.6],
            calls: AtomicUsize::new(0),
        };
        let (two_epochs, _) = run_training(&GeneratorParams::zeros(), &train, &dev, &eval, &one).unwrap();
        assert_eq!(model, two_epochs);
    }

    #[test]
    fn perfect_evaluator_freezes_lw() {
        let train = Dataset::new((0..4).map(|i| example(&format!("t{i}"), Some("ann"))).collect(), "train");
        let dev = train.clone();
        let init = GeneratorParams::zeros();
        let (lw, _) = run_training(&init, &train, &dev, &Constant(1.0), &config(Strategy::Lw)).unwrap();
        assert_eq!(lw.weights, init.weights);
        // the first epoch ties the best, so compare the trained model directly
        let (b, _) = init.step(&train.examples.iter().map(|e| (e, 1.0)).collect::<Vec<_>>(), 0.5).unwrap();
        assert_ne!(b.weights, init.weights);
    }

    #[test]
    fn lw_and_baseline_need_targets() {
        let train = Dataset::new(vec![example("a", None)], "train");
        for s in [Strategy::Baseline, Strategy::Lw] {
            let err = run_training(&GeneratorParams::zeros(), &train, &train, &OverlapOracle, &config(s)).unwrap_err();
            assert!(matches!(err, Error::MissingTarget(_)));
        }
        // dynamic rebuilds supply their own targets
        assert!(run_training(&GeneratorParams::zeros(), &train, &train, &OverlapOracle, &config(Strategy::Dda)).is_ok());
    }

    #[test]
    fn training_is_reproducible() {
        let train = Dataset::new((0..6).map(|i| example(&format!("t{i}"), Some("ann"))).collect(), "train");
        for s in [Strategy::Baseline, Strategy::Lw, Strategy::Dda] {
            let a = run_training(&GeneratorParams::zeros(), &train, &train, &OverlapOracle, &config(s)).unwrap();
            let b = run_training(&GeneratorParams::zeros(), &train, &train, &OverlapOracle, &config(s)).unwrap();
            assert_eq!(a, b);
            let best = a.1.best().unwrap().dev_gava_score;
            assert!(a.1.epochs.iter().all(|r| r.dev_gava_score <= best));
        }
    }

    #[test]
    fn config_validation() {
        assert!(StrategyConfig::default().validate().is_ok());
        assert!(StrategyConfig { theta: 1.5, ..Default::default() }.validate().is_err());
        assert!(StrategyConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert_eq!("lw".parse::<Strategy>().unwrap(), Strategy::Lw);
        assert!("adam".parse::<Strategy>().is_err());
    }
}
