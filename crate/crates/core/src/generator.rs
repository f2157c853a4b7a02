//! Answer generators.
//!
//! [`Generator`] is the contract the training strategies drive: sample answers,
//! produce a greedy answer, compute a weighted loss with its gradient, and take a
//! training step. [`GeneratorParams`] implements it as a log-linear copy
//! generator: given a question and its candidates it "generates" by selecting a
//! candidate, with `p(a_i) ∝ exp(w · φ(q, a_i) / T)`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{GenQaExample, GeneratedAnswer, Origin, Question};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::text::{token_f1, token_f1_tokens, token_set, tokens};

pub const FEATURE_LEN: usize = 4;

/// Candidate length (in tokens) at which the length feature saturates.
const LENGTH_SCALE: f64 = 50.0;

/// `[token-F1(q, a), min(|a| / 50, 1), question-token coverage, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_LEN]);

impl FeatureVector {
    pub fn dot(&self, weights: &[f64; FEATURE_LEN]) -> f64 {
        self.0.iter().zip(weights).map(|(x, w)| x * w).sum()
    }
}

pub fn featurize(question: &Question, candidate: &str) -> Result<FeatureVector> {
    let q = tokens(&question.text);
    let c = tokens(candidate);
    if q.is_empty() || c.is_empty() {
        return Err(Error::InvalidArgument("cannot featurize empty text".into()));
    }
    let in_candidate = token_set(candidate);
    let covered = q.iter().filter(|t| in_candidate.contains(*t)).count();
    Ok(FeatureVector([
        token_f1_tokens(&q, &c),
        (c.len() as f64 / LENGTH_SCALE).min(1.0),
        covered as f64 / q.len() as f64,
        1.0,
    ]))
}

fn feature_matrix<S: AsRef<str>>(question: &Question, candidates: &[S]) -> Result<Vec<FeatureVector>> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("candidate list is empty".into()));
    }
    candidates.iter().map(|c| featurize(question, c.as_ref())).collect()
}

/// Trainable state of the log-linear generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub weights: [f64; FEATURE_LEN],
    pub version: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self::zeros()
    }
}

impl GeneratorParams {
    pub fn zeros() -> Self {
        Self {
            weights: [0.0; FEATURE_LEN],
            version: 0,
        }
    }

    pub fn from_weights(weights: [f64; FEATURE_LEN]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!("weights {weights:?}")));
        }
        Ok(Self { weights, version: 0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub temperature: f64,
    pub sample_count: usize,
    /// Collapse identical sampled texts, keeping the highest log-probability.
    pub dedupe: bool,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            sample_count: 5,
            dedupe: true,
        }
    }
}

impl DecodingConfig {
    pub fn greedy() -> Self {
        Self {
            temperature: 0.0,
            sample_count: 1,
            dedupe: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature {} must be a finite non-negative number",
                self.temperature
            )));
        }
        if self.sample_count == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// `instance_weight · L_G`.
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub weight_applied: f64,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn distribution_from_features(weights: &[f64; FEATURE_LEN], features: &[FeatureVector], temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = features.iter().map(|f| f.dot(weights)).collect();
    if temperature == 0.0 {
        let mut p = vec![0.0; logits.len()];
        p[argmax(&logits)] = 1.0;
        return p;
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `p_i ∝ exp(w · φ(q, a_i) / T)`; `T = 0` gives a one-hot vector at the
/// first maximal logit.
pub fn candidate_distribution<S: AsRef<str>>(
    params: &GeneratorParams,
    question: &Question,
    candidates: &[S],
    temperature: f64,
) -> Result<Vec<f64>> {
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature {temperature}")));
    }
    let features = feature_matrix(question, candidates)?;
    Ok(distribution_from_features(&params.weights, &features, temperature))
}

/// `log p_i` at temperature 1, computed in log space.
pub fn candidate_log_probs<S: AsRef<str>>(
    params: &GeneratorParams,
    question: &Question,
    candidates: &[S],
) -> Result<Vec<f64>> {
    let features = feature_matrix(question, candidates)?;
    let logits: Vec<f64> = features.iter().map(|f| f.dot(&params.weights)).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(logits.into_iter().map(|l| (l - log_z).min(0.0)).collect())
}

/// Draws `sample_count` candidates by inverse-CDF sampling from
/// [`candidate_distribution`]: each draw takes one `next_f64` from
/// `SplitMix64::new(seed)` and picks the first index whose cumulative
/// probability exceeds it.
pub fn sample_generations<S: AsRef<str>>(
    params: &GeneratorParams,
    question: &Question,
    candidates: &[S],
    decoding: &DecodingConfig,
    seed: u64,
) -> Result<Vec<GeneratedAnswer>> {
    decoding.validate()?;
    let p = candidate_distribution(params, question, candidates, decoding.temperature)?;
    let mut rng = SplitMix64::new(seed);
    let mut out: Vec<GeneratedAnswer> = Vec::with_capacity(decoding.sample_count);
    for _ in 0..decoding.sample_count {
        let u = rng.next_f64();
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                pick = Some(i);
                break;
            }
        }
        // Rounding can leave the total just below u; fall back to the last
        // index with non-zero mass.
        let idx = pick.unwrap_or_else(|| p.iter().rposition(|&x| x > 0.0).unwrap_or(0));
        let answer = GeneratedAnswer::new(candidates[idx].as_ref(), p[idx].ln(), Origin::Sampled)?;
        if decoding.dedupe {
            if let Some(existing) = out.iter_mut().find(|g| g.text == answer.text) {
                if answer.logprob > existing.logprob {
                    *existing = answer;
                }
                continue;
            }
        }
        out.push(answer);
    }
    Ok(out)
}

/// The temperature-0 generation.
pub fn greedy_generation<S: AsRef<str>>(
    params: &GeneratorParams,
    question: &Question,
    candidates: &[S],
) -> Result<GeneratedAnswer> {
    let features = feature_matrix(question, candidates)?;
    let logits: Vec<f64> = features.iter().map(|f| f.dot(&params.weights)).collect();
    let idx = argmax(&logits);
    let p = distribution_from_features(&params.weights, &features, 1.0);
    GeneratedAnswer::new(candidates[idx].as_ref(), p[idx].ln(), Origin::Sampled)
}

/// Index of the candidate with the highest token-F1 against `target`, first on ties.
pub fn align_target<S: AsRef<str>>(target: &str, candidates: &[S]) -> Result<usize> {
    if candidates.is_empty() || target.trim().is_empty() {
        return Err(Error::InvalidArgument(
            "target alignment needs a target and at least one candidate".into(),
        ));
    }
    let f1: Vec<f64> = candidates.iter().map(|c| token_f1(target, c.as_ref())).collect();
    Ok(argmax(&f1))
}

/// Weighted cross-entropy of the aligned target and its gradient.
///
/// `L_G = −log p(align_target(t) | q, a_1..a_k)` at temperature 1,
/// `loss = weight · L_G`, `gradient = weight · Σ_i (p_i − y_i) φ_i`.
pub fn loss_and_gradient(params: &GeneratorParams, example: &GenQaExample, instance_weight: f64) -> Result<LossReport> {
    if !(0.0..=1.0).contains(&instance_weight) {
        return Err(Error::InvalidArgument(format!(
            "instance weight {instance_weight} outside [0, 1]"
        )));
    }
    let target = example
        .target
        .as_deref()
        .ok_or_else(|| Error::MissingTarget(example.id().to_string()))?;
    let texts = example.candidate_texts();
    let target_idx = align_target(target, &texts)?;
    let features = feature_matrix(&example.question, &texts)?;

    let logits: Vec<f64> = features.iter().map(|f| f.dot(&params.weights)).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let cross_entropy = (log_z - logits[target_idx]).max(0.0);
    let p: Vec<f64> = logits.iter().map(|l| (l - log_z).exp()).collect();

    let mut gradient = vec![0.0; FEATURE_LEN];
    for (i, (f, pi)) in features.iter().zip(&p).enumerate() {
        let residual = pi - if i == target_idx { 1.0 } else { 0.0 };
        for (g, x) in gradient.iter_mut().zip(f.0) {
            *g += residual * x;
        }
    }
    for g in &mut gradient {
        *g *= instance_weight;
    }
    Ok(LossReport {
        loss: instance_weight * cross_entropy,
        gradient,
        weight_applied: instance_weight,
    })
}

/// One gradient-descent step on the mean of the batch gradients.
pub fn train_step(params: &GeneratorParams, batch: &[(&GenQaExample, f64)], lr: f64) -> Result<GeneratorParams> {
    step_with_loss(params, batch, lr).map(|(p, _)| p)
}

fn step_with_loss(params: &GeneratorParams, batch: &[(&GenQaExample, f64)], lr: f64) -> Result<(GeneratorParams, f64)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("training batch is empty".into()));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {lr} must be positive")));
    }
    let mut mean = [0.0; FEATURE_LEN];
    let mut loss = 0.0;
    for (example, weight) in batch {
        let report = loss_and_gradient(params, example, *weight)?;
        if report.gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient for example `{}`", example.id())));
        }
        for (m, g) in mean.iter_mut().zip(&report.gradient) {
            *m += g;
        }
        loss += report.loss;
    }
    let n = batch.len() as f64;
    let mut weights = params.weights;
    for (w, m) in weights.iter_mut().zip(mean) {
        *w -= lr * (m / n);
    }
    Ok((
        GeneratorParams {
            weights,
            version: params.version + 1,
        },
        loss / n,
    ))
}

/// What a trainable answer generator must provide to the strategies.
pub trait Generator: Clone + Send + Sync {
    fn sample(&self, question: &Question, candidates: &[String], decoding: &DecodingConfig, seed: u64) -> Result<Vec<GeneratedAnswer>>;

    fn greedy(&self, question: &Question, candidates: &[String]) -> Result<GeneratedAnswer>;

    /// Log-probability of copying each candidate, at temperature 1.
    fn log_probs(&self, question: &Question, candidates: &[String]) -> Result<Vec<f64>>;

    fn loss(&self, example: &GenQaExample, instance_weight: f64) -> Result<LossReport>;

    /// Applies one update and returns the new model with the mean reported loss
    /// of the batch before the update.
    fn step(&self, batch: &[(&GenQaExample, f64)], lr: f64) -> Result<(Self, f64)>;
}

impl Generator for GeneratorParams {
    fn sample(&self, question: &Question, candidates: &[String], decoding: &DecodingConfig, seed: u64) -> Result<Vec<GeneratedAnswer>> {
        sample_generations(self, question, candidates, decoding, seed)
    }

    fn greedy(&self, question: &Question, candidates: &[String]) -> Result<GeneratedAnswer> {
        greedy_generation(self, question, candidates)
    }

    fn log_probs(&self, question: &Question, candidates: &[String]) -> Result<Vec<f64>> {
        candidate_log_probs(self, question, candidates)
    }

    fn loss(&self, example: &GenQaExample, instance_weight: f64) -> Result<LossReport> {
        loss_and_gradient(self, example, instance_weight)
    }

    fn step(&self, batch: &[(&GenQaExample, f64)], lr: f64) -> Result<(Self, f64)> {
        step_with_loss(self, batch, lr)
    }
}

pub const CHECKPOINT_SCHEMA: u32 = 1;

/// Saved generator state with the metadata of the run that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: u32,
    pub weights: [f64; FEATURE_LEN],
    pub version: u64,
    pub config_hash: String,
    pub epoch: usize,
    pub dev_gava_score: f64,
}

impl Checkpoint {
    pub fn new(params: &GeneratorParams, config_hash: impl Into<String>, epoch: usize, dev_gava_score: f64) -> Self {
        Self {
            schema: CHECKPOINT_SCHEMA,
            weights: params.weights,
            version: params.version,
            config_hash: config_hash.into(),
            epoch,
            dev_gava_score,
        }
    }

    pub fn params(&self) -> Result<GeneratorParams> {
        let mut p = GeneratorParams::from_weights(self.weights)?;
        p.version = self.version;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cp: Checkpoint = serde_json::from_str(&text)?;
        if cp.schema != CHECKPOINT_SCHEMA {
            return Err(Error::InvalidData(format!("unsupported checkpoint schema {}", cp.schema)));
        }
        Ok(cp)
    }
}
