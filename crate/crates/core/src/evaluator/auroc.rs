use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Area under the ROC curve: the fraction of (positive, negative) pairs in which
/// the positive scores strictly higher, with tied pairs counted as one half.
///
/// Runs in `O(m log m)` by sorting once and counting, per group of tied scores,
/// the negatives ranked strictly below. All counts are integers, so the result
/// matches the pairwise definition exactly.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score in AUROC input".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidArgument("AUROC needs both classes".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    let mut negatives_below = 0u64;
    let mut wins = 0u64;
    let mut ties = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        wins += pos * negatives_below;
        ties += pos * neg;
        negatives_below += neg;
        i = j;
    }
    Ok((wins as f64 + 0.5 * ties as f64) / (positives * negatives) as f64)
}

/// Optimizer settings for training a learned evaluator backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorTrainingConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Dev-set evaluations per epoch; each is a checkpoint candidate.
    pub evals_per_epoch: usize,
}

impl Default for EvaluatorTrainingConfig {
    fn default() -> Self {
        Self {
            lr: 1e-6,
            batch_size: 32,
            epochs: 20,
            evals_per_epoch: 4,
        }
    }
}

/// Index of the checkpoint with the highest dev AUROC (first on ties).
///
/// Each entry holds one checkpoint's dev scores and the gold labels.
pub fn select_checkpoint_by_auroc(checkpoints: &[(Vec<f64>, Vec<bool>)]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (scores, labels)) in checkpoints.iter().enumerate() {
        let a = auroc(scores, labels)?;
        if best.map_or(true, |(_, b)| a > b) {
            best = Some((i, a));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidArgument("no checkpoints to select from".into()))
}
