//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use std::collections::HashMap;

use gava_core::data::{AnswerCandidate, Label};

pub fn naive_f1(a: &str, b: &str) -> f64 {
    let count = |s: &str| {
        let mut m: HashMap<String, usize> = HashMap::new();
        for t in s.split_whitespace() {
            *m.entry(t.to_lowercase()).or_default() += 1;
        }
        m
    };
    let (ca, cb) = (count(a), count(b));
    let (na, nb): (usize, usize) = (ca.values().sum(), cb.values().sum());
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let common: usize = ca.iter().map(|(t, n)| (*n).min(*cb.get(t).unwrap_or(&0))).sum();
    2.0 * common as f64 / (na + nb) as f64
}

pub fn naive_oracle(answer: &str, positives: &[&str], negatives: &[&str]) -> f64 {
    let best = |refs: &[&str]| refs.iter().map(|r| naive_f1(answer, r)).fold(0.0, f64::max);
    (best(positives) - 0.5 * best(negatives)).clamp(0.0, 1.0)
}

/// Labeled candidates split into reference lists, dropping `exclude` unless
/// that would leave no positive.
pub fn labeled_refs<'a>(candidates: &'a [AnswerCandidate], exclude: Option<&str>) -> (Vec<&'a str>, Vec<&'a str>) {
    let split = |skip: Option<&str>| {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for c in candidates {
            if Some(c.text.as_str()) == skip {
                continue;
            }
            match c.label {
                Some(Label::Correct) => pos.push(c.text.as_str()),
                Some(Label::Incorrect) => neg.push(c.text.as_str()),
                None => {}
            }
        }
        (pos, neg)
    };
    let (pos, neg) = split(exclude);
    if pos.is_empty() {
        split(None)
    } else {
        (pos, neg)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

pub fn brute_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}
