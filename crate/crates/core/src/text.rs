//! Whitespace tokenization and token-level F1.

use std::collections::{HashMap, HashSet};

/// Lowercased whitespace tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

pub fn token_set(text: &str) -> HashSet<String> {
    tokens(text).into_iter().collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut map = HashMap::with_capacity(tokens.len());
    for t in tokens {
        *map.entry(t.as_str()).or_insert(0) += 1;
    }
    map
}

/// Size of the multiset intersection of two token lists.
pub fn common_tokens(a: &[String], b: &[String]) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let small = counts(small);
    let large = counts(large);
    small
        .iter()
        .map(|(tok, &n)| n.min(large.get(tok).copied().unwrap_or(0)))
        .sum()
}

/// Harmonic mean of token precision and recall, `2·common / (|a| + |b|)`.
/// Zero when either side has no tokens.
pub fn token_f1(a: &str, b: &str) -> f64 {
    token_f1_tokens(&tokens(a), &tokens(b))
}

pub fn token_f1_tokens(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let common = common_tokens(a, b);
    2.0 * common as f64 / (a.len() + b.len()) as f64
}
