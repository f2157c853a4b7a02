//! Shared inputs for the benchmarks.

use gava_core::synthetic::{generate, SyntheticConfig};
use gava_core::{Dataset, GeneratorParams};

pub fn corpus(questions: usize) -> Dataset {
    generate(&SyntheticConfig {
        questions,
        seed: 11,
        ..Default::default()
    })
    .expect("default synthetic config is valid")
}

pub fn model() -> GeneratorParams {
    GeneratorParams::from_weights([1.5, -0.5, 1.0, 0.0]).expect("finite weights")
}

/// `n` scores on a coarse grid with alternating labels, so ties are common.
pub fn scored_labels(n: usize) -> (Vec<f64>, Vec<bool>) {
    let scores = (0..n).map(|i| ((i * 7919) % 101) as f64 / 100.0).collect();
    let labels = (0..n).map(|i| (i * 31) % 3 == 0).collect();
    (scores, labels)
}
