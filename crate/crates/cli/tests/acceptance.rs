//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use gava_core::data::{save_dataset, split_dataset};
use gava_core::evaluator::{auroc, ReferenceSet, ScoreRequest};
use gava_core::generator::{loss_and_gradient, FEATURE_LEN};
use gava_core::rng::SplitMix64;
use gava_core::strategies::{lw_weight, rebuild_example_dynamic, run_sda_pipeline, run_training, TrainingHistory};
use gava_core::synthetic::{generate, SyntheticConfig};
use gava_core::{
    AnswerCandidate, Dataset, Evaluator, GenQaExample, Generator, GeneratorParams, Label, Origin, OverlapOracle,
    Question, Strategy, StrategyConfig, UnitScore,
};
use serde_json::Value;

const CORRELATION_TOL: f64 = 1e-3;
const CORRELATION_BUDGET: Duration = Duration::from_secs(1);
const SWEEP_THETAS: [f64; 3] = [0.5, 0.7, 0.9];
const SWEEP_MIN_QUESTIONS: usize = 200;
const SWEEP_BUDGET: Duration = Duration::from_secs(120);
const LW_DOMINANCE: f64 = 0.6;
const FD_STEP: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-5;
const FD_TRIPLES: u64 = 100;
const DDA_QUESTIONS: usize = 50;
const AUROC_TOL: f64 = 1e-12;
const AUROC_VECTORS: u64 = 1000;
const SCRIPTED_DEV: [f64; 5] = [0.50, 0.60, 0.59, 0.58, 0.57];

type Check = fn() -> (bool, String);

fn main() {
    let checks: [(u8, &str, Check); 9] = [
        (1, "metric correlation with manual scores", correlation_table),
        (2, "threshold sweep", threshold_sweep),
        (3, "loss weighting over baseline", lw_over_baseline),
        (4, "gradient oracle", gradient_oracle),
        (5, "loss weighting formula", lw_formula),
        (6, "dynamic augmentation invariants", dynamic_invariants),
        (7, "auroc equivalence", auroc_equivalence),
        (8, "early stopping", early_stopping),
        (9, "determinism", determinism),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let started = Instant::now();
        let (pass, detail) = check();
        println!(
            "{} criterion {id} ({name}): {detail} [{:.2}s]",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        if !pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Corpus and training settings shared by the strategy comparisons.
fn experiment_corpus(questions: usize) -> (Dataset, Dataset) {
    let ds = generate(&SyntheticConfig {
        questions,
        seed: 0,
        ..Default::default()
    })
    .unwrap();
    split_dataset(&ds, 1.0 / 3.0, 0).unwrap()
}

fn experiment_config(strategy: Strategy) -> StrategyConfig {
    StrategyConfig {
        strategy,
        lr: 2.0,
        batch_size: 8,
        seed: 0,
        ..Default::default()
    }
}

fn best_score(h: &TrainingHistory) -> f64 {
    h.best().unwrap().dev_gava_score
}

fn correlation_table() -> (bool, String) {
    let started = Instant::now();
    let mut out = Vec::new();
    let input = fixture("system_scores.csv");
    let argv = ["correlate", "--input", input.to_str().unwrap()];
    if let Err(e) = gava_cli::run(&argv, &mut out) {
        return (false, format!("correlate failed: {e}"));
    }
    let elapsed = started.elapsed();
    let report: Value = serde_json::from_slice(&out).unwrap();
    let expected = [
        ("pearson", "gava", 0.979),
        ("pearson", "bleurt", -0.429),
        ("pearson", "bertscore", -0.035),
        ("pearson", "bleu", 0.679),
        ("spearman", "gava", 1.000),
        ("spearman", "bleurt", -0.812),
        ("spearman", "bertscore", -0.600),
        ("spearman", "bleu", 0.429),
    ];
    let mut misses = Vec::new();
    for (kind, metric, want) in expected {
        let got = report[kind][metric].as_f64().unwrap_or(f64::NAN);
        if !((got - want).abs() <= CORRELATION_TOL) {
            misses.push(format!("{kind} {metric} {got:.4} vs {want:.3}"));
        }
    }
    let fast = elapsed < CORRELATION_BUDGET;
    let pass = misses.is_empty() && fast;
    let detail = if misses.is_empty() {
        format!("8/8 within {CORRELATION_TOL}, runtime {:.3}s", elapsed.as_secs_f64())
    } else {
        format!(
            "{}/8 within {CORRELATION_TOL}; off: {}; runtime {:.3}s",
            8 - misses.len(),
            misses.join(", "),
            elapsed.as_secs_f64()
        )
    };
    (pass, detail)
}

fn threshold_sweep() -> (bool, String) {
    let started = Instant::now();
    let (train, dev) = experiment_corpus(300);
    let questions = train.len() + dev.len();
    let mut sizes = Vec::new();
    let mut scores = Vec::new();
    for theta in SWEEP_THETAS {
        let cfg = StrategyConfig {
            theta,
            ..experiment_config(Strategy::Sda)
        };
        let run = run_sda_pipeline(&GeneratorParams::zeros(), &train, &dev, &OverlapOracle, &cfg).unwrap();
        sizes.push(run.augmented_size());
        scores.push(best_score(&run.history));
    }
    let elapsed = started.elapsed();
    let monotone = sizes.windows(2).all(|w| w[0] >= w[1]);
    let quality = scores[2] >= scores[0];
    let pass = questions >= SWEEP_MIN_QUESTIONS && monotone && quality && elapsed < SWEEP_BUDGET;
    (
        pass,
        format!(
            "{questions} questions; sizes {sizes:?} for theta {SWEEP_THETAS:?}; best dev score theta=0.9 {:.4} vs theta=0.5 {:.4}",
            scores[2], scores[0]
        ),
    )
}

fn lw_over_baseline() -> (bool, String) {
    let (train, dev) = experiment_corpus(300);
    let run = |s| run_training(&GeneratorParams::zeros(), &train, &dev, &OverlapOracle, &experiment_config(s)).unwrap().1;
    let (base, lw) = (run(Strategy::Baseline), run(Strategy::Lw));
    let common = base.epochs.len().min(lw.epochs.len());
    let dominated = (0..common)
        .filter(|&i| lw.epochs[i].dev_gava_score >= base.epochs[i].dev_gava_score)
        .count();
    let share = dominated as f64 / common as f64;
    let pass = best_score(&lw) >= best_score(&base) && share >= LW_DOMINANCE;
    (
        pass,
        format!(
            "best dev score lw {:.4} vs baseline {:.4}; lw >= baseline in {dominated}/{common} shared epochs",
            best_score(&lw),
            best_score(&base)
        ),
    )
}

const VOCAB: &[&str] = &["who", "what", "is", "the", "capital", "of", "france", "paris", "lyon", "river", "a", "city"];

fn random_sentence(rng: &mut SplitMix64) -> String {
    let n = 1 + rng.below(8);
    (0..n).map(|_| VOCAB[rng.below(VOCAB.len())]).collect::<Vec<_>>().join(" ")
}

fn random_triple(seed: u64) -> (GeneratorParams, GenQaExample, f64) {
    let mut rng = SplitMix64::new(seed);
    let weights = std::array::from_fn(|_| 4.0 * rng.next_f64() - 2.0);
    let k = 1 + rng.below(6);
    let candidates = (0..k).map(|_| AnswerCandidate::unlabeled(random_sentence(&mut rng))).collect();
    let example = GenQaExample::new(
        Question::new("q", random_sentence(&mut rng)).unwrap(),
        candidates,
        Some(random_sentence(&mut rng)),
    );
    (GeneratorParams::from_weights(weights).unwrap(), example, rng.next_f64())
}

fn gradient_oracle() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for seed in 0..FD_TRIPLES {
        let (params, example, w) = random_triple(seed);
        let report = loss_and_gradient(&params, &example, w).unwrap();
        for j in 0..FEATURE_LEN {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus.weights[j] += FD_STEP;
            minus.weights[j] -= FD_STEP;
            let fd = (loss_and_gradient(&plus, &example, w).unwrap().loss
                - loss_and_gradient(&minus, &example, w).unwrap().loss)
                / (2.0 * FD_STEP);
            let a = report.gradient[j];
            // denominators below 1e-3 are floored so exactly-zero components stay comparable
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3));
        }
    }
    (
        worst < FD_REL_TOL,
        format!("{FD_TRIPLES} triples, worst relative error {worst:.2e} (limit {FD_REL_TOL:.0e})"),
    )
}

struct Constant(f64);

impl Evaluator for Constant {
    fn score(&self, _: &Question, _: &str, _: &ReferenceSet) -> gava_core::Result<UnitScore> {
        UnitScore::new(self.0)
    }
}

fn lw_formula() -> (bool, String) {
    let (train, _) = experiment_corpus(60);
    let mut rng = SplitMix64::new(5);
    let mut worst: f64 = 0.0;
    for e in &train.examples {
        let params = GeneratorParams::from_weights(std::array::from_fn(|_| 4.0 * rng.next_f64() - 2.0)).unwrap();
        let g = params.greedy(&e.question, &e.candidate_texts()).unwrap();
        let refs = gava_core::evaluator::references_for_example(e, Default::default()).unwrap();
        let s = OverlapOracle.score(&e.question, &g.text, &refs).unwrap();
        let weighted = loss_and_gradient(&params, e, lw_weight(s)).unwrap().loss;
        let ce = loss_and_gradient(&params, e, 1.0).unwrap().loss;
        worst = worst.max((weighted - (1.0 - s.value()) * ce).abs() / ce.abs().max(1.0));
    }
    let exact = worst <= f64::EPSILON;

    let perfect = lw_weight(UnitScore::new(1.0).unwrap());
    let params = GeneratorParams::from_weights([1.0, -1.0, 0.5, 0.2]).unwrap();
    let zero_grad = loss_and_gradient(&params, &train.examples[0], perfect)
        .unwrap()
        .gradient
        .iter()
        .all(|g| *g == 0.0);

    let small = Dataset::new(train.examples[..16].to_vec(), "lw");
    let cfg = |s| StrategyConfig {
        epochs: 3,
        patience: 3,
        ..experiment_config(s)
    };
    let init = GeneratorParams::zeros();
    let (frozen, _) = run_training(&init, &small, &small, &Constant(1.0), &cfg(Strategy::Lw)).unwrap();
    let frozen_ok = frozen.weights == init.weights;
    let lw0 = run_training(&init, &small, &small, &Constant(0.0), &cfg(Strategy::Lw)).unwrap();
    let base = run_training(&init, &small, &small, &Constant(0.0), &cfg(Strategy::Baseline)).unwrap();
    let same = lw0 == base;

    (
        exact && zero_grad && frozen_ok && same,
        format!(
            "worst |loss - (1-s)CE| / max(CE,1) = {worst:.1e} over {} instances; score 1 zero gradient: {zero_grad}, weights frozen: {frozen_ok}; score 0 matches baseline: {same}",
            train.len()
        ),
    )
}

fn naive_f1(a: &str, b: &str) -> f64 {
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

fn naive_score(answer: &str, candidates: &[AnswerCandidate], exclude: Option<&str>) -> f64 {
    let pick = |skip: Option<&str>, label| {
        candidates
            .iter()
            .filter(|c| Some(c.text.as_str()) != skip && c.label == Some(label))
            .map(|c| naive_f1(answer, &c.text))
            .collect::<Vec<_>>()
    };
    let mut pos = pick(exclude, Label::Correct);
    let mut neg = pick(exclude, Label::Incorrect);
    if pos.is_empty() {
        pos = pick(None, Label::Correct);
        neg = pick(None, Label::Incorrect);
    }
    let best = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    (best(&pos) - 0.5 * best(&neg)).clamp(0.0, 1.0)
}

fn dynamic_invariants() -> (bool, String) {
    let ds = generate(&SyntheticConfig {
        questions: DDA_QUESTIONS,
        seed: 6,
        ..Default::default()
    })
    .unwrap();
    let model = GeneratorParams::from_weights([1.5, -0.5, 1.0, 0.0]).unwrap();
    let cfg = experiment_config(Strategy::Dda);
    let mut violations = Vec::new();
    let mut pooled = 0;
    for (i, e) in ds.examples.iter().enumerate() {
        let r = rebuild_example_dynamic(e, &model, &OverlapOracle, &cfg, i as u64).unwrap();
        pooled += r.pool.len();
        let rescored: Vec<f64> = r
            .pool
            .members
            .iter()
            .map(|m| {
                let own = e.candidates.iter().any(|c| c.text == m.text).then_some(m.text.as_str());
                naive_score(&m.text, &e.candidates, own)
            })
            .collect();
        let mut top = 0;
        for (j, s) in rescored.iter().enumerate() {
            if *s > rescored[top] {
                top = j;
            }
        }
        let target = r.example.target.as_deref().unwrap_or("");
        let has_t = e
            .target
            .as_deref()
            .map_or(true, |t| r.pool.members.iter().any(|m| m.origin == Origin::Target && m.text == t));
        let scores_match = r.pool.scores.iter().zip(&rescored).all(|(a, b)| (a.value() - b).abs() <= 1e-12);
        if r.example.candidates.len() != cfg.context_size
            || target.is_empty()
            || target != r.pool.members[top].text
            || !has_t
            || !scores_match
        {
            violations.push(e.id().to_string());
        }
    }
    (
        violations.is_empty(),
        format!(
            "{} questions, {pooled} pool members re-scored; violations: {}",
            ds.len(),
            if violations.is_empty() { "none".to_string() } else { violations.join(", ") }
        ),
    )
}

fn brute_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (si, _) in scores.iter().zip(labels).filter(|(_, l)| **l) {
        for (sj, _) in scores.iter().zip(labels).filter(|(_, l)| !**l) {
            pairs += 1.0;
            wins += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

fn auroc_equivalence() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for seed in 0..AUROC_VECTORS {
        let mut rng = SplitMix64::new(seed ^ 0xA5);
        let n = 2 + rng.below(100);
        let levels = 1 + rng.below(20);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.5).collect();
        labels[0] = true;
        labels[1] = false;
        worst = worst.max((auroc(&scores, &labels).unwrap() - brute_auroc(&scores, &labels)).abs());
    }
    (
        worst <= AUROC_TOL,
        format!("{AUROC_VECTORS} vectors, worst |fast - pairwise| = {worst:.1e}"),
    )
}

/// Returns `seq[i]` for the i-th scoring batch.
struct Scripted {
    seq: Vec<f64>,
    calls: AtomicUsize,
}

impl Evaluator for Scripted {
    fn score(&self, _: &Question, _: &str, _: &ReferenceSet) -> gava_core::Result<UnitScore> {
        unreachable!("scored in batches")
    }

    fn score_batch(&self, requests: &[ScoreRequest<'_>]) -> gava_core::Result<Vec<UnitScore>> {
        let i = self.calls.fetch_add(1, Ordering::SeqCst);
        let s = UnitScore::new(*self.seq.get(i).unwrap_or(&1.0))?;
        Ok(vec![s; requests.len()])
    }
}

fn early_stopping() -> (bool, String) {
    let (train, dev) = experiment_corpus(30);
    let cfg = StrategyConfig {
        epochs: 15,
        patience: 3,
        ..experiment_config(Strategy::Baseline)
    };
    let scripted = |seq: &[f64]| Scripted {
        seq: seq.to_vec(),
        calls: AtomicUsize::new(0),
    };
    let init = GeneratorParams::zeros();
    let (model, history) = run_training(&init, &train, &dev, &scripted(&SCRIPTED_DEV), &cfg).unwrap();
    let two = StrategyConfig { epochs: 2, ..cfg };
    let (epoch2, _) = run_training(&init, &train, &dev, &scripted(&SCRIPTED_DEV[..2]), &two).unwrap();
    let pass = history.epochs.len() == 5 && history.best_epoch == 2 && model == epoch2;
    (
        pass,
        format!(
            "dev sequence {SCRIPTED_DEV:?}: ran {} epochs, best epoch {}, returned weights equal epoch-2 weights: {}",
            history.epochs.len(),
            history.best_epoch,
            model == epoch2
        ),
    )
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let mut bytes = fs::read(&path).unwrap();
        if path.file_name().unwrap() == "report.json" {
            let mut v: Value = serde_json::from_slice(&bytes).unwrap();
            v.as_object_mut().unwrap().remove("wall_clock_seconds");
            bytes = serde_json::to_vec_pretty(&v).unwrap();
        }
        out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), bytes);
    }
    out
}

fn determinism() -> (bool, String) {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let (train, dev) = experiment_corpus(90);
    save_dataset(root.join("train.jsonl"), &train).unwrap();
    save_dataset(root.join("dev.jsonl"), &dev).unwrap();
    fs::write(
        root.join("config.json"),
        r#"{"lr": 2.0, "batch_size": 8, "epochs": 4, "seed": 17}"#,
    )
    .unwrap();
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    let table = fixture("system_scores.csv").to_string_lossy().into_owned();

    let mut runs: Vec<(String, Vec<String>)> = Vec::new();
    for strategy in ["baseline", "sda", "dda", "lw"] {
        runs.push((
            format!("train-{strategy}"),
            vec!["train", "--config", &p("config.json"), "--strategy", strategy, "--train", &p("train.jsonl"), "--dev", &p("dev.jsonl")]
                .into_iter()
                .map(String::from)
                .collect(),
        ));
    }
    let base = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    runs.push(("augment".into(), base(&["augment", "--config", &p("config.json"), "--theta", "0.7", "--train", &p("train.jsonl"), "--dev", &p("dev.jsonl")])));
    runs.push(("build-gava-data".into(), base(&["build-gava-data", "--config", &p("config.json"), "--input", &p("train.jsonl")])));
    runs.push(("correlate".into(), base(&["correlate", "--input", &table])));

    let mut files = 0;
    let mut mismatches = Vec::new();
    for (label, argv) in &runs {
        let mut outputs = Vec::new();
        for attempt in 0..2 {
            let out = root.join(format!("{label}-{attempt}"));
            let mut argv = argv.clone();
            argv.extend(["--out".to_string(), out.to_string_lossy().into_owned()]);
            if let Err(e) = gava_cli::run(&argv, &mut Vec::new()) {
                return (false, format!("{label} failed: {e}"));
            }
            outputs.push(dir_contents(&out));
        }
        // evaluate the trained checkpoint as well
        if label == "train-lw" {
            for attempt in 0..2 {
                let out = root.join(format!("evaluate-{attempt}"));
                let ckpt = root.join(format!("{label}-0/checkpoint.json"));
                let argv = base(&["evaluate", "--checkpoint", &ckpt.to_string_lossy(), "--input", &p("dev.jsonl"), "--out", &out.to_string_lossy()]);
                if let Err(e) = gava_cli::run(&argv, &mut Vec::new()) {
                    return (false, format!("evaluate failed: {e}"));
                }
            }
            let (a, b) = (dir_contents(&root.join("evaluate-0")), dir_contents(&root.join("evaluate-1")));
            files += a.len();
            if a != b {
                mismatches.push("evaluate".to_string());
            }
        }
        files += outputs[0].len();
        for (name, bytes) in &outputs[0] {
            if outputs[1].get(name) != Some(bytes) {
                mismatches.push(format!("{label}/{name}"));
            }
        }
    }
    (
        mismatches.is_empty(),
        format!(
            "{} commands run twice, {files} output files compared; differing: {}",
            runs.len() + 1,
            if mismatches.is_empty() { "none".to_string() } else { mismatches.join(", ") }
        ),
    )
}
