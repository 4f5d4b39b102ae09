//! Shared helpers for integration tests: fixture paths, independent
//! oracles, random scenario builders and the trace replay checker.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU32, Ordering};

use entail_guard::backends::{
    BackendError, CompletionRequest, CompletionResponse, LmBackend, LmScript, NliBackend,
    NliRequest, NliTable, RuleEntry, SamplingParams, ScriptSelect, ScriptedLm,
};
use entail_guard::nli::{NliDistribution, Strategy, StrategyKind};
use entail_guard::pipeline::{Decision, GenerationResult, PipelineConfig, PremiseOrigin};
use entail_guard::segment::split_sentences;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::Deserialize;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn d(c: f64, n: f64, e: f64) -> NliDistribution {
    NliDistribution::new(c, n, e).unwrap()
}

/// Runs the CLI in-process and captures both streams.
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = entail_guard::cli::run(
        std::iter::once("entail-guard").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

/// Counts calls on the wrapped language model.
pub struct CountingLm<L> {
    pub inner: L,
    pub calls: AtomicU32,
}

impl<L> CountingLm<L> {
    pub fn new(inner: L) -> Self {
        Self {
            inner,
            calls: AtomicU32::new(0),
        }
    }

    pub fn calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<L: LmBackend> LmBackend for CountingLm<L> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(req)
    }
}

// ---------------------------------------------------------------- segmentation

#[derive(Debug, Deserialize)]
pub struct SegmentationCase {
    pub text: String,
    pub sentences: Vec<String>,
}

pub fn segmentation_cases() -> Vec<SegmentationCase> {
    let raw = std::fs::read_to_string(fixture("segmentation.json")).unwrap();
    serde_json::from_str(&raw).unwrap()
}

/// Compares every fixture document with its hand-labelled split.
/// Returns (sentences checked, mismatch descriptions).
pub fn check_segmentation_fixture() -> (usize, Vec<String>) {
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for case in segmentation_cases() {
        checked += case.sentences.len();
        let got: Vec<String> = split_sentences(&case.text).into_iter().map(|s| s.text).collect();
        if got != case.sentences {
            mismatches.push(format!("{:?}: expected {:?}, got {:?}", case.text, case.sentences, got));
        }
    }
    (checked, mismatches)
}

/// Joins random fixture sentences with random whitespace and checks that
/// splitting recovers them, that offsets slice the source exactly, and that
/// re-splitting any sentence is a no-op.
pub fn check_random_concatenations(count: usize, seed: u64) -> Vec<String> {
    use rand::SeedableRng;
    let pool: Vec<String> = segmentation_cases()
        .into_iter()
        .flat_map(|c| c.sentences)
        .collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let seps = [" ", "  ", "\n", " \n ", "\t"];
    let mut failures = Vec::new();
    for _ in 0..count {
        let k = rng.random_range(1..=6);
        let picked: Vec<&String> = (0..k).map(|_| pool.choose(&mut rng).unwrap()).collect();
        let mut text = String::new();
        for (i, s) in picked.iter().enumerate() {
            if i > 0 {
                text.push_str(seps.choose(&mut rng).unwrap());
            }
            text.push_str(s);
        }
        let split = split_sentences(&text);
        let got: Vec<&str> = split.iter().map(|s| s.text.as_str()).collect();
        let want: Vec<&str> = picked.iter().map(|s| s.as_str()).collect();
        if got != want {
            failures.push(format!("split of {text:?}: {got:?}"));
            continue;
        }
        let chars: Vec<char> = text.chars().collect();
        for s in &split {
            let slice: String = chars[s.char_start..s.char_end].iter().collect();
            if slice != s.text {
                failures.push(format!("offsets of {:?} slice to {slice:?}", s.text));
            }
            let again = split_sentences(&s.text);
            if again.len() != 1 || again[0].text != s.text {
                failures.push(format!("re-split of {:?} gave {again:?}", s.text));
            }
        }
    }
    failures
}

// ---------------------------------------------------------------- spearman oracle

/// Mid-ranks by counting: 1 + #smaller + (#equal − 1) / 2.
pub fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Textbook Pearson on the mid-ranks, via raw sums.
pub fn oracle_rho(x: &[f64], y: &[f64]) -> f64 {
    let rx = oracle_ranks(x);
    let ry = oracle_ranks(y);
    let n = x.len() as f64;
    let sx: f64 = rx.iter().sum();
    let sy: f64 = ry.iter().sum();
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let sxx: f64 = rx.iter().map(|a| a * a).sum();
    let syy: f64 = ry.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Exact two-sided permutation p-value by Heap's algorithm over all n!
/// orderings of `y`.
pub fn oracle_exact_p(x: &[f64], y: &[f64]) -> f64 {
    let observed = oracle_rho(x, y).abs() - 1e-12;
    let mut perm: Vec<f64> = y.to_vec();
    let n = perm.len();
    let mut c = vec![0usize; n];
    let mut total = 1u64;
    let mut extreme = u64::from(oracle_rho(x, &perm).abs() >= observed);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            total += 1;
            if oracle_rho(x, &perm).abs() >= observed {
                extreme += 1;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    extreme as f64 / total as f64
}

/// Random vector with deliberate ties (values drawn from a small pool).
pub fn tied_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let pool = rng.random_range(2..=n.max(2));
    (0..n).map(|_| f64::from(rng.random_range(0..pool as u32)) * 0.5).collect()
}

pub fn has_variance(v: &[f64]) -> bool {
    v.iter().any(|x| *x != v[0])
}

// ---------------------------------------------------------------- OLS oracle

pub struct OracleCoefficient {
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

/// Normal equations solved by Gauss–Jordan inversion of XᵀX; p-values from
/// the Student-t CDF of an independent library.
#[allow(clippy::needless_range_loop)]
pub fn oracle_ols(
    y: &[f64],
    labels: &[&str],
    baseline: &str,
) -> BTreeMap<String, OracleCoefficient> {
    use statrs::distribution::{ContinuousCDF, StudentsT};

    let mut levels: Vec<&str> = labels.iter().copied().filter(|l| *l != baseline).collect();
    levels.sort();
    levels.dedup();
    let names: Vec<String> = std::iter::once("intercept".to_string())
        .chain(levels.iter().map(|s| s.to_string()))
        .collect();
    let k = names.len();
    let x: Vec<Vec<f64>> = labels
        .iter()
        .map(|l| {
            let mut row = vec![1.0];
            row.extend(levels.iter().map(|lv| if lv == l { 1.0 } else { 0.0 }));
            row
        })
        .collect();

    // augmented [XᵀX | I]
    let mut a = vec![vec![0.0; 2 * k]; k];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = x.iter().map(|r| r[i] * r[j]).sum();
        }
        a[i][k + i] = 1.0;
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let div = a[col][col];
        for v in a[col].iter_mut() {
            *v /= div;
        }
        for row in 0..k {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for j in 0..2 * k {
                        a[row][j] -= f * a[col][j];
                    }
                }
            }
        }
    }
    let inv: Vec<Vec<f64>> = a.iter().map(|r| r[k..].to_vec()).collect();
    let xty: Vec<f64> = (0..k).map(|i| x.iter().zip(y).map(|(r, yi)| r[i] * yi).sum()).collect();
    let beta: Vec<f64> = (0..k).map(|i| (0..k).map(|j| inv[i][j] * xty[j]).sum()).collect();
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(r, yi)| {
            let fit: f64 = r.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (yi - fit).powi(2)
        })
        .sum();
    let df = (y.len() - k) as f64;
    let s2 = ssr / df;
    let t_dist = StudentsT::new(0.0, 1.0, df).unwrap();
    names
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let se = (s2 * inv[i][i]).sqrt();
            let t = beta[i] / se;
            let p = 2.0 * (1.0 - t_dist.cdf(t.abs()));
            (name, OracleCoefficient { beta: beta[i], se, t, p })
        })
        .collect()
}

/// Random dummy-coded dataset: 2–4 levels (one is `CONTROL`), each with
/// at least two observations.
pub fn random_dataset(rng: &mut impl Rng) -> (Vec<f64>, Vec<&'static str>) {
    const LEVELS: [&str; 4] = ["CONTROL", "NEU", "ENT", "CON"];
    let k = rng.random_range(2..=4);
    let mut labels = Vec::new();
    for level in &LEVELS[..k] {
        for _ in 0..rng.random_range(2..=6) {
            labels.push(*level);
        }
    }
    let shifts: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = labels
        .iter()
        .map(|l| {
            let j = LEVELS.iter().position(|x| x == l).unwrap();
            3.0 + shifts[j] + rng.random_range(-1.0..1.0)
        })
        .collect();
    (y, labels)
}

// ---------------------------------------------------------------- replay scenarios

const WORDS: [&str; 12] = [
    "river", "lamp", "never", "again", "stone", "garden", "quiet", "storm", "letter", "bridge",
    "market", "winter",
];

fn random_distribution(rng: &mut impl Rng) -> NliDistribution {
    let raw: [f64; 3] = [rng.random(), rng.random(), rng.random::<f64>() * 3.0];
    let mut raw = raw;
    // tilt some draws towards neutral so NEU accepts now and then
    if rng.random_bool(0.4) {
        raw[1] += 12.0;
    }
    let sum: f64 = raw.iter().sum();
    d(raw[0] / sum, raw[1] / sum, raw[2] / sum)
}

fn random_sentence(rng: &mut impl Rng) -> String {
    let n = rng.random_range(3..=9);
    let mut words: Vec<String> = (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect();
    let first = &mut words[0];
    *first = first[..1].to_uppercase() + &first[1..];
    let end = ["." , "!", "?"].choose(rng).unwrap();
    format!("{}{end}", words.join(" "))
}

pub struct Scenario {
    pub prompt: String,
    pub lm: ScriptedLm,
    pub nli: NliTable,
    pub config: PipelineConfig,
}

pub fn random_scenario(rng: &mut impl Rng) -> Scenario {
    let continuations = (0..rng.random_range(1..=6))
        .map(|_| {
            let mut text = (0..rng.random_range(1..=5))
                .map(|_| random_sentence(rng))
                .collect::<Vec<_>>()
                .join(" ");
            if rng.random_bool(0.3) {
                text.push_str(" And then the");
            }
            text
        })
        .collect();
    let lm = ScriptedLm::from_script(LmScript {
        continuations,
        select: if rng.random_bool(0.5) {
            ScriptSelect::Seed
        } else {
            ScriptSelect::PromptHash
        },
    });
    let mut nli = NliTable::new().with_default(random_distribution(rng));
    for _ in 0..rng.random_range(0..5) {
        let word = WORDS.choose(rng).unwrap().to_string();
        let rule = if rng.random_bool(0.5) {
            RuleEntry {
                premise_contains: Some(word),
                hypothesis_contains: None,
                distribution: random_distribution(rng),
            }
        } else {
            RuleEntry {
                premise_contains: None,
                hypothesis_contains: Some(word),
                distribution: random_distribution(rng),
            }
        };
        nli.rules.push(rule);
    }
    if rng.random_bool(0.5) {
        nli = nli.with_identical(random_distribution(rng));
    }
    let kind = *[StrategyKind::Neu, StrategyKind::Ent, StrategyKind::Con]
        .choose(rng)
        .unwrap();
    let config = PipelineConfig {
        strategy: Strategy::new(kind, rng.random_range(0.5..0.95)).unwrap(),
        params: SamplingParams {
            seed: Some(rng.next_u64()),
            ..Default::default()
        },
        success_min_chars: rng.random_range(20..300),
        ..Default::default()
    };
    let prompt = (0..rng.random_range(1..=3))
        .map(|_| random_sentence(rng))
        .collect::<Vec<_>>()
        .join(" ");
    Scenario {
        prompt,
        lm,
        nli,
        config,
    }
}

/// Re-derives every decision in the trace from the NLI backend alone.
/// Returns one message per violation.
pub fn replay_violations(
    nli: &dyn NliBackend,
    strategy: &Strategy,
    prompt: &str,
    result: &GenerationResult,
) -> Vec<String> {
    let prompt_sentences: Vec<String> =
        split_sentences(prompt).into_iter().map(|s| s.text).collect();
    let mut violations = Vec::new();
    let mut runs: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for event in &result.trace.events {
        let accepted = runs.entry(event.run_index).or_default();
        let expected: Vec<(&String, PremiseOrigin)> = prompt_sentences
            .iter()
            .map(|p| (p, PremiseOrigin::Prompt))
            .chain(accepted.iter().map(|p| (p, PremiseOrigin::Continuation)))
            .collect();
        let candidate = &event.candidate.text;
        for (i, check) in event.checks.iter().enumerate() {
            match expected.get(i) {
                Some((p, origin)) if **p == check.premise_text && *origin == check.premise_origin => {}
                _ => violations.push(format!("unexpected premise {:?} for {candidate:?}", check.premise_text)),
            }
            let fresh = nli
                .classify(&NliRequest::new(&check.premise_text, candidate).unwrap())
                .unwrap();
            if fresh != check.distribution {
                violations.push(format!("distribution drift for {candidate:?}"));
            }
            if strategy.accepts(&fresh) != check.passed {
                violations.push(format!("verdict drift for {candidate:?}"));
            }
        }
        match event.decision {
            Decision::Accepted => {
                if event.checks.len() != expected.len() {
                    violations.push(format!(
                        "{candidate:?} accepted after {} of {} premises",
                        event.checks.len(),
                        expected.len()
                    ));
                }
                if !event.checks.iter().all(|c| c.passed) {
                    violations.push(format!("{candidate:?} accepted with a failing check"));
                }
                accepted.push(candidate.clone());
            }
            Decision::Rejected => {
                if event.checks.last().is_none_or(|c| c.passed) {
                    violations.push(format!("{candidate:?} rejected without a failing check"));
                }
            }
            Decision::DiscardedAfterReject => {
                if !event.checks.is_empty() {
                    violations.push(format!("{candidate:?} discarded but checked"));
                }
            }
        }
    }
    if !result.accepted.is_empty() && !runs.values().any(|acc| *acc == result.accepted) {
        violations.push("final continuation matches no run in the trace".to_string());
    }
    violations
}
