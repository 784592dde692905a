//! Release gate for the whole pipeline: one test per shipping criterion,
//! each printing a `[PASS] criterion N` line with its measured numbers
//! (visible under `--nocapture`). Thresholds, seeds, and scenario shapes are
//! frozen; loosening any of them is a release decision, not a test fix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use fixdetect::causal::{causal_degree, group_failures, pearl_causes, GroupingConfig, MeasureKind};
use fixdetect::cpd::{
    detect_all, detect_changepoint, ks_p, mann_whitney_p, ChangeKind, Correction, CpdConfig,
    CusumState,
};
use fixdetect::eval::{score_detection, score_grouping};
use fixdetect::series::build_degree_series;
use fixdetect::sim::{
    simulate, synthetic_shift_series, GroundTruthEvent, Scenario, TestSpec, TruthKind,
    BASELINE_VERSION, UPDATED_VERSION,
};
use fixdetect::types::{
    FailureSignature, MethodId, PatchIntervention, ProbabilityEstimate, SignatureIdentity,
    TestRunReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HOUR_MS: u64 = 3_600_000;

fn pass(criterion: usize, detail: impl Display) {
    println!("[PASS] criterion {criterion}: {detail}");
}

/// Brute-force reference statistics, independent of the library's rank and
/// DP implementations: direct pairwise comparisons plus full enumeration of
/// group labelings.
mod oracle {
    use itertools::Itertools;

    /// Doubled Mann-Whitney U: 2 per (x, y) with x > y, 1 per tie.
    pub fn doubled_u(a: &[f64], b: &[f64]) -> u64 {
        let mut u2 = 0u64;
        for &x in a {
            for &y in b {
                if x > y {
                    u2 += 2;
                } else if x == y {
                    u2 += 1;
                }
            }
        }
        u2
    }

    /// KS D scaled by |a|·|b|, evaluated at every pooled value.
    pub fn ks_d_numerator(a: &[f64], b: &[f64]) -> u64 {
        let n1 = a.len() as u64;
        let n2 = b.len() as u64;
        let mut best = 0u64;
        for &v in a.iter().chain(b.iter()) {
            let ca = a.iter().filter(|&&x| x <= v).count() as u64;
            let cb = b.iter().filter(|&&x| x <= v).count() as u64;
            best = best.max((ca * n2).abs_diff(cb * n1));
        }
        best
    }

    fn permutation_p(a: &[f64], b: &[f64], stat: impl Fn(&[f64], &[f64]) -> u64) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        let n = pooled.len();
        let n1 = a.len();
        let observed = stat(a, b);
        let mut hits = 0u64;
        let mut total = 0u64;
        for picked in (0..n).combinations(n1) {
            let g1: Vec<f64> = picked.iter().map(|&i| pooled[i]).collect();
            let g2: Vec<f64> = (0..n)
                .filter(|i| !picked.contains(i))
                .map(|i| pooled[i])
                .collect();
            if stat(&g1, &g2) >= observed {
                hits += 1;
            }
            total += 1;
        }
        hits as f64 / total as f64
    }

    pub fn mw_enumeration_p(a: &[f64], b: &[f64]) -> f64 {
        let center = (a.len() * b.len()) as u64;
        permutation_p(a, b, |g1, g2| doubled_u(g1, g2).abs_diff(center))
    }

    pub fn ks_enumeration_p(a: &[f64], b: &[f64]) -> f64 {
        permutation_p(a, b, ks_d_numerator)
    }
}

fn planted_signature() -> FailureSignature {
    FailureSignature::new("t1", MethodId::new("m_patched").unwrap(), 77)
}

fn patch() -> PatchIntervention {
    PatchIntervention::new(
        BASELINE_VERSION,
        UPDATED_VERSION,
        [MethodId::new("m_patched").unwrap()],
    )
    .unwrap()
}

fn one_test_scenario(
    seed: u64,
    duration: u64,
    runs: u64,
    base: f64,
    updated: f64,
    noise: f64,
) -> Scenario {
    Scenario {
        seed,
        duration,
        bucket_width_ms: HOUR_MS,
        runs_per_bucket_per_version: runs,
        tests: vec![TestSpec {
            test_id: "t1".into(),
            signature: planted_signature(),
            baseline_fail_rate: base,
            updated_fail_rate: updated,
            flaky_noise: noise,
        }],
        events: Vec::new(),
        clusters: Vec::new(),
    }
}

fn split_by_version(reports: &[TestRunReport]) -> (Vec<TestRunReport>, Vec<TestRunReport>) {
    let of = |version: &str| {
        reports
            .iter()
            .filter(|r| r.version_id == version)
            .cloned()
            .collect()
    };
    (of(BASELINE_VERSION), of(UPDATED_VERSION))
}

fn degree_series(reports: &[TestRunReport]) -> fixdetect::series::DegreeSeries {
    let (baseline, updated) = split_by_version(reports);
    build_degree_series(
        &baseline,
        &updated,
        &patch(),
        &planted_signature(),
        &MethodId::new("m_patched").unwrap(),
        HOUR_MS,
        10,
        SignatureIdentity::default(),
    )
    .unwrap()
}

/// Small-sample pair from one of three value styles (heavy ties, light
/// ties, continuous), sizes within the exact-path regime |a|+|b| ≤ 12.
fn random_pair(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n1 = rng.random_range(1..=11usize);
    let n2 = rng.random_range(1..=12 - n1);
    let style = rng.random_range(0..3u8);
    fn draw(rng: &mut ChaCha8Rng, style: u8, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| match style {
                0 => rng.random_range(0..5u8) as f64,
                1 => rng.random_range(0..11u8) as f64 * 0.25,
                _ => rng.random::<f64>(),
            })
            .collect()
    }
    let a = draw(rng, style, n1);
    let b = draw(rng, style, n2);
    (a, b)
}

#[test]
fn criterion_1_exact_p_values_match_enumeration() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE01);
    let pairs = 1000;
    for i in 0..pairs {
        let (a, b) = random_pair(&mut rng);
        let mw = mann_whitney_p(&a, &b).unwrap();
        let mw_want = oracle::mw_enumeration_p(&a, &b);
        assert_eq!(
            mw.to_bits(),
            mw_want.to_bits(),
            "pair {i}: mw {mw} vs enumeration {mw_want} for a={a:?} b={b:?}"
        );
        let ks = ks_p(&a, &b).unwrap();
        let ks_want = oracle::ks_enumeration_p(&a, &b);
        assert_eq!(
            ks.to_bits(),
            ks_want.to_bits(),
            "pair {i}: ks {ks} vs enumeration {ks_want} for a={a:?} b={b:?}"
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    pass(
        1,
        format!(
            "mann_whitney_p and ks_p bitwise-match enumeration on {pairs} seeded pairs \
             in {:.2}s (< 60s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_predicate_difference_and_ratio_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE02);
    let pairs = 10_000;
    let mut violations = 0u32;
    let mut undefined = 0u32;
    for _ in 0..pairs {
        let estimate = |rng: &mut ChaCha8Rng| {
            let n = rng.random_range(1..=400u64);
            let k = rng.random_range(0..=n);
            ProbabilityEstimate::from_counts(k, n).unwrap()
        };
        let p_with = estimate(&mut rng);
        // One pair in eight reuses the same estimate so exact equality (the
        // boundary all three measures must agree on) is well exercised.
        let p_without = if rng.random_range(0..8u8) == 0 {
            p_with
        } else {
            estimate(&mut rng)
        };

        let causes = pearl_causes(p_with, p_without);
        let difference = causal_degree(p_with, p_without, MeasureKind::Difference)
            .unwrap()
            .value;
        let ratio = match causal_degree(p_with, p_without, MeasureKind::Ratio) {
            Ok(degree) => Some(degree.value),
            // 0/0: undefined, legal only when the predicate is also false.
            Err(fixdetect::Error::UndefinedRatio) => None,
            Err(e) => panic!("unexpected ratio error: {e}"),
        };

        let consistent = causes == (difference > 0.0)
            && match ratio {
                Some(r) => causes == (r > 1.0),
                None => !causes && p_with.p == 0.0 && p_without.p == 0.0,
            };
        if !consistent {
            violations += 1;
        }
        if ratio.is_none() {
            undefined += 1;
        }
    }
    assert_eq!(violations, 0, "{violations} of {pairs} pairs inconsistent");
    pass(
        2,
        format!(
            "pearl_causes ⇔ difference > 0 ⇔ ratio > 1 on {pairs} random pairs, \
             0 violations ({undefined} undefined ratios handled)"
        ),
    );
}

#[test]
fn criterion_3_grouping_recovers_the_planted_cause() {
    let started = Instant::now();
    let config = GroupingConfig::default();
    assert_eq!(config.measure, MeasureKind::Difference);
    assert_eq!(config.threshold, 0.2);

    let truth: BTreeMap<FailureSignature, BTreeSet<MethodId>> = [(
        planted_signature(),
        BTreeSet::from([MethodId::new("m_patched").unwrap()]),
    )]
    .into();

    let seeds = 100;
    let mut f1_sum = 0.0;
    for seed in 0..seeds {
        let scenario = one_test_scenario(seed, 1, 200, 0.05, 0.9, 0.0);
        let (reports, _) = simulate(&scenario).unwrap();
        let (baseline, updated) = split_by_version(&reports);
        let grouping = group_failures(&baseline, &updated, &patch(), &config).unwrap();
        f1_sum += score_grouping(&grouping, &truth, None).f1;
    }
    let mean_f1 = f1_sum / seeds as f64;
    let elapsed = started.elapsed();
    assert!(mean_f1 >= 0.9, "mean F1 {mean_f1} below 0.9");
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    pass(
        3,
        format!(
            "0.05 → 0.9 shift at threshold 0.2: mean F1 {mean_f1:.3} over {seeds} seeds \
             in {:.2}s (< 30s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_4_fix_localization_and_null_rate() {
    let started = Instant::now();
    let seeds = 100;

    let mut localized = 0;
    for seed in 0..seeds {
        let mut scenario = one_test_scenario(seed, 60, 20, 0.05, 0.8, 0.05);
        scenario.events = vec![GroundTruthEvent {
            at_bucket: 30,
            kind: TruthKind::FixIntroduced,
            affected_test: "t1".into(),
            new_updated_fail_rate: 0.05,
        }];
        let (reports, _) = simulate(&scenario).unwrap();
        let series = degree_series(&reports);
        if let Some(event) = detect_changepoint(&series, &CpdConfig::default()).unwrap() {
            if event.kind == ChangeKind::Fix && event.index.abs_diff(30) <= 2 {
                localized += 1;
            }
        }
    }
    assert!(localized >= 95, "only {localized} of {seeds} localized");

    // Matched no-change series: same shape and noise, rate never moves.
    let null_config = CpdConfig {
        alpha: 0.05,
        ..CpdConfig::default()
    };
    let mut alarms = 0;
    for seed in 0..seeds {
        let scenario = one_test_scenario(1000 + seed, 60, 20, 0.05, 0.8, 0.05);
        let (reports, _) = simulate(&scenario).unwrap();
        let series = degree_series(&reports);
        if detect_changepoint(&series, &null_config).unwrap().is_some() {
            alarms += 1;
        }
    }
    assert!(alarms <= 5, "{alarms} null alarms in {seeds} seeds");

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    pass(
        4,
        format!(
            "fix localized within ±2 in {localized}/{seeds} seeds; {alarms}/{seeds} null \
             alarms at alpha 0.05; {:.2}s (< 60s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_5_bug_then_fix_history_is_recovered() {
    // The first scan of a bug-then-fix series pits a pure segment against a
    // two-rate mixture, capping the attainable z near 3; Bonferroni over ~50
    // candidates would swallow that, so layered histories run uncorrected at
    // the looser level.
    let config = CpdConfig {
        alpha: 0.05,
        correction: Correction::None,
        ..CpdConfig::default()
    };
    let seeds = 100;
    let mut recovered = 0;
    for seed in 0..seeds {
        let mut scenario = one_test_scenario(seed, 60, 20, 0.05, 0.05, 0.05);
        scenario.events = vec![
            GroundTruthEvent {
                at_bucket: 20,
                kind: TruthKind::BugIntroduced,
                affected_test: "t1".into(),
                new_updated_fail_rate: 0.8,
            },
            GroundTruthEvent {
                at_bucket: 40,
                kind: TruthKind::FixIntroduced,
                affected_test: "t1".into(),
                new_updated_fail_rate: 0.05,
            },
        ];
        let (reports, truth) = simulate(&scenario).unwrap();
        let series = degree_series(&reports);
        let events = detect_all(&series, &config).unwrap();
        let score = score_detection(&events, &truth, 2);
        if score.matched.len() == 2 && score.misses.is_empty() {
            recovered += 1;
        }
    }
    assert!(recovered >= 90, "only {recovered} of {seeds} recovered");
    pass(
        5,
        format!("both events matched within ±2 in {recovered}/{seeds} seeds (≥ 90 required)"),
    );
}

#[test]
fn criterion_6_cusum_alarm_arithmetic() {
    // Upward shift: slack 0.5 leaves 0.5 per step, so S+ crosses 2 on the
    // fifth post-change observation (2.5 > 2).
    let mut up = CusumState::new(0.0, 0.5, 2.0, 5).unwrap();
    for step in 1..=4 {
        assert_eq!(up.step(1.0), None, "early alarm at step {step}");
    }
    assert_eq!(up.step(1.0), Some(ChangeKind::Bug));

    // Downward shift: 0.8 − 0.0 − 0.1 = 0.7 per step, so S− crosses 1 on
    // the second post-change observation (1.4 > 1).
    let mut down = CusumState::new(0.8, 0.1, 1.0, 5).unwrap();
    assert_eq!(down.step(0.0), None);
    assert_eq!(down.step(0.0), Some(ChangeKind::Fix));

    let mut flat = CusumState::new(0.0, 0.5, 2.0, 5).unwrap();
    let steps = 1_000_000;
    for _ in 0..steps {
        assert_eq!(flat.step(0.0), None);
    }
    assert_eq!(flat.sums(), (0.0, 0.0));
    pass(
        6,
        format!(
            "bug alarm on the 5th and fix alarm on the 2nd post-change observation; \
             zero-deviation stream silent over {steps} steps"
        ),
    );
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fixdetect"))
}

fn run_cli(configure: impl FnOnce(&mut Command)) -> Vec<u8> {
    let mut command = cli();
    configure(&mut command);
    let output = command.output().expect("binary should spawn");
    assert!(
        output.status.success(),
        "cli failed ({:?}): {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    output.stdout
}

fn write_json(path: &Path, value: &impl serde::Serialize) {
    std::fs::write(path, serde_json::to_vec(value).unwrap()).unwrap();
}

/// 10,000-bucket scenario with one planted mid-series fix; runs per bucket
/// sit exactly at the pipeline's default per-bucket minimum.
fn long_scenario() -> Scenario {
    let mut scenario = one_test_scenario(4242, 10_000, 10, 0.05, 0.8, 0.02);
    scenario.events = vec![GroundTruthEvent {
        at_bucket: 5_000,
        kind: TruthKind::FixIntroduced,
        affected_test: "t1".into(),
        new_updated_fail_rate: 0.05,
    }];
    scenario
}

struct PipelineFixture {
    #[allow(dead_code)]
    dir: tempfile::TempDir,
    runs: PathBuf,
    patch: PathBuf,
}

fn simulate_long_scenario() -> PipelineFixture {
    let dir = tempfile::tempdir().unwrap();
    let scenario_path = dir.path().join("scenario.json");
    let runs = dir.path().join("runs.jsonl");
    let truth = dir.path().join("truth.json");
    let patch_path = dir.path().join("patch.json");
    write_json(&scenario_path, &long_scenario());
    write_json(&patch_path, &patch());
    run_cli(|c| {
        c.arg("simulate")
            .arg(&scenario_path)
            .arg("--out-runs")
            .arg(&runs)
            .arg("--out-truth")
            .arg(&truth);
    });
    PipelineFixture {
        dir,
        runs,
        patch: patch_path,
    }
}

#[test]
fn criterion_7_detector_and_pipeline_scale() {
    // Library side: one scan plus recursion over 100k points.
    let series = synthetic_shift_series(100_000, 50_000, 0.55, 0.05, 0.05, 3);
    let started = Instant::now();
    let events = detect_all(&series, &CpdConfig::default()).unwrap();
    let detect_elapsed = started.elapsed();
    assert!(
        detect_elapsed < Duration::from_secs(5),
        "detect_all took {detect_elapsed:?}"
    );
    assert!(!events.is_empty());
    assert!(
        events[0].index.abs_diff(50_000) <= 100,
        "first event at {}",
        events[0].index
    );

    // End-to-end side: full pipeline over a 10,000-bucket run log.
    let fixture = simulate_long_scenario();
    let out = fixture.runs.with_extension("out.json");
    let started = Instant::now();
    run_cli(|c| {
        c.arg("pipeline")
            .arg(&fixture.runs)
            .arg("--patch")
            .arg(&fixture.patch)
            .arg("--out")
            .arg(&out);
    });
    let pipeline_elapsed = started.elapsed();
    assert!(
        pipeline_elapsed < Duration::from_secs(30),
        "pipeline took {pipeline_elapsed:?}"
    );

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let result = &report["results"][0];
    assert_eq!(result["verdict"], "fixed", "report: {report}");
    let index = result["events"][0]["index"].as_u64().unwrap();
    assert!(index.abs_diff(5_000) <= 25, "event at {index}");
    pass(
        7,
        format!(
            "detect_all on 100k points in {:.2}s (< 5s, {} event(s)); pipeline on a \
             10,000-bucket log in {:.2}s (< 30s, verdict fixed at bucket {index})",
            detect_elapsed.as_secs_f64(),
            events.len(),
            pipeline_elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_8_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario_path = dir.path().join("scenario.json");
    let patch_path = dir.path().join("patch.json");
    let mut scenario = one_test_scenario(11, 60, 20, 0.05, 0.05, 0.05);
    scenario.events = vec![
        GroundTruthEvent {
            at_bucket: 20,
            kind: TruthKind::BugIntroduced,
            affected_test: "t1".into(),
            new_updated_fail_rate: 0.8,
        },
        GroundTruthEvent {
            at_bucket: 40,
            kind: TruthKind::FixIntroduced,
            affected_test: "t1".into(),
            new_updated_fail_rate: 0.05,
        },
    ];
    write_json(&scenario_path, &scenario);
    write_json(&patch_path, &patch());

    let simulate_once = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let runs = dir.path().join(format!("runs-{tag}.jsonl"));
        let truth = dir.path().join(format!("truth-{tag}.json"));
        run_cli(|c| {
            c.arg("simulate")
                .arg(&scenario_path)
                .arg("--out-runs")
                .arg(&runs)
                .arg("--out-truth")
                .arg(&truth);
        });
        (
            std::fs::read(&runs).unwrap(),
            std::fs::read(&truth).unwrap(),
        )
    };
    let (runs_a, truth_a) = simulate_once("a");
    let (runs_b, truth_b) = simulate_once("b");
    assert_eq!(runs_a, runs_b, "simulate runs differ between invocations");
    assert_eq!(truth_a, truth_b, "simulate truth differs between invocations");

    let runs_path = dir.path().join("runs-a.jsonl");
    let pipeline_once = || -> Vec<u8> {
        run_cli(|c| {
            c.arg("pipeline")
                .arg(&runs_path)
                .arg("--patch")
                .arg(&patch_path)
                .arg("--alpha")
                .arg("0.05")
                .arg("--correction")
                .arg("none");
        })
    };
    let first = pipeline_once();
    let second = pipeline_once();
    assert!(!first.is_empty());
    assert_eq!(first, second, "pipeline output differs between invocations");
    pass(
        8,
        format!(
            "simulate ({} bytes of runs) and pipeline ({} bytes) byte-identical \
             across consecutive invocations",
            runs_a.len(),
            first.len()
        ),
    );
}
