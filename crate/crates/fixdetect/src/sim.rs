//! Ground-truth scenario simulation: two-version run streams with known
//! fail rates, injected fixes/bugs, flaky-rate jitter, and optional canary
//! clusters.
//!
//! Randomness is split into independent streams, one per
//! (bucket, cluster, test, version) cell, each seeded by hashing the
//! scenario seed with the cell coordinates. Adding a test or extending the
//! duration therefore never perturbs the draws of existing cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::series::{DegreeSeries, SeriesPoint};
use crate::types::{FailureSignature, MethodId, TestRunReport};
use crate::Error;

/// Version id simulated runs carry for the unpatched code.
pub const BASELINE_VERSION: &str = "baseline";
/// Version id simulated runs carry for the patched code.
pub const UPDATED_VERSION: &str = "updated";

/// One simulated flaky test: a failure signature plus per-version fail rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSpec {
    pub test_id: String,
    pub signature: FailureSignature,
    pub baseline_fail_rate: f64,
    pub updated_fail_rate: f64,
    /// Half-width of per-bucket uniform rate jitter; rates are clamped to
    /// [0, 1] after jittering.
    #[serde(default)]
    pub flaky_noise: f64,
}

/// What changed, when, and for which test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthEvent {
    /// First bucket at which the new rate is active.
    pub at_bucket: u64,
    pub kind: TruthKind,
    pub affected_test: String,
    pub new_updated_fail_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    FixIntroduced,
    BugIntroduced,
}

/// One deployment cluster; non-receiving clusters run the updated version
/// at the baseline rate (the patch never reached them).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub cluster_id: String,
    pub receives_patch: bool,
}

/// Full simulation scenario. With `clusters` empty, a single implicit
/// patched cluster is simulated and reports carry no cluster id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Number of buckets to simulate.
    pub duration: u64,
    pub bucket_width_ms: u64,
    pub runs_per_bucket_per_version: u64,
    pub tests: Vec<TestSpec>,
    #[serde(default)]
    pub events: Vec<GroundTruthEvent>,
    #[serde(default)]
    pub clusters: Vec<ClusterSpec>,
}

impl Scenario {
    pub fn validate(&self) -> crate::Result<()> {
        fn fail(field: impl Into<String>, message: impl Into<String>) -> crate::Result<()> {
            Err(Error::InvalidScenario {
                field: field.into(),
                message: message.into(),
            })
        }

        if self.duration == 0 {
            return fail("duration", "must be at least 1 bucket");
        }
        if self.bucket_width_ms == 0 {
            return fail("bucket_width_ms", "must be positive");
        }
        if self.runs_per_bucket_per_version == 0 {
            return fail("runs_per_bucket_per_version", "must be at least 1");
        }
        for (i, test) in self.tests.iter().enumerate() {
            if test.test_id.is_empty() {
                return fail(format!("tests[{i}].test_id"), "must be non-empty");
            }
            if self.tests[..i].iter().any(|t| t.test_id == test.test_id) {
                return fail(
                    format!("tests[{i}].test_id"),
                    format!("duplicate test_id \"{}\"", test.test_id),
                );
            }
            for (field, rate) in [
                ("baseline_fail_rate", test.baseline_fail_rate),
                ("updated_fail_rate", test.updated_fail_rate),
            ] {
                if !(0.0..=1.0).contains(&rate) {
                    return fail(format!("tests[{i}].{field}"), "must lie in [0, 1]");
                }
            }
            if !(0.0..=0.5).contains(&test.flaky_noise) {
                return fail(format!("tests[{i}].flaky_noise"), "must lie in [0, 0.5]");
            }
        }
        for (i, event) in self.events.iter().enumerate() {
            if event.at_bucket >= self.duration {
                return fail(
                    format!("events[{i}].at_bucket"),
                    format!(
                        "bucket {} is outside the scenario duration {}",
                        event.at_bucket, self.duration
                    ),
                );
            }
            if !(0.0..=1.0).contains(&event.new_updated_fail_rate) {
                return fail(format!("events[{i}].new_updated_fail_rate"), "must lie in [0, 1]");
            }
            if !self.tests.iter().any(|t| t.test_id == event.affected_test) {
                return fail(
                    format!("events[{i}].affected_test"),
                    format!("no test with id \"{}\"", event.affected_test),
                );
            }
        }
        for (i, cluster) in self.clusters.iter().enumerate() {
            if cluster.cluster_id.is_empty() {
                return fail(format!("clusters[{i}].cluster_id"), "must be non-empty");
            }
            if self.clusters[..i]
                .iter()
                .any(|c| c.cluster_id == cluster.cluster_id)
            {
                return fail(
                    format!("clusters[{i}].cluster_id"),
                    format!("duplicate cluster_id \"{}\"", cluster.cluster_id),
                );
            }
        }
        if !self.events.is_empty()
            && !self.clusters.is_empty()
            && !self.clusters.iter().any(|c| c.receives_patch)
        {
            return fail(
                "clusters",
                "at least one cluster must receive the patch when events exist",
            );
        }
        Ok(())
    }
}

/// Independent generator for one simulation cell, derived by hashing the
/// coordinates so streams never overlap and never shift when the scenario
/// grows.
fn cell_rng(seed: u64, bucket: u64, cluster: Option<&str>, test_id: &str, version: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"fixdetect.sim.cell");
    hasher.update(seed.to_le_bytes());
    hasher.update(bucket.to_le_bytes());
    match cluster {
        None => hasher.update([0u8]),
        Some(id) => {
            hasher.update([1u8]);
            hasher.update((id.len() as u64).to_le_bytes());
            hasher.update(id.as_bytes());
        }
    }
    hasher.update((test_id.len() as u64).to_le_bytes());
    hasher.update(test_id.as_bytes());
    hasher.update((version.len() as u64).to_le_bytes());
    hasher.update(version.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

fn stream_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(label.as_bytes());
    hasher.update(seed.to_le_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Updated-version rate of `spec` at `bucket`: the latest ground-truth event
/// at or before the bucket wins; list order breaks exact ties.
fn active_updated_rate(spec: &TestSpec, events: &[GroundTruthEvent], bucket: u64) -> f64 {
    let mut rate = spec.updated_fail_rate;
    let mut latest: Option<u64> = None;
    for event in events {
        if event.affected_test == spec.test_id
            && event.at_bucket <= bucket
            && latest.is_none_or(|at| event.at_bucket >= at)
        {
            latest = Some(event.at_bucket);
            rate = event.new_updated_fail_rate;
        }
    }
    rate
}

/// Runs the scenario and returns the shuffled run reports plus the echo of
/// its ground-truth events.
///
/// Each cell's runs sample a Bernoulli at the cell's active rate after
/// applying that cell's own uniform rate jitter. The flat report list is
/// shuffled with a dedicated stream so downstream order-invariance is
/// exercised, but the shuffle is a pure function of the seed.
pub fn simulate(scenario: &Scenario) -> crate::Result<(Vec<TestRunReport>, Vec<GroundTruthEvent>)> {
    scenario.validate()?;

    let implicit = [ClusterSpec {
        cluster_id: String::new(),
        receives_patch: true,
    }];
    let (clusters, implicit_cluster): (&[ClusterSpec], bool) = if scenario.clusters.is_empty() {
        (&implicit, true)
    } else {
        (&scenario.clusters, false)
    };

    let runs_per_cell = scenario.runs_per_bucket_per_version;
    let mut reports = Vec::new();
    for bucket in 0..scenario.duration {
        let bucket_start = bucket * scenario.bucket_width_ms;
        for cluster in clusters {
            let cluster_key = if implicit_cluster {
                None
            } else {
                Some(cluster.cluster_id.as_str())
            };
            for test in &scenario.tests {
                for version in [BASELINE_VERSION, UPDATED_VERSION] {
                    let rate = if version == BASELINE_VERSION || !cluster.receives_patch {
                        test.baseline_fail_rate
                    } else {
                        active_updated_rate(test, &scenario.events, bucket)
                    };
                    let mut rng =
                        cell_rng(scenario.seed, bucket, cluster_key, &test.test_id, version);
                    let rate = if test.flaky_noise > 0.0 {
                        let jitter: f64 = rng.random_range(-test.flaky_noise..=test.flaky_noise);
                        (rate + jitter).clamp(0.0, 1.0)
                    } else {
                        rate
                    };
                    for i in 0..runs_per_cell {
                        let timestamp = bucket_start + i * scenario.bucket_width_ms / runs_per_cell;
                        let failed = rng.random::<f64>() < rate;
                        let report = if failed {
                            TestRunReport::failed(
                                timestamp,
                                version,
                                cluster_key.map(str::to_owned),
                                &test.test_id,
                                test.signature.clone(),
                            )
                        } else {
                            TestRunReport::passed(
                                timestamp,
                                version,
                                cluster_key.map(str::to_owned),
                                &test.test_id,
                            )
                        };
                        reports.push(report);
                    }
                }
            }
        }
    }

    let mut shuffle_rng = stream_rng(scenario.seed, "fixdetect.sim.shuffle");
    rand::seq::SliceRandom::shuffle(reports.as_mut_slice(), &mut shuffle_rng);
    Ok((reports, scenario.events.clone()))
}

/// Synthetic degree series with one step shift and Gaussian noise, clamped
/// to the legal degree range. Used by benchmarks and detector smoke tests.
pub fn synthetic_shift_series(
    n: usize,
    shift_at: usize,
    mean_before: f64,
    mean_after: f64,
    sigma: f64,
    seed: u64,
) -> DegreeSeries {
    use rand_distr::Distribution;
    let mut rng = stream_rng(seed, "fixdetect.sim.synthetic");
    let noise = rand_distr::Normal::new(0.0, sigma).expect("sigma must be finite and >= 0");
    let method = MethodId::new("synthetic_method").expect("non-empty literal");
    let points = (0..n)
        .map(|i| {
            let base = if i < shift_at { mean_before } else { mean_after };
            SeriesPoint {
                t: i as u64 * 3_600_000,
                degree: (base + noise.sample(&mut rng)).clamp(-1.0, 1.0),
                n_runs: 40,
            }
        })
        .collect();
    DegreeSeries {
        method: method.clone(),
        signature: FailureSignature::new("synthetic_test", method, 0),
        bucket_width_ms: 3_600_000,
        points,
    }
}
