//! Error-causing-degree time series for one (method, signature) pair.
//!
//! Runs are bucketed by wall-clock time; each bucket with enough runs on
//! both versions contributes one Difference-degree point. Only the
//! Difference measure is admitted here: its degrees are real-valued and
//! bounded, which the downstream mean-based fix/bug classification needs
//! (Ratio's +∞ sentinel would poison segment means).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::causal::{self, causal_degree, MeasureKind};
use crate::types::{
    FailureSignature, MethodId, PatchIntervention, ProbabilityEstimate, SignatureIdentity,
    TestRunReport,
};
use crate::Error;

/// One degree observation: bucket start time, degree, combined run count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    /// Bucket start, milliseconds since epoch.
    pub t: u64,
    /// Difference degree for this bucket, in [−1, 1].
    pub degree: f64,
    /// Runs backing the point (both versions combined).
    pub n_runs: u64,
}

/// Time-ordered error-causing degrees of one method for one failure group.
///
/// Points are strictly increasing in `t` and aligned to the earliest run
/// timestamp; buckets without enough runs are gaps, not zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSeries {
    pub method: MethodId,
    pub signature: FailureSignature,
    pub bucket_width_ms: u64,
    pub points: Vec<SeriesPoint>,
}

impl DegreeSeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Degrees in time order.
    pub fn degrees(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.degree)
    }

    /// Mean degree over `range` (used by the fix/bug mean rule).
    pub fn mean_degree(&self, range: std::ops::Range<usize>) -> f64 {
        let slice = &self.points[range];
        slice.iter().map(|p| p.degree).sum::<f64>() / slice.len() as f64
    }
}

/// Builds the degree series of (`method`, `signature`) under `patch`.
///
/// Buckets are `bucket_width_ms` wide, aligned to the earliest timestamp
/// among the runs of `signature`'s test. A bucket qualifies only when both
/// versions have at least `min_runs_per_bucket` runs in it.
#[allow(clippy::too_many_arguments)]
pub fn build_degree_series(
    baseline_runs: &[TestRunReport],
    updated_runs: &[TestRunReport],
    patch: &PatchIntervention,
    signature: &FailureSignature,
    method: &MethodId,
    bucket_width_ms: u64,
    min_runs_per_bucket: usize,
    identity: SignatureIdentity,
) -> crate::Result<DegreeSeries> {
    if bucket_width_ms == 0 {
        return Err(Error::InvalidBucketWidth);
    }
    if min_runs_per_bucket == 0 {
        return Err(Error::InvalidParameter(
            "min_runs_per_bucket must be at least 1".into(),
        ));
    }
    if baseline_runs.is_empty() || updated_runs.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    causal::require_version(baseline_runs, &patch.baseline_version)?;
    causal::require_version(updated_runs, &patch.updated_version)?;

    fn of_test<'a>(runs: &'a [TestRunReport], test_id: &str) -> Vec<&'a TestRunReport> {
        runs.iter().filter(|r| r.test_id == test_id).collect()
    }
    let baseline = of_test(baseline_runs, &signature.test_id);
    let updated = of_test(updated_runs, &signature.test_id);
    let origin = baseline
        .iter()
        .chain(updated.iter())
        .map(|r| r.timestamp)
        .min()
        .ok_or(Error::EmptySeries)?;

    // Per bucket: (runs, failures) for each version.
    #[derive(Default)]
    struct BucketCounts {
        baseline: (u64, u64),
        updated: (u64, u64),
    }
    let mut buckets: BTreeMap<u64, BucketCounts> = BTreeMap::new();
    for (runs, is_updated) in [(&baseline, false), (&updated, true)] {
        for run in runs.iter() {
            let idx = (run.timestamp - origin) / bucket_width_ms;
            let entry = buckets.entry(idx).or_default();
            let (n, f) = if is_updated {
                &mut entry.updated
            } else {
                &mut entry.baseline
            };
            *n += 1;
            if run.fails_as(signature, identity) {
                *f += 1;
            }
        }
    }

    let floor = min_runs_per_bucket as u64;
    let mut points = Vec::new();
    for (idx, counts) in buckets {
        let (bn, bf) = counts.baseline;
        let (un, uf) = counts.updated;
        if bn < floor || un < floor {
            continue;
        }
        let p_without = ProbabilityEstimate::from_counts(bf, bn)?;
        let p_with = ProbabilityEstimate::from_counts(uf, un)?;
        let degree = causal_degree(p_with, p_without, MeasureKind::Difference)?.value;
        points.push(SeriesPoint {
            t: origin + idx * bucket_width_ms,
            degree,
            n_runs: bn + un,
        });
    }
    if points.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(DegreeSeries {
        method: method.clone(),
        signature: signature.clone(),
        bucket_width_ms,
        points,
    })
}

/// Splits `series` into the first `k` points and the rest.
///
/// Valid splits leave both sides non-empty: `1 ≤ k < len`.
pub fn split_series(series: &DegreeSeries, k: usize) -> crate::Result<(DegreeSeries, DegreeSeries)> {
    let len = series.len();
    if k == 0 || k >= len {
        return Err(Error::IndexOutOfRange { index: k, len });
    }
    let mut first = series.clone();
    let second_points = first.points.split_off(k);
    let second = DegreeSeries {
        method: series.method.clone(),
        signature: series.signature.clone(),
        bucket_width_ms: series.bucket_width_ms,
        points: second_points,
    };
    Ok((first, second))
}
