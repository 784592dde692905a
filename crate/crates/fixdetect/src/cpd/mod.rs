//! Changepoint detection over degree series.
//!
//! A changepoint at split k is certified when a two-sample test says the
//! first k points and the rest are drawn from different distributions, after
//! a multiple-testing correction over all candidate splits. Each detected
//! point is classified by the segment-mean rule: the degree dropping means a
//! fix landed, rising means a bug landed.

pub mod online;
mod stat;

pub use online::CusumState;
pub use stat::{ks_p, mann_whitney_p};

use serde::{Deserialize, Serialize};

use crate::series::{split_series, DegreeSeries};
use crate::Error;

/// Two-sample test used to compare candidate segments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    /// Rank-based; robust to the outliers flaky tests produce.
    #[default]
    MannWhitneyU,
    /// Distribution-shape test; catches equal-mean changes.
    KolmogorovSmirnov,
}

/// Multiple-testing correction over the candidate splits of one scan.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    #[default]
    Bonferroni,
    None,
}

/// Scan policy for [`detect_changepoint`] / [`detect_all`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpdConfig {
    /// Family-wise significance level for one scan.
    pub alpha: f64,
    /// Minimum points on each side of a split.
    pub min_segment: usize,
    pub test: TestKind,
    /// Distance between candidate splits. Auto-raised to ceil(n/2000) on
    /// long series so a scan stays at ~2000 tests.
    pub stride: usize,
    pub correction: Correction,
}

impl Default for CpdConfig {
    fn default() -> Self {
        CpdConfig {
            alpha: 0.01,
            min_segment: 5,
            test: TestKind::default(),
            stride: 1,
            correction: Correction::default(),
        }
    }
}

impl CpdConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(
                "alpha must lie strictly between 0 and 1".into(),
            ));
        }
        if self.min_segment < 2 {
            return Err(Error::InvalidParameter(
                "min_segment must be at least 2".into(),
            ));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        Ok(())
    }

    fn effective_stride(&self, n: usize) -> usize {
        let cap = if n > 2000 { n.div_ceil(2000) } else { 1 };
        self.stride.max(cap)
    }
}

/// Direction of a detected change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    /// Error-causing degree dropped: a fix landed.
    Fix,
    /// Error-causing degree rose: a bug landed.
    Bug,
}

/// One certified changepoint. `index` is the number of points before the
/// change, so `points[..index]` is the old regime and `points[index..]` the
/// new one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub index: usize,
    /// Corrected p-value; always ≤ the producing config's alpha.
    pub p_value: f64,
    pub mean_before: f64,
    pub mean_after: f64,
    pub kind: ChangeKind,
}

/// (p, ln p) for the split at `k`. The log form never underflows, so the
/// scan can rank splits whose p-values all round to zero.
fn split_sig(
    values: &[f64],
    k: usize,
    test: TestKind,
    ranks: &RankScan,
) -> crate::Result<(f64, f64)> {
    match test {
        TestKind::MannWhitneyU => {
            let (n1, n2) = (k, values.len() - k);
            if stat::mw_exact_applies(n1, n2) {
                // Exact p-values are count ratios, bounded away from zero.
                let p = mann_whitney_p(&values[..k], &values[k..])?;
                Ok((p, p.ln()))
            } else {
                Ok(stat::mw_approx_sig(ranks.prefix[k], n1, n2, ranks.tie_cubes))
            }
        }
        TestKind::KolmogorovSmirnov => stat::ks_sig(&values[..k], &values[k..]),
    }
}

/// Shared rank statistics of a whole series, letting the Mann-Whitney scan
/// evaluate each candidate split in O(1). Ranks over any split's two
/// segments are ranks over the whole series, so they can be computed once.
struct RankScan {
    /// prefix[k] = Σ doubled midranks of the first k points (time order).
    prefix: Vec<u64>,
    tie_cubes: u64,
}

impl RankScan {
    fn new(values: &[f64]) -> Self {
        let (rank2, tie_cubes) = stat::doubled_midranks(values);
        let mut prefix = Vec::with_capacity(values.len() + 1);
        let mut acc = 0u64;
        prefix.push(0);
        for r in rank2 {
            acc += r;
            prefix.push(acc);
        }
        RankScan { prefix, tie_cubes }
    }
}

/// Scans all candidate splits of `series` and returns the most significant
/// changepoint, if any survives the correction at `config.alpha`.
///
/// Candidates are k = min_segment, min_segment+stride, …, n−min_segment.
/// The minimum p over candidates is corrected (Bonferroni: m·p_min) and the
/// earliest split achieving it wins. Candidates are ranked in log space: on
/// long series a strong shift drives the approximate p to an exact zero at
/// many splits at once, and comparing raw p-values there would hand the win
/// to the first underflowed split instead of the largest deviation. A split
/// whose segment means are exactly equal is suppressed: the fix/bug rule
/// needs a strict direction.
pub fn detect_changepoint(
    series: &DegreeSeries,
    config: &CpdConfig,
) -> crate::Result<Option<ChangeEvent>> {
    config.validate()?;
    let n = series.len();
    if n < 2 * config.min_segment {
        return Ok(None);
    }
    let values: Vec<f64> = series.degrees().collect();
    let ranks = RankScan::new(&values);
    let stride = config.effective_stride(n);

    let mut best: Option<(f64, f64, usize)> = None;
    let mut m = 0usize;
    let mut k = config.min_segment;
    while k <= n - config.min_segment {
        let (p, lnp) = split_sig(&values, k, config.test, &ranks)?;
        m += 1;
        if best.is_none_or(|(blnp, _, _)| lnp < blnp) {
            best = Some((lnp, p, k));
        }
        k += stride;
    }
    let Some((_, p_min, k)) = best else {
        return Ok(None);
    };

    let corrected = match config.correction {
        Correction::Bonferroni => (m as f64 * p_min).min(1.0),
        Correction::None => p_min,
    };
    if corrected > config.alpha {
        return Ok(None);
    }
    let mean_before = series.mean_degree(0..k);
    let mean_after = series.mean_degree(k..n);
    if mean_before == mean_after {
        return Ok(None);
    }
    let kind = if mean_after < mean_before {
        ChangeKind::Fix
    } else {
        ChangeKind::Bug
    };
    Ok(Some(ChangeEvent {
        index: k,
        p_value: corrected,
        mean_before,
        mean_after,
        kind,
    }))
}

/// Recursive binary segmentation: detects a changepoint, splits there, and
/// rescans both halves, so multi-event histories (a bug landing and later
/// being fixed) come back as separate events. The correction is applied
/// within each segment's own scan. Events are sorted by index.
pub fn detect_all(series: &DegreeSeries, config: &CpdConfig) -> crate::Result<Vec<ChangeEvent>> {
    let mut events = Vec::new();
    let mut work = vec![(series.clone(), 0usize)];
    while let Some((segment, offset)) = work.pop() {
        if let Some(event) = detect_changepoint(&segment, config)? {
            let (first, second) = split_series(&segment, event.index)?;
            events.push(ChangeEvent {
                index: offset + event.index,
                ..event
            });
            work.push((first, offset));
            work.push((second, offset + event.index));
        }
    }
    events.sort_by_key(|e| e.index);
    Ok(events)
}
