//! Scoring of grouping and detection output against ground truth, plus a
//! runtime benchmark for the detector.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::causal::FailureGrouping;
use crate::cpd::{detect_all, ChangeEvent, ChangeKind, CpdConfig};
use crate::sim::{synthetic_shift_series, GroundTruthEvent, TruthKind};
use crate::types::{FailureSignature, MethodId};

/// Classification counts with the derived IR measures.
///
/// Empty denominators default to 1 (a vacuous precision or recall is not a
/// failure), which keeps threshold sweeps total. Accuracy needs true
/// negatives, so both are absent unless a candidate universe was supplied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(rename = "tp")]
    pub true_positives: u64,
    #[serde(rename = "fp")]
    pub false_positives: u64,
    #[serde(rename = "fn")]
    pub false_negatives: u64,
    #[serde(rename = "tn", skip_serializing_if = "Option::is_none")]
    pub true_negatives: Option<u64>,
}

impl IrScores {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: Option<u64>) -> IrScores {
        let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let accuracy = tn.map(|tn| ratio(tp + tn, tp + fp + fn_ + tn));
        IrScores {
            precision,
            recall,
            f1,
            accuracy,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            true_negatives: tn,
        }
    }
}

/// Scores a predicted grouping against truth, one (signature, method) pair
/// per classification instance.
///
/// With a candidate `universe` of methods, true negatives are counted over
/// the (observed signatures × universe) grid and accuracy is reported;
/// without one, both stay absent.
pub fn score_grouping(
    predicted: &FailureGrouping,
    truth: &BTreeMap<FailureSignature, BTreeSet<MethodId>>,
    universe: Option<&BTreeSet<MethodId>>,
) -> IrScores {
    let predicted_pairs: BTreeSet<(&FailureSignature, &MethodId)> = predicted
        .entries
        .iter()
        .flat_map(|e| e.causes.iter().map(move |c| (&e.signature, &c.method)))
        .collect();
    let truth_pairs: BTreeSet<(&FailureSignature, &MethodId)> = truth
        .iter()
        .flat_map(|(sig, methods)| methods.iter().map(move |m| (sig, m)))
        .collect();

    let tp = predicted_pairs.intersection(&truth_pairs).count() as u64;
    let fp = predicted_pairs.difference(&truth_pairs).count() as u64;
    let fn_ = truth_pairs.difference(&predicted_pairs).count() as u64;

    let tn = universe.map(|methods| {
        let signatures: BTreeSet<&FailureSignature> = predicted
            .entries
            .iter()
            .map(|e| &e.signature)
            .chain(truth.keys())
            .collect();
        let mut tn = 0u64;
        for sig in signatures {
            for method in methods {
                let pair = (sig, method);
                if !predicted_pairs.contains(&pair) && !truth_pairs.contains(&pair) {
                    tn += 1;
                }
            }
        }
        tn
    });
    IrScores::from_counts(tp, fp, fn_, tn)
}

/// One detected event paired with the ground-truth event it explains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedEvent {
    pub truth: GroundTruthEvent,
    pub event: ChangeEvent,
    /// Detected index minus true bucket; |delta| ≤ the match tolerance.
    pub index_delta: i64,
}

/// Outcome of matching detected events against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub matched: Vec<MatchedEvent>,
    /// Truth events no detection explained.
    pub misses: Vec<GroundTruthEvent>,
    /// Detections explaining no truth event.
    pub spurious: Vec<ChangeEvent>,
    /// Mean |index_delta| over matches (0 when nothing matched).
    pub mean_abs_delta: f64,
}

impl DetectionScore {
    pub fn ir_scores(&self) -> IrScores {
        IrScores::from_counts(
            self.matched.len() as u64,
            self.spurious.len() as u64,
            self.misses.len() as u64,
            None,
        )
    }
}

fn kinds_agree(event: ChangeKind, truth: TruthKind) -> bool {
    matches!(
        (event, truth),
        (ChangeKind::Fix, TruthKind::FixIntroduced) | (ChangeKind::Bug, TruthKind::BugIntroduced)
    )
}

/// Greedily matches detections to truth events one-to-one, nearest index
/// first, requiring kind agreement and |delta| ≤ `match_tolerance`.
///
/// Greedy (not optimal assignment) keeps the matching deterministic and
/// explainable; ties on distance are broken by truth order, then detection
/// order.
pub fn score_detection(
    events: &[ChangeEvent],
    truth: &[GroundTruthEvent],
    match_tolerance: u64,
) -> DetectionScore {
    let mut events: Vec<ChangeEvent> = events.to_vec();
    events.sort_by_key(|e| e.index);
    let mut truth: Vec<GroundTruthEvent> = truth.to_vec();
    truth.sort_by_key(|t| t.at_bucket);

    let mut candidates = Vec::new();
    for (ti, t) in truth.iter().enumerate() {
        for (ei, e) in events.iter().enumerate() {
            if !kinds_agree(e.kind, t.kind) {
                continue;
            }
            let delta = e.index as i64 - t.at_bucket as i64;
            if delta.unsigned_abs() <= match_tolerance {
                candidates.push((delta.unsigned_abs(), ti, ei, delta));
            }
        }
    }
    candidates.sort();

    let mut truth_taken = vec![false; truth.len()];
    let mut event_taken = vec![false; events.len()];
    let mut matched = Vec::new();
    for (_, ti, ei, delta) in candidates {
        if truth_taken[ti] || event_taken[ei] {
            continue;
        }
        truth_taken[ti] = true;
        event_taken[ei] = true;
        matched.push(MatchedEvent {
            truth: truth[ti].clone(),
            event: events[ei],
            index_delta: delta,
        });
    }
    matched.sort_by_key(|m| m.truth.at_bucket);

    let misses = truth
        .into_iter()
        .zip(&truth_taken)
        .filter_map(|(t, &taken)| (!taken).then_some(t))
        .collect();
    let spurious = events
        .into_iter()
        .zip(&event_taken)
        .filter_map(|(e, &taken)| (!taken).then_some(e))
        .collect();
    let mean_abs_delta = if matched.is_empty() {
        0.0
    } else {
        matched.iter().map(|m| m.index_delta.abs() as f64).sum::<f64>() / matched.len() as f64
    };
    DetectionScore {
        matched,
        misses,
        spurious,
        mean_abs_delta,
    }
}

/// Times [`detect_all`] on a synthetic `n`-point series with one mid-series
/// shift (0.55 → 0.05, σ = 0.05), returning the wall time and the events.
pub fn bench_detect(
    n: usize,
    config: &CpdConfig,
    seed: u64,
) -> crate::Result<(Duration, Vec<ChangeEvent>)> {
    let series = synthetic_shift_series(n, n / 2, 0.55, 0.05, 0.05, seed);
    let start = Instant::now();
    let events = detect_all(&series, config)?;
    Ok((start.elapsed(), events))
}
