//! Interventional probability estimation and failure grouping.
//!
//! A patch deployment is treated as an intervention: the failure probability
//! of a signature is estimated separately on runs of the updated version
//! (with the patch) and the baseline version (without it), and the gap
//! between the two estimates is the patch's error-causing degree for that
//! signature. Failures whose degree clears a threshold are grouped to the
//! patched methods as their cause.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::types::{
    FailureSignature, MethodId, PatchIntervention, ProbabilityEstimate, SignatureIdentity,
    TestRunReport,
};
use crate::Error;

/// How causal strength is measured from the two interventional estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    /// Boolean: the patch raises the failure probability at all.
    PearlPredicate,
    /// p_with − p_without, in [−1, 1].
    Difference,
    /// p_with / p_without, in [0, +∞]; +∞ when only the denominator is 0.
    Ratio,
}

/// Serializes an extended real: finite values as JSON numbers, infinities as
/// the strings "inf" / "-inf" (JSON has no infinity literal).
mod extended_real {
    use serde::de::Error as _;
    use serde::ser::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            ser.serialize_f64(*value)
        } else if *value == f64::INFINITY {
            ser.serialize_str("inf")
        } else if *value == f64::NEG_INFINITY {
            ser.serialize_str("-inf")
        } else {
            Err(S::Error::custom("degree is NaN"))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Wire {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        match Wire::deserialize(de)? {
            Wire::Num(v) => Ok(v),
            Wire::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Wire::Str(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Wire::Str(s) => Err(D::Error::custom(format!("not an extended real: \"{s}\""))),
        }
    }
}

/// Causal strength of an intervention for one failure signature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalDegree {
    #[serde(with = "extended_real")]
    pub value: f64,
    pub measure: MeasureKind,
}

/// Thresholding and sample-size policy for [`group_failures`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupingConfig {
    pub measure: MeasureKind,
    /// A cause qualifies when its degree strictly exceeds this. Ignored by
    /// the predicate measure, which qualifies on the bare comparison.
    pub threshold: f64,
    /// Minimum runs each version must have per considered test.
    pub min_runs_per_version: usize,
    /// When two failures count as the same signature.
    pub identity: SignatureIdentity,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig::for_measure(MeasureKind::Difference)
    }
}

impl GroupingConfig {
    /// Config with the conventional threshold for `measure`: 0.2 for
    /// Difference, 2.0 for Ratio (the predicate ignores it).
    pub fn for_measure(measure: MeasureKind) -> Self {
        let threshold = match measure {
            MeasureKind::Ratio => 2.0,
            _ => 0.2,
        };
        GroupingConfig {
            measure,
            threshold,
            min_runs_per_version: 10,
            identity: SignatureIdentity::default(),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !self.threshold.is_finite() {
            return Err(Error::InvalidParameter("threshold must be finite".into()));
        }
        if self.min_runs_per_version == 0 {
            return Err(Error::InvalidParameter(
                "min_runs_per_version must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One attributed cause of a failure signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cause {
    pub method: MethodId,
    #[serde(with = "extended_real")]
    pub degree: f64,
    pub measure: MeasureKind,
}

impl Cause {
    pub fn causal_degree(&self) -> CausalDegree {
        CausalDegree {
            value: self.degree,
            measure: self.measure,
        }
    }
}

/// A failure signature with its qualifying causes. An empty cause list means
/// the signature was observed on the updated version but no candidate method
/// cleared the threshold (useful for false-grouping diagnostics).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub signature: FailureSignature,
    pub causes: Vec<Cause>,
}

/// Grouping of every failure signature observed on the updated version.
///
/// Entries are sorted by signature; causes are sorted by degree descending,
/// ties broken by method name ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureGrouping {
    pub entries: Vec<GroupEntry>,
}

/// Estimates the failure probability of `target` as the exact proportion of
/// matching failures among `runs`.
///
/// All runs must come from a single version and from `target`'s test; the
/// caller chooses which intervention arm that population represents.
pub fn estimate_do_probability<'a, I>(
    runs: I,
    target: &FailureSignature,
    identity: SignatureIdentity,
) -> crate::Result<ProbabilityEstimate>
where
    I: IntoIterator<Item = &'a TestRunReport>,
{
    let mut version: Option<&str> = None;
    let mut n_runs = 0u64;
    let mut n_failures = 0u64;
    for run in runs {
        match version {
            None => version = Some(&run.version_id),
            Some(v) if v != run.version_id => {
                return Err(Error::MixedPopulation {
                    detail: format!(
                        "run population spans versions \"{v}\" and \"{}\"",
                        run.version_id
                    ),
                })
            }
            _ => {}
        }
        if run.test_id != target.test_id {
            return Err(Error::MixedPopulation {
                detail: format!(
                    "expected runs of test \"{}\", found \"{}\"",
                    target.test_id, run.test_id
                ),
            });
        }
        n_runs += 1;
        if run.fails_as(target, identity) {
            n_failures += 1;
        }
    }
    if n_runs == 0 {
        return Err(Error::EmptyPopulation);
    }
    ProbabilityEstimate::from_counts(n_failures, n_runs)
}

/// True iff the intervention strictly raises the failure probability.
pub fn pearl_causes(p_with: ProbabilityEstimate, p_without: ProbabilityEstimate) -> bool {
    p_with.p > p_without.p
}

/// Numeric causal strength under `measure` (Difference or Ratio).
pub fn causal_degree(
    p_with: ProbabilityEstimate,
    p_without: ProbabilityEstimate,
    measure: MeasureKind,
) -> crate::Result<CausalDegree> {
    let value = match measure {
        MeasureKind::PearlPredicate => return Err(Error::UnsupportedMeasure),
        MeasureKind::Difference => p_with.p - p_without.p,
        MeasureKind::Ratio => {
            if p_without.p > 0.0 {
                p_with.p / p_without.p
            } else if p_with.p > 0.0 {
                f64::INFINITY
            } else {
                return Err(Error::UndefinedRatio);
            }
        }
    };
    Ok(CausalDegree { value, measure })
}

/// Groups every failure signature observed on the updated version to the
/// candidate methods whose causal degree qualifies under `config`.
///
/// Candidates for a signature are the patched methods plus the signature's
/// own top-of-stack method. All candidates share the signature's degree (the
/// patch is the intervention; its methods are indistinguishable here), so
/// either all or none qualify; the cause order is then method name ascending.
pub fn group_failures(
    baseline_runs: &[TestRunReport],
    updated_runs: &[TestRunReport],
    patch: &PatchIntervention,
    config: &GroupingConfig,
) -> crate::Result<FailureGrouping> {
    config.validate()?;
    patch.validate()?;
    if baseline_runs.is_empty() || updated_runs.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    require_version(baseline_runs, &patch.baseline_version)?;
    require_version(updated_runs, &patch.updated_version)?;

    // Canonical signatures observed among updated-version failures. Under the
    // relaxed identity the representative of each (test, method) class is the
    // signature with the smallest trace hash; BTreeSet order makes that the
    // first of its class.
    let observed: BTreeSet<&FailureSignature> = updated_runs
        .iter()
        .filter_map(|r| r.failure_signature.as_ref())
        .collect();
    let mut signatures: Vec<&FailureSignature> = Vec::new();
    for sig in observed {
        if !signatures
            .iter()
            .any(|prev| config.identity.matches(prev, sig))
        {
            signatures.push(sig);
        }
    }

    let considered: BTreeSet<&str> = signatures.iter().map(|s| s.test_id.as_str()).collect();
    for test_id in &considered {
        for (runs, version) in [
            (baseline_runs, &patch.baseline_version),
            (updated_runs, &patch.updated_version),
        ] {
            let actual = runs.iter().filter(|r| r.test_id == *test_id).count();
            if actual < config.min_runs_per_version {
                return Err(Error::InsufficientRuns {
                    test_id: test_id.to_string(),
                    version_id: version.clone(),
                    actual,
                    required: config.min_runs_per_version,
                });
            }
        }
    }

    let mut entries = Vec::with_capacity(signatures.len());
    for sig in signatures {
        let same_test = |r: &&TestRunReport| r.test_id == sig.test_id;
        let p_without = estimate_do_probability(
            baseline_runs.iter().filter(same_test),
            sig,
            config.identity,
        )?;
        let p_with = estimate_do_probability(
            updated_runs.iter().filter(same_test),
            sig,
            config.identity,
        )?;

        let (qualifies, degree) = match config.measure {
            MeasureKind::PearlPredicate => {
                let causes = pearl_causes(p_with, p_without);
                (causes, if causes { 1.0 } else { 0.0 })
            }
            measure => {
                // p_with > 0 because the signature was observed on the
                // updated version, so Ratio is always defined here.
                let degree = causal_degree(p_with, p_without, measure)?;
                (degree.value > config.threshold, degree.value)
            }
        };

        let mut causes = Vec::new();
        if qualifies {
            let mut candidates: BTreeSet<&MethodId> = patch.patched_methods.iter().collect();
            candidates.insert(&sig.top_method);
            causes.extend(candidates.into_iter().map(|method| Cause {
                method: method.clone(),
                degree,
                measure: config.measure,
            }));
        }
        entries.push(GroupEntry {
            signature: sig.clone(),
            causes,
        });
    }
    entries.sort_by(|a, b| a.signature.cmp(&b.signature));
    Ok(FailureGrouping { entries })
}

pub(crate) fn require_version(runs: &[TestRunReport], version: &str) -> crate::Result<()> {
    for run in runs {
        if run.version_id != version {
            return Err(Error::MixedPopulation {
                detail: format!(
                    "expected runs of version \"{version}\", found \"{}\"",
                    run.version_id
                ),
            });
        }
    }
    Ok(())
}
