//! Core vocabulary shared by every pipeline stage.
//!
//! All types here are immutable values; they are cheap to clone and safe to
//! send across threads.

use serde::{Deserialize, Serialize};

use crate::Error;

/// A fully qualified method identifier, e.g. `"com.app.Cache::evict"`.
///
/// The name is opaque to the pipeline; the only requirement is that it is
/// non-empty and that equal strings denote the same method.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MethodId(String);

impl MethodId {
    pub fn new(name: impl Into<String>) -> crate::Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidParameter(
                "method name must be non-empty".into(),
            ));
        }
        Ok(MethodId(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for MethodId {
    type Error = Error;

    fn try_from(name: String) -> crate::Result<Self> {
        MethodId::new(name)
    }
}

impl From<MethodId> for String {
    fn from(m: MethodId) -> String {
        m.0
    }
}

impl std::fmt::Display for MethodId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identity of one observed failure: the failing test, the method at the top
/// of the stack trace, and a hash of the full trace.
///
/// Two signatures are equal iff all three fields are equal. The
/// [`SignatureIdentity`] relation can relax this to (test, top method) only.
#[derive(
    Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct FailureSignature {
    pub test_id: String,
    pub top_method: MethodId,
    pub trace_hash: u64,
}

impl FailureSignature {
    pub fn new(test_id: impl Into<String>, top_method: MethodId, trace_hash: u64) -> Self {
        FailureSignature {
            test_id: test_id.into(),
            top_method,
            trace_hash,
        }
    }
}

/// When two failures count as "the same" for probability estimation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureIdentity {
    /// Full identity: (test_id, top_method, trace_hash).
    #[default]
    TraceScoped,
    /// Relaxed identity: (test_id, top_method); trace hashes ignored.
    TestMethodScoped,
}

impl SignatureIdentity {
    /// True when `a` and `b` denote the same failure under this relation.
    pub fn matches(self, a: &FailureSignature, b: &FailureSignature) -> bool {
        match self {
            SignatureIdentity::TraceScoped => a == b,
            SignatureIdentity::TestMethodScoped => {
                a.test_id == b.test_id && a.top_method == b.top_method
            }
        }
    }
}

/// Outcome of one test execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
}

/// One execution of one test on one code version.
///
/// Invariant: `outcome == Fail` iff `failure_signature` is present. The
/// constructors uphold it; JSONL ingestion rejects lines that violate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTestRunReport")]
pub struct TestRunReport {
    /// Milliseconds since epoch.
    pub timestamp: u64,
    /// Identifies the codebase version / patch state the run executed on.
    pub version_id: String,
    /// Canary cluster the run executed in, when the deployment has several.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_id: Option<String>,
    pub test_id: String,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_signature: Option<FailureSignature>,
}

impl TestRunReport {
    pub fn passed(
        timestamp: u64,
        version_id: impl Into<String>,
        cluster_id: Option<String>,
        test_id: impl Into<String>,
    ) -> Self {
        TestRunReport {
            timestamp,
            version_id: version_id.into(),
            cluster_id,
            test_id: test_id.into(),
            outcome: Outcome::Pass,
            failure_signature: None,
        }
    }

    pub fn failed(
        timestamp: u64,
        version_id: impl Into<String>,
        cluster_id: Option<String>,
        test_id: impl Into<String>,
        signature: FailureSignature,
    ) -> Self {
        TestRunReport {
            timestamp,
            version_id: version_id.into(),
            cluster_id,
            test_id: test_id.into(),
            outcome: Outcome::Fail,
            failure_signature: Some(signature),
        }
    }

    /// True iff the run failed with a signature matching `target` under
    /// `identity`.
    pub fn fails_as(&self, target: &FailureSignature, identity: SignatureIdentity) -> bool {
        match (&self.outcome, &self.failure_signature) {
            (Outcome::Fail, Some(sig)) => identity.matches(sig, target),
            _ => false,
        }
    }
}

#[derive(Deserialize)]
struct RawTestRunReport {
    timestamp: u64,
    version_id: String,
    #[serde(default)]
    cluster_id: Option<String>,
    test_id: String,
    outcome: Outcome,
    #[serde(default)]
    failure_signature: Option<FailureSignature>,
}

impl TryFrom<RawTestRunReport> for TestRunReport {
    type Error = String;

    fn try_from(raw: RawTestRunReport) -> Result<Self, String> {
        match (raw.outcome, &raw.failure_signature) {
            (Outcome::Fail, None) => {
                return Err("outcome is \"fail\" but failure_signature is missing".into())
            }
            (Outcome::Pass, Some(_)) => {
                return Err("outcome is \"pass\" but failure_signature is present".into())
            }
            _ => {}
        }
        Ok(TestRunReport {
            timestamp: raw.timestamp,
            version_id: raw.version_id,
            cluster_id: raw.cluster_id,
            test_id: raw.test_id,
            outcome: raw.outcome,
            failure_signature: raw.failure_signature,
        })
    }
}

/// A patch deployed as an intervention: runs on `updated_version` observe the
/// world with the patch, runs on `baseline_version` observe it without.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchIntervention {
    pub baseline_version: String,
    pub updated_version: String,
    /// Methods the patch touched; candidates for cause attribution.
    pub patched_methods: std::collections::BTreeSet<MethodId>,
}

impl PatchIntervention {
    pub fn new(
        baseline_version: impl Into<String>,
        updated_version: impl Into<String>,
        patched_methods: impl IntoIterator<Item = MethodId>,
    ) -> crate::Result<Self> {
        let patch = PatchIntervention {
            baseline_version: baseline_version.into(),
            updated_version: updated_version.into(),
            patched_methods: patched_methods.into_iter().collect(),
        };
        patch.validate()?;
        Ok(patch)
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.baseline_version == self.updated_version {
            return Err(Error::InvalidParameter(
                "baseline_version and updated_version must differ".into(),
            ));
        }
        if self.patched_methods.is_empty() {
            return Err(Error::InvalidParameter(
                "patched_methods must be non-empty".into(),
            ));
        }
        Ok(())
    }
}

/// An interventional failure probability estimated as an exact proportion.
///
/// `p` is always `n_failures as f64 / n_runs as f64`; the counts are kept so
/// callers can reason about sample size and recover the exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub p: f64,
    pub n_runs: u64,
    pub n_failures: u64,
}

impl ProbabilityEstimate {
    pub fn from_counts(n_failures: u64, n_runs: u64) -> crate::Result<Self> {
        if n_runs == 0 {
            return Err(Error::EmptyPopulation);
        }
        if n_failures > n_runs {
            return Err(Error::InvalidParameter(format!(
                "n_failures ({n_failures}) exceeds n_runs ({n_runs})"
            )));
        }
        Ok(ProbabilityEstimate {
            p: n_failures as f64 / n_runs as f64,
            n_runs,
            n_failures,
        })
    }
}
