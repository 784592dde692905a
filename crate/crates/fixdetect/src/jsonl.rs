//! JSONL ingestion and emission of run reports: one JSON object per line.
//!
//! Strict mode (the default) rejects unknown fields so schema drift in a CI
//! exporter surfaces immediately; lenient mode ignores them.

use std::io::{BufRead, Write};

use serde::Deserialize;
use serde_json::{Map, Value};

use crate::types::{FailureSignature, MethodId, Outcome, TestRunReport};
use crate::Error;

/// How to treat fields this crate does not know about.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Deserialize)]
struct WireSignature {
    test_id: String,
    top_method: MethodId,
    trace_hash: u64,
    #[serde(flatten)]
    unknown: Map<String, Value>,
}

#[derive(Deserialize)]
struct WireReport {
    timestamp: u64,
    version_id: String,
    #[serde(default)]
    cluster_id: Option<String>,
    test_id: String,
    outcome: Outcome,
    #[serde(default)]
    failure_signature: Option<WireSignature>,
    #[serde(flatten)]
    unknown: Map<String, Value>,
}

fn invalid(line: usize, message: impl Into<String>) -> Error {
    Error::InvalidReport {
        line,
        message: message.into(),
    }
}

/// Parses one JSONL line into a report. `line_number` is 1-based and only
/// used for error messages.
pub fn parse_report(line: &str, line_number: usize, mode: ParseMode) -> crate::Result<TestRunReport> {
    let wire: WireReport =
        serde_json::from_str(line).map_err(|e| invalid(line_number, e.to_string()))?;
    if mode == ParseMode::Strict {
        if let Some(key) = wire.unknown.keys().next() {
            return Err(invalid(line_number, format!("unknown field \"{key}\"")));
        }
        if let Some(sig) = &wire.failure_signature {
            if let Some(key) = sig.unknown.keys().next() {
                return Err(invalid(
                    line_number,
                    format!("unknown field \"{key}\" in failure_signature"),
                ));
            }
        }
    }
    let signature = wire
        .failure_signature
        .map(|s| FailureSignature::new(s.test_id, s.top_method, s.trace_hash));
    match (wire.outcome, &signature) {
        (Outcome::Fail, None) => Err(invalid(
            line_number,
            "outcome is \"fail\" but failure_signature is missing",
        )),
        (Outcome::Pass, Some(_)) => Err(invalid(
            line_number,
            "outcome is \"pass\" but failure_signature is present",
        )),
        _ => Ok(TestRunReport {
            timestamp: wire.timestamp,
            version_id: wire.version_id,
            cluster_id: wire.cluster_id,
            test_id: wire.test_id,
            outcome: wire.outcome,
            failure_signature: signature,
        }),
    }
}

/// Reads a whole JSONL stream. Blank lines are skipped; any malformed line
/// aborts with its 1-based line number.
pub fn read_reports(reader: impl BufRead, mode: ParseMode) -> crate::Result<Vec<TestRunReport>> {
    let mut reports = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        reports.push(parse_report(&line, idx + 1, mode)?);
    }
    Ok(reports)
}

/// Writes reports as compact JSONL, one report per line.
pub fn write_reports(mut writer: impl Write, reports: &[TestRunReport]) -> crate::Result<()> {
    for report in reports {
        let line = serde_json::to_string(report)
            .map_err(|e| Error::InvalidParameter(format!("serialization failed: {e}")))?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
