//! `fixdetect`: command-line front end for the fix detection pipeline.
//!
//! Subcommands cover the full loop: `simulate` produces run reports with
//! ground truth, `group` attributes failures to patched methods, `detect`
//! segments a degree series, `pipeline` chains all stages into a verdict
//! report, `eval` scores predictions against truth, and `bench` times the
//! detector.
//!
//! Exit codes: 0 success, 1 usage error, 2 malformed input or configuration,
//! 3 internal invariant violation.

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use fixdetect::causal::{group_failures, FailureGrouping, GroupingConfig, MeasureKind};
use fixdetect::cpd::{detect_all, ChangeEvent, ChangeKind, Correction, CpdConfig, TestKind};
use fixdetect::eval::{bench_detect, score_detection, score_grouping, DetectionScore, IrScores};
use fixdetect::jsonl::{read_reports, write_reports, ParseMode};
use fixdetect::series::{build_degree_series, DegreeSeries};
use fixdetect::sim::{simulate, GroundTruthEvent, Scenario};
use fixdetect::types::{
    FailureSignature, MethodId, PatchIntervention, SignatureIdentity, TestRunReport,
};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

#[derive(Parser)]
#[command(name = "fixdetect", version, about = "Fix detection for flaky CI test streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Tolerate unknown fields when parsing run reports.
    #[arg(long, global = true)]
    lenient: bool,
    /// Pipeline configuration JSON; explicit flags override file values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate run reports and ground truth from a scenario file.
    Simulate(SimulateArgs),
    /// Attribute observed failures to patched methods by causal degree.
    Group(GroupArgs),
    /// Detect changepoints in a degree series.
    Detect(DetectArgs),
    /// Run ingestion, grouping, series building, and detection to a verdict.
    Pipeline(PipelineArgs),
    /// Score a prediction file against ground truth.
    Eval(EvalArgs),
    /// Time the detector on a synthetic shifted series.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON.
    scenario: PathBuf,
    /// Output path for the run reports (JSONL).
    #[arg(long, value_name = "FILE")]
    out_runs: PathBuf,
    /// Output path for the ground-truth event list (JSON).
    #[arg(long, value_name = "FILE")]
    out_truth: PathBuf,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GroupArgs {
    /// Run reports (JSONL, both versions in one stream).
    runs: PathBuf,
    /// Patch description JSON (versions and patched methods).
    #[arg(long, value_name = "FILE")]
    patch: PathBuf,
    /// Output path (standard output when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    grouping: GroupingFlags,
}

#[derive(Args)]
struct DetectArgs {
    /// Degree series JSON.
    series: PathBuf,
    /// Output path (standard output when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    cpd: CpdFlags,
}

#[derive(Args)]
struct PipelineArgs {
    /// Run reports (JSONL, both versions in one stream).
    runs: PathBuf,
    /// Patch description JSON (versions and patched methods).
    #[arg(long, value_name = "FILE")]
    patch: PathBuf,
    /// Output path (standard output when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    grouping: GroupingFlags,
    #[command(flatten)]
    cpd: CpdFlags,
    /// Degree series bucket width, milliseconds.
    #[arg(long)]
    bucket_width_ms: Option<u64>,
    /// Runs each version needs in a bucket for it to produce a point.
    #[arg(long)]
    min_runs_per_bucket: Option<usize>,
    /// Tail mean below which a trailing Fix event counts as fixed.
    #[arg(long)]
    fixed_mean_ceiling: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction JSON: a grouping ("entries") or a detection ("events").
    #[arg(long, value_name = "FILE")]
    pred: PathBuf,
    /// Ground truth JSON: grouping truth ("groups") or a truth event list.
    #[arg(long, value_name = "FILE")]
    truth: PathBuf,
    /// Detection match tolerance, buckets.
    #[arg(long, default_value_t = 2)]
    tolerance: u64,
    /// Candidate method universe JSON array; enables accuracy.
    #[arg(long, value_name = "FILE")]
    universe: Option<PathBuf>,
    /// Output path (standard output when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Series length.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Seed for the synthetic series.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output path (standard output when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    cpd: CpdFlags,
}

#[derive(Args, Clone, Copy, Default)]
struct GroupingFlags {
    /// Degree measure used for qualification.
    #[arg(long, value_enum)]
    measure: Option<MeasureArg>,
    /// Qualification threshold on the degree.
    #[arg(long)]
    threshold: Option<f64>,
    /// Minimum runs per version for each considered test.
    #[arg(long)]
    min_runs_per_version: Option<usize>,
    /// Failure identity relation.
    #[arg(long, value_enum)]
    identity: Option<IdentityArg>,
}

impl GroupingFlags {
    fn apply(self, config: &mut GroupingConfig) {
        if let Some(measure) = self.measure {
            config.measure = measure.into();
        }
        if let Some(threshold) = self.threshold {
            config.threshold = threshold;
        }
        if let Some(min_runs) = self.min_runs_per_version {
            config.min_runs_per_version = min_runs;
        }
        if let Some(identity) = self.identity {
            config.identity = identity.into();
        }
    }
}

#[derive(Args, Clone, Copy, Default)]
struct CpdFlags {
    /// Family-wise significance level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Minimum points each side of a candidate split.
    #[arg(long)]
    min_segment: Option<usize>,
    /// Two-sample test used by the scan.
    #[arg(long = "test", value_enum)]
    test_kind: Option<TestArg>,
    /// Candidate split stride.
    #[arg(long)]
    stride: Option<usize>,
    /// Multiple-testing correction over candidate splits.
    #[arg(long, value_enum)]
    correction: Option<CorrectionArg>,
}

impl CpdFlags {
    fn apply(self, config: &mut CpdConfig) {
        if let Some(alpha) = self.alpha {
            config.alpha = alpha;
        }
        if let Some(min_segment) = self.min_segment {
            config.min_segment = min_segment;
        }
        if let Some(test) = self.test_kind {
            config.test = test.into();
        }
        if let Some(stride) = self.stride {
            config.stride = stride;
        }
        if let Some(correction) = self.correction {
            config.correction = correction.into();
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    PearlPredicate,
    Difference,
    Ratio,
}

impl From<MeasureArg> for MeasureKind {
    fn from(arg: MeasureArg) -> Self {
        match arg {
            MeasureArg::PearlPredicate => MeasureKind::PearlPredicate,
            MeasureArg::Difference => MeasureKind::Difference,
            MeasureArg::Ratio => MeasureKind::Ratio,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum IdentityArg {
    TraceScoped,
    TestMethodScoped,
}

impl From<IdentityArg> for SignatureIdentity {
    fn from(arg: IdentityArg) -> Self {
        match arg {
            IdentityArg::TraceScoped => SignatureIdentity::TraceScoped,
            IdentityArg::TestMethodScoped => SignatureIdentity::TestMethodScoped,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    MannWhitneyU,
    KolmogorovSmirnov,
}

impl From<TestArg> for TestKind {
    fn from(arg: TestArg) -> Self {
        match arg {
            TestArg::MannWhitneyU => TestKind::MannWhitneyU,
            TestArg::KolmogorovSmirnov => TestKind::KolmogorovSmirnov,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CorrectionArg {
    Bonferroni,
    None,
}

impl From<CorrectionArg> for Correction {
    fn from(arg: CorrectionArg) -> Self {
        match arg {
            CorrectionArg::Bonferroni => Correction::Bonferroni,
            CorrectionArg::None => Correction::None,
        }
    }
}

/// Everything the pipeline stages need, loadable from --config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PipelineConfig {
    grouping: GroupingConfig,
    cpd: CpdConfig,
    bucket_width_ms: u64,
    min_runs_per_bucket: usize,
    fixed_mean_ceiling: f64,
    /// Top-level identity override; wins over `grouping.identity` when set.
    identity_mode: Option<SignatureIdentity>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grouping: GroupingConfig::default(),
            cpd: CpdConfig::default(),
            bucket_width_ms: 3_600_000,
            min_runs_per_bucket: 10,
            fixed_mean_ceiling: 0.05,
            identity_mode: None,
        }
    }
}

impl PipelineConfig {
    fn validate(&self) -> Result<(), Failure> {
        self.grouping.validate().map_err(Failure::from)?;
        self.cpd.validate().map_err(Failure::from)?;
        if self.bucket_width_ms == 0 {
            return Err(Failure::data("bucket_width_ms must be positive"));
        }
        if self.min_runs_per_bucket == 0 {
            return Err(Failure::data("min_runs_per_bucket must be at least 1"));
        }
        if !self.fixed_mean_ceiling.is_finite() || self.fixed_mean_ceiling < 0.0 {
            return Err(Failure::data("fixed_mean_ceiling must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Failure with a process exit code: 2 for bad input, 3 for broken internal
/// invariants.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn data(message: impl Display) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }

    fn at(path: &Path, message: impl Display) -> Self {
        Failure::data(format!("{}: {message}", path.display()))
    }
}

impl From<fixdetect::Error> for Failure {
    fn from(e: fixdetect::Error) -> Self {
        let code = match e {
            fixdetect::Error::IndexOutOfRange { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mode = if cli.lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Group(args) => cmd_group(args, config, mode),
        Command::Detect(args) => cmd_detect(args, config),
        Command::Pipeline(args) => cmd_pipeline(args, config, mode),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args, config),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let mut config: PipelineConfig = read_json(path)?;
    if let Some(identity) = config.identity_mode {
        config.grouping.identity = identity;
    }
    Ok(config)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::at(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::at(path, e))
}

fn load_runs(path: &Path, mode: ParseMode) -> Result<Vec<TestRunReport>, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::at(path, e))?;
    read_reports(std::io::BufReader::new(file), mode).map_err(|e| Failure::at(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::at(path, e))
}

/// Writes `value` as one compact JSON document plus a trailing newline, to
/// `out` or standard output.
fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), Failure> {
    let mut bytes = serde_json::to_vec(value).map_err(|e| Failure::data(e))?;
    bytes.push(b'\n');
    match out {
        Some(path) => write_bytes(path, &bytes),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| Failure::data(e)),
    }
}

/// Splits a mixed run stream into the patch's two populations; runs on other
/// versions are ignored.
fn split_by_patch(
    reports: &[TestRunReport],
    patch: &PatchIntervention,
) -> (Vec<TestRunReport>, Vec<TestRunReport>) {
    let of = |version: &str| {
        reports
            .iter()
            .filter(|r| r.version_id == version)
            .cloned()
            .collect()
    };
    (of(&patch.baseline_version), of(&patch.updated_version))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut scenario: Scenario = read_json(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let (reports, truth) = simulate(&scenario).map_err(Failure::from)?;

    let mut runs_bytes = Vec::new();
    write_reports(&mut runs_bytes, &reports).map_err(Failure::from)?;
    write_bytes(&args.out_runs, &runs_bytes)?;
    emit_json(Some(&args.out_truth), &truth)
}

fn cmd_group(args: GroupArgs, mut config: PipelineConfig, mode: ParseMode) -> Result<(), Failure> {
    args.grouping.apply(&mut config.grouping);
    config.validate()?;
    let reports = load_runs(&args.runs, mode)?;
    let patch: PatchIntervention = read_json(&args.patch)?;
    let (baseline, updated) = split_by_patch(&reports, &patch);
    let grouping =
        group_failures(&baseline, &updated, &patch, &config.grouping).map_err(Failure::from)?;
    emit_json(args.out.as_deref(), &grouping)
}

#[derive(Serialize)]
struct DetectReport {
    events: Vec<ChangeEvent>,
}

fn cmd_detect(args: DetectArgs, mut config: PipelineConfig) -> Result<(), Failure> {
    args.cpd.apply(&mut config.cpd);
    config.validate()?;
    let series: DegreeSeries = read_json(&args.series)?;
    let events = detect_all(&series, &config.cpd).map_err(Failure::from)?;
    emit_json(args.out.as_deref(), &DetectReport { events })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Verdict {
    /// Trailing Fix event and the residual degree is below the ceiling.
    Fixed,
    /// Trailing Fix event but the residual degree still matters.
    Improved,
    /// Trailing Bug event.
    Regressed,
    /// No event at all.
    Unchanged,
    /// Not enough qualifying buckets to build a series.
    InsufficientData,
}

#[derive(Serialize)]
struct PipelineResult {
    method: MethodId,
    signature: FailureSignature,
    events: Vec<ChangeEvent>,
    verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    tail_mean: Option<f64>,
}

#[derive(Serialize)]
struct PipelineReport {
    fixed_mean_ceiling: f64,
    results: Vec<PipelineResult>,
}

fn classify(series: &DegreeSeries, events: &[ChangeEvent], ceiling: f64) -> (Verdict, f64) {
    match events.last() {
        None => (Verdict::Unchanged, series.mean_degree(0..series.len())),
        Some(last) => {
            let tail = series.mean_degree(last.index..series.len());
            let verdict = match last.kind {
                ChangeKind::Bug => Verdict::Regressed,
                ChangeKind::Fix if tail < ceiling => Verdict::Fixed,
                ChangeKind::Fix => Verdict::Improved,
            };
            (verdict, tail)
        }
    }
}

fn cmd_pipeline(
    args: PipelineArgs,
    mut config: PipelineConfig,
    mode: ParseMode,
) -> Result<(), Failure> {
    args.grouping.apply(&mut config.grouping);
    args.cpd.apply(&mut config.cpd);
    if let Some(width) = args.bucket_width_ms {
        config.bucket_width_ms = width;
    }
    if let Some(min_runs) = args.min_runs_per_bucket {
        config.min_runs_per_bucket = min_runs;
    }
    if let Some(ceiling) = args.fixed_mean_ceiling {
        config.fixed_mean_ceiling = ceiling;
    }
    config.validate()?;

    let reports = load_runs(&args.runs, mode)?;
    let patch: PatchIntervention = read_json(&args.patch)?;
    let (baseline, updated) = split_by_patch(&reports, &patch);
    let grouping =
        group_failures(&baseline, &updated, &patch, &config.grouping).map_err(Failure::from)?;

    let mut results = Vec::new();
    for entry in &grouping.entries {
        for cause in &entry.causes {
            let series = match build_degree_series(
                &baseline,
                &updated,
                &patch,
                &entry.signature,
                &cause.method,
                config.bucket_width_ms,
                config.min_runs_per_bucket,
                config.grouping.identity,
            ) {
                Ok(series) => series,
                Err(fixdetect::Error::EmptySeries) => {
                    results.push(PipelineResult {
                        method: cause.method.clone(),
                        signature: entry.signature.clone(),
                        events: Vec::new(),
                        verdict: Verdict::InsufficientData,
                        tail_mean: None,
                    });
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let events = detect_all(&series, &config.cpd).map_err(Failure::from)?;
            let (verdict, tail_mean) = classify(&series, &events, config.fixed_mean_ceiling);
            results.push(PipelineResult {
                method: cause.method.clone(),
                signature: entry.signature.clone(),
                events,
                verdict,
                tail_mean: Some(tail_mean),
            });
        }
    }
    results.sort_by(|a, b| {
        (a.method.name(), &a.signature).cmp(&(b.method.name(), &b.signature))
    });
    emit_json(
        args.out.as_deref(),
        &PipelineReport {
            fixed_mean_ceiling: config.fixed_mean_ceiling,
            results,
        },
    )
}

/// Grouping ground truth: which methods actually cause each signature.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupingTruth {
    groups: Vec<TruthGroup>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthGroup {
    signature: FailureSignature,
    methods: std::collections::BTreeSet<MethodId>,
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
enum EvalReport {
    Grouping {
        scores: IrScores,
    },
    Detection {
        scores: IrScores,
        detail: DetectionScore,
    },
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let pred: serde_json::Value = read_json(&args.pred)?;
    let report = if pred.get("entries").is_some() {
        let grouping: FailureGrouping =
            serde_json::from_value(pred).map_err(|e| Failure::at(&args.pred, e))?;
        let truth: GroupingTruth = read_json(&args.truth)?;
        let truth_map = truth
            .groups
            .into_iter()
            .map(|g| (g.signature, g.methods))
            .collect();
        let universe = match &args.universe {
            Some(path) => Some(read_json::<std::collections::BTreeSet<MethodId>>(path)?),
            None => None,
        };
        EvalReport::Grouping {
            scores: score_grouping(&grouping, &truth_map, universe.as_ref()),
        }
    } else if pred.get("events").is_some() {
        let detect: DetectReportIn =
            serde_json::from_value(pred).map_err(|e| Failure::at(&args.pred, e))?;
        let truth: Vec<GroundTruthEvent> = read_json(&args.truth)?;
        let detail = score_detection(&detect.events, &truth, args.tolerance);
        EvalReport::Detection {
            scores: detail.ir_scores(),
            detail,
        }
    } else {
        return Err(Failure::at(
            &args.pred,
            "prediction has neither \"entries\" (grouping) nor \"events\" (detection)",
        ));
    };
    emit_json(args.out.as_deref(), &report)
}

#[derive(Deserialize)]
struct DetectReportIn {
    events: Vec<ChangeEvent>,
}

#[derive(Serialize)]
struct BenchReport {
    n: usize,
    seed: u64,
    wall_time_ms: u64,
    events: usize,
}

fn cmd_bench(args: BenchArgs, mut config: PipelineConfig) -> Result<(), Failure> {
    args.cpd.apply(&mut config.cpd);
    config.validate()?;
    let (elapsed, events) = bench_detect(args.n, &config.cpd, args.seed).map_err(Failure::from)?;
    emit_json(
        args.out.as_deref(),
        &BenchReport {
            n: args.n,
            seed: args.seed,
            wall_time_ms: elapsed.as_millis() as u64,
            events: events.len(),
        },
    )
}
