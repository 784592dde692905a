use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A probability was requested over zero runs.
    #[error("cannot estimate a probability from an empty population")]
    EmptyPopulation,

    /// Reports passed as a single population disagree on version or test id.
    #[error("population is not homogeneous: {detail}")]
    MixedPopulation { detail: String },

    /// A version had fewer runs than the configured minimum.
    #[error(
        "test '{test_id}' has {actual} runs on version '{version_id}', \
         need at least {required}"
    )]
    InsufficientRuns {
        test_id: String,
        version_id: String,
        actual: usize,
        required: usize,
    },

    /// Ratio of two interventional probabilities with a zero denominator
    /// and a zero numerator carries no causal information.
    #[error("ratio measure is undefined when both probabilities are zero")]
    UndefinedRatio,

    /// The predicate measure has no numeric degree.
    #[error("the pearl predicate yields a boolean, not a numeric degree; use pearl_causes")]
    UnsupportedMeasure,

    /// Uniform bucketing needs a positive width.
    #[error("bucket width must be positive")]
    InvalidBucketWidth,

    /// No bucket had enough runs on both versions to estimate a degree.
    #[error("no degree points could be computed from the given reports")]
    EmptySeries,

    /// A split or indexing operation was asked for a point outside a series.
    #[error("index {index} out of range for series of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    /// A statistical test was given an empty sample.
    #[error("statistical test requires non-empty samples on both sides")]
    EmptySample,

    /// A configuration value is outside its legal range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A simulation scenario failed validation.
    #[error("invalid scenario at {field}: {message}")]
    InvalidScenario { field: String, message: String },

    /// A run report line failed to parse or violated an invariant.
    #[error("invalid report on line {line}: {message}")]
    InvalidReport { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
