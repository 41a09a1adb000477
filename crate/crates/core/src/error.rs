use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Every variant belongs to one of two classes: data errors (the inputs are
/// unusable) and configuration errors (the run was set up wrong). The CLI maps
/// these to exit codes 1 and 2.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // ingest
    #[error("malformed header: expected `timestamp_ms,latitude,longitude,accuracy_m`, got `{0}`")]
    MalformedHeader(String),
    #[error("trace for participant `{0}` has no valid rows")]
    EmptyTrace(String),
    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    // ddp
    #[error("every half-hour bin is absent")]
    AllBinsAbsent,
    #[error("day coverage {coverage:.3} is below the minimum {min_coverage:.3}")]
    InsufficientCoverage { coverage: f64, min_coverage: f64 },

    // circadian
    #[error("need at least {required} days, got {got}")]
    InsufficientDays { required: usize, got: usize },
    #[error("activity values have zero variance")]
    DegenerateVariance,
    #[error("M10 + L5 is zero")]
    ZeroDenominator,

    // phenotypes
    #[error("fewer than two points")]
    TooFewPoints,
    #[error("home is undefined for this participant")]
    HomeUndefined,
    #[error("routine index needs at least two days")]
    SingleDay,

    // analysis
    #[error("samples are degenerate: both variances are zero")]
    DegenerateSamples,
    #[error("each sample needs at least two values (got {n_a} and {n_b})")]
    SampleTooSmall { n_a: usize, n_b: usize },
    #[error("metric `{metric}` has no values for group {group}")]
    MetricMissingForGroup { metric: String, group: String },
    #[error("matrix shape is invalid: {0}")]
    InvalidShape(String),

    // predict
    #[error("training data contains a single class")]
    NoClassVariation,
    #[error("every participant was skipped (single-class test sets)")]
    AllSkipped,
    #[error("need at least two eligible participants, got {0}")]
    TooFewParticipants(usize),

    // synth
    #[error("invalid schedule spec: {0}")]
    InvalidSpec(String),

    // cli / io
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("missing upstream artifact `{0}`; run the producing command first")]
    MissingUpstreamArtifact(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap the error with participant/day context.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for configuration errors, false for data errors.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::ConfigInvalid(_) | Error::InvalidSpec(_) | Error::MissingUpstreamArtifact(_) => true,
            Error::Context { source, .. } => source.is_config_error(),
            _ => false,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_config_error() {
            2
        } else {
            1
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
