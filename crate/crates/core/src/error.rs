use std::path::PathBuf;

/// Errors raised by the network library. The leading token of every message
/// is a stable kebab-case code that callers and the CLI can match on.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("bad-generator-spec: {0}")]
    BadGeneratorSpec(String),

    #[error("packing-not-converged: {0}")]
    PackingNotConverged(String),

    #[error("unknown-fixture: {0}")]
    UnknownFixture(String),

    #[error("self-loop: edge ({0}, {0})")]
    SelfLoop(usize),

    #[error("duplicate-edge: ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("schema: field `{field}`: {reason}")]
    Schema { field: String, reason: String },

    #[error("degenerate-edge: nodes {0} and {1} coincide")]
    DegenerateEdge(usize, usize),

    #[error("dimension-mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numerical-breakdown: constraint {constraint}")]
    NumericalBreakdown { constraint: usize },

    #[error("ensemble run {run}: {source}")]
    EnsembleRun {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("manifold-projection-failed: max violation {violation:e} after {iterations} iterations")]
    ManifoldProjectionFailed { violation: f64, iterations: usize },

    #[error("integration-diverged: non-finite position with dt = {dt}")]
    IntegrationDiverged { dt: f64 },

    #[error("missing-rows: {0}")]
    MissingRows(String),

    #[error("already-rigid: network has no floppy modes")]
    AlreadyRigid,

    #[error("no-candidate-link: {0}")]
    NoCandidateLink(String),

    #[error("tuning step {step}: {source}")]
    TuningStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("edge-mismatch: {0}")]
    EdgeMismatch(String),

    #[error("invalid-task: {0}")]
    InvalidTask(String),

    #[error("invalid-config: {0}")]
    InvalidConfig(String),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
