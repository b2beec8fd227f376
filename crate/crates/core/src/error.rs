use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dangling reference to {kind} `{id}` ({context})")]
    DanglingReference {
        kind: &'static str,
        id: String,
        context: String,
    },

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error("entity count mismatch: donor query has {donor} entities, target query has {target}")]
    EntityCountMismatch { donor: usize, target: usize },

    #[error("infeasible corpus configuration: {0}")]
    InfeasibleConfig(String),

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("cannot encode an empty token sequence")]
    EmptySequence,

    #[error("memory is empty")]
    EmptyMemory,

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("hop index {hop} out of range 1..={hops}")]
    HopOutOfRange { hop: usize, hops: usize },

    #[error("degenerate design matrix ({samples} samples, {features} features)")]
    DegenerateDesign { samples: usize, features: usize },

    #[error("no valid fake fact set for query `{query_id}` after {attempts} attempts")]
    ExhaustedRetries { query_id: String, attempts: usize },

    #[error("relevance vector does not cover the hybrid fact set: {0}")]
    CoverageMismatch(String),

    #[error("the two models agree on no query")]
    EmptyAgreement,

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("annotator `{annotator}` already voted on task `{task_id}`")]
    DuplicateVote { task_id: String, annotator: String },

    #[error("invalid choice `{0}`")]
    InvalidChoice(String),

    #[error("no votes to aggregate")]
    NoVotes,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
