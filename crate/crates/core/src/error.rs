use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("export is not valid UTF-8 (first invalid byte at offset {offset})")]
    Encoding { offset: usize },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("unknown participant {id:?} referenced at {path}")]
    Reference { id: String, path: String },
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("export has no posts, timeline is empty")]
    EmptyTimeline,
    #[error("timeline bucket must be a positive duration")]
    InvalidBucket,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0} must not be empty")]
    EmptyLexicon(&'static str),
    #[error("invalid threshold: {0}")]
    Threshold(String),
    #[error("invalid weight scheme: {0}")]
    Weights(String),
    #[error("cannot parse config: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("every statement tokenizes to nothing")]
    EmptyVocabulary,
    #[error("topic statement tokenizes to nothing")]
    EmptyTopic,
}

#[derive(Debug, Error)]
pub enum PrioritizeError {
    #[error("unknown dimension {0:?}")]
    UnknownDimension(String),
    #[error("rating {value} for {candidate}/{dimension} outside 0..=10")]
    RatingOutOfRange {
        candidate: String,
        dimension: String,
        value: String,
    },
    #[error("missing rating for {candidate}/{dimension}")]
    MissingRating { candidate: String, dimension: String },
    #[error("feasibility undecided for candidates above the score cut: {}", .0.join(", "))]
    UndecidedFeasibility(Vec<String>),
    #[error("no feasibility/relevance record for candidate {0}")]
    UnknownCandidate(String),
    #[error("ratings csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for PrioritizeError {
    fn from(e: csv::Error) -> Self {
        PrioritizeError::Csv(e.to_string())
    }
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("annotation key {0:?} does not resolve to a post or comment")]
    Unresolved(String),
}
