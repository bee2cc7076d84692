use std::path::PathBuf;

use thiserror::Error;

use crate::ontology::{EdgeType, NodeClass};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("title must not be empty for class {0}")]
    EmptyTitle(NodeClass),
    #[error("id must not be empty")]
    EmptyId,
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("edge endpoint {0:?} does not exist")]
    DanglingEndpoint(String),
    #[error("{edge_type} is not allowed from {source_class} to {target_class}")]
    SchemaViolation {
        edge_type: EdgeType,
        source_class: NodeClass,
        target_class: NodeClass,
    },
    #[error("duplicate {edge_type} edge {from:?} -> {to:?}")]
    DuplicateEdge {
        from: String,
        to: String,
        edge_type: EdgeType,
    },
    #[error("similarity score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("missing required edge property {0:?}")]
    MissingProperty(&'static str),
    #[error("unknown node class {0:?}")]
    UnknownClass(String),
    #[error("unknown edge type {0:?}")]
    UnknownEdgeType(String),
    #[error("no node or edge with id {0:?}")]
    NotFound(String),
    #[error("unsupported schema version {0}")]
    UnsupportedSchemaVersion(u32),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported manifest schema version {0}")]
    UnsupportedSchemaVersion(u32),
    #[error("duplicate id {0:?} in manifest")]
    DuplicateId(String),
    #[error("lecture {lecture:?}: session indexes must run 1..=n without gaps, found {found:?}")]
    NonContiguousSessionIndex { lecture: String, found: Vec<u32> },
    #[error("session {session:?} lists material {path:?} more than once")]
    DuplicateMaterialPath { session: String, path: String },
    #[error("material not found: {0}")]
    MaterialNotFound(PathBuf),
    #[error("invalid chunk parameters: max {max_chars}, overlap {overlap_chars}")]
    InvalidChunkParams { max_chars: usize, overlap_chars: usize },
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider response did not match the expected format: {message}")]
    Format { message: String, raw: String },
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no mock fixture for request key {key}")]
    FixtureMissing { key: String },
    #[error("unknown provider {0:?}")]
    UnknownProvider(String),
    #[error("invalid provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn format(message: impl Into<String>, raw: impl Into<String>) -> Self {
        ProviderError::Format {
            message: message.into(),
            raw: raw.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("no session text to extract from")]
    EmptyCorpus,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("no candidate or relation with id {0:?}")]
    NotFound(String),
    #[error("{0:?} has already been decided")]
    AlreadyDecided(String),
    #[error("invalid edit for {id:?}: {reason}")]
    InvalidEdit { id: String, reason: String },
    #[error("accepted sub-topic {subtopic:?} has no accepted parent topic")]
    OrphanSubTopic { subtopic: String },
    #[error("accepted topic {topic:?} has no accepted sub-topics")]
    EmptyTopic { topic: String },
    #[error("session {0:?} is not in the graph")]
    MissingSession(String),
    #[error("sampling fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("no decided items of kind {0}")]
    InsufficientData(String),
    #[error("invalid store record in {path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("store io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("cannot compare zero vector")]
    ZeroVector,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("text to embed must not be empty")]
    EmptyText,
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("unknown similarity strategy {0:?}")]
    UnknownStrategy(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("graph has no edges")]
    NoEdges,
    #[error("node {0:?} not found")]
    NotFound(String),
    #[error("partition does not cover the node set exactly")]
    PartitionMismatch,
    #[error("before and after graphs have different node sets")]
    NodeSetMismatch,
    #[error("unknown {kind} {name:?}")]
    Unknown { kind: &'static str, name: String },
}

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("no project at {0} (missing project.json; run `currikg init` first)")]
    NotFound(PathBuf),
    #[error("a project already exists at {0}")]
    AlreadyExists(PathBuf),
    #[error("another pipeline run holds the lock {0}")]
    Locked(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

impl ProjectError {
    /// True for failures of the environment (network, disk) rather than of
    /// the request itself.
    pub fn is_environmental(&self) -> bool {
        match self {
            ProjectError::Io { .. } => true,
            ProjectError::Provider(p) => provider_is_environmental(p),
            ProjectError::Extract(ExtractError::Provider(p)) => provider_is_environmental(p),
            ProjectError::Extract(ExtractError::Similarity(SimilarityError::Provider(p))) => {
                provider_is_environmental(p)
            }
            ProjectError::Similarity(SimilarityError::Provider(p)) => provider_is_environmental(p),
            ProjectError::Ingest(IngestError::Io { .. }) => true,
            ProjectError::Review(ReviewError::Io { .. }) => true,
            _ => false,
        }
    }
}

fn provider_is_environmental(e: &ProviderError) -> bool {
    matches!(
        e,
        ProviderError::Unavailable(_) | ProviderError::Format { .. } | ProviderError::FixtureMissing { .. }
    )
}
