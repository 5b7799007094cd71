use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. Variants carry enough coordinates (item, anchor,
/// country, path) that a failure can be traced back to its input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document {path}: {detail}")]
    MalformedDocument { path: PathBuf, detail: String },

    #[error("schema violation at {location}: {detail}")]
    SchemaViolation { location: String, detail: String },

    #[error("anchor {anchor_id:?} is not mapped by the collapse spec")]
    UnmappedAnchor { anchor_id: String },

    #[error("prompt template renders to whitespace")]
    EmptyTemplate,

    #[error("prompt template is missing the {placeholder:?} placeholder")]
    MissingPlaceholder { placeholder: String },

    #[error("backend unavailable: {detail}")]
    BackendUnavailable { detail: String },

    #[error("protocol error: {detail}")]
    ProtocolError { detail: String },

    #[error("continuation misaligned: {detail}")]
    ContinuationMisaligned { detail: String },

    #[error("no score for anchor {anchor_id:?}")]
    MissingAnchorScore { anchor_id: String },

    #[error("duplicate score for anchor {anchor_id:?}")]
    DuplicateAnchorScore { anchor_id: String },

    #[error("anchor set mismatch: {detail}")]
    AnchorSetMismatch { detail: String },

    #[error("item {item_id} has too few anchors for this operation")]
    TooFewAnchors { item_id: String },

    #[error("no reference data for item {item_id}")]
    NoReferenceData { item_id: String },

    #[error("cannot aggregate scores computed under different metrics")]
    MixedMetrics,

    #[error("axis {axis} has no items with factor loadings")]
    AxisUncovered { axis: String },

    #[error("map fixture corrupt: {detail}")]
    FixtureCorrupt { detail: String },

    #[error("unknown {kind} {name:?} (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("item {item_id}: {source}")]
    ItemFailed {
        item_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("request {request_key}: {source}")]
    RequestFailed {
        request_key: String,
        #[source]
        source: Box<Error>,
    },

    #[error("batch failed for {failed} of {total} requests: {detail}")]
    BatchFailed {
        failed: usize,
        total: usize,
        detail: String,
    },

    #[error("io failure at {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid distribution: {detail}")]
    InvalidDistribution { detail: String },

    #[error("pipeline mode {mode} requires an anchor prior")]
    PriorRequired { mode: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    /// Wrap an error with the item it occurred in.
    pub fn for_item(item_id: impl Into<String>, source: Error) -> Self {
        Error::ItemFailed {
            item_id: item_id.into(),
            source: Box::new(source),
        }
    }

    /// Reconstruct a copy of this error. Errors are not `Clone` because of
    /// the io source; batch deduplication needs to report one underlying
    /// failure against several requests.
    pub(crate) fn duplicate(&self) -> Error {
        match self {
            Error::MalformedDocument { path, detail } => Error::MalformedDocument {
                path: path.clone(),
                detail: detail.clone(),
            },
            Error::SchemaViolation { location, detail } => Error::SchemaViolation {
                location: location.clone(),
                detail: detail.clone(),
            },
            Error::UnmappedAnchor { anchor_id } => Error::UnmappedAnchor {
                anchor_id: anchor_id.clone(),
            },
            Error::EmptyTemplate => Error::EmptyTemplate,
            Error::MissingPlaceholder { placeholder } => Error::MissingPlaceholder {
                placeholder: placeholder.clone(),
            },
            Error::BackendUnavailable { detail } => Error::BackendUnavailable {
                detail: detail.clone(),
            },
            Error::ProtocolError { detail } => Error::ProtocolError {
                detail: detail.clone(),
            },
            Error::ContinuationMisaligned { detail } => Error::ContinuationMisaligned {
                detail: detail.clone(),
            },
            Error::MissingAnchorScore { anchor_id } => Error::MissingAnchorScore {
                anchor_id: anchor_id.clone(),
            },
            Error::DuplicateAnchorScore { anchor_id } => Error::DuplicateAnchorScore {
                anchor_id: anchor_id.clone(),
            },
            Error::AnchorSetMismatch { detail } => Error::AnchorSetMismatch {
                detail: detail.clone(),
            },
            Error::TooFewAnchors { item_id } => Error::TooFewAnchors {
                item_id: item_id.clone(),
            },
            Error::NoReferenceData { item_id } => Error::NoReferenceData {
                item_id: item_id.clone(),
            },
            Error::MixedMetrics => Error::MixedMetrics,
            Error::AxisUncovered { axis } => Error::AxisUncovered { axis: axis.clone() },
            Error::FixtureCorrupt { detail } => Error::FixtureCorrupt {
                detail: detail.clone(),
            },
            Error::UnknownStrategy { kind, name, known } => Error::UnknownStrategy {
                kind,
                name: name.clone(),
                known: known.clone(),
            },
            Error::ItemFailed { item_id, source } => Error::ItemFailed {
                item_id: item_id.clone(),
                source: Box::new(source.duplicate()),
            },
            Error::RequestFailed {
                request_key,
                source,
            } => Error::RequestFailed {
                request_key: request_key.clone(),
                source: Box::new(source.duplicate()),
            },
            Error::BatchFailed {
                failed,
                total,
                detail,
            } => Error::BatchFailed {
                failed: *failed,
                total: *total,
                detail: detail.clone(),
            },
            Error::IoFailure { path, source } => Error::IoFailure {
                path: path.clone(),
                source: std::io::Error::new(source.kind(), source.to_string()),
            },
            Error::InvalidDistribution { detail } => Error::InvalidDistribution {
                detail: detail.clone(),
            },
            Error::PriorRequired { mode } => Error::PriorRequired { mode: mode.clone() },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
