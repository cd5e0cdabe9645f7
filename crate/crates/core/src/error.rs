use std::path::PathBuf;

use thiserror::Error;

use crate::choiceset::ChoiceSet;
use crate::netgraph::{EdgeId, NodeId};

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

    #[error("edge {edge} references missing node {node}")]
    DanglingEndpoint { edge: EdgeId, node: NodeId },

    #[error("edge {edge} has nonpositive length {length}")]
    NonpositiveLength { edge: EdgeId, length: f64 },

    #[error("duplicate identifier {0}")]
    DuplicateId(String),

    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("route is empty")]
    EmptyRoute,

    #[error("route is disconnected between positions {at} and {}", at + 1)]
    DisconnectedRoute { at: usize },

    #[error("invalid speed sample {speed} on edge {edge}")]
    InvalidSample { edge: EdgeId, speed: f64 },

    #[error("no speed samples available to estimate any edge speed")]
    NoSpeedSamples,

    #[error("edge {0} has no speed; run speed estimation first")]
    MissingSpeed(EdgeId),

    #[error("network is empty")]
    EmptyNetwork,

    #[error("destination {to} is unreachable from {from}")]
    Unreachable { from: NodeId, to: NodeId },

    #[error("origin and destination coincide at node {0}")]
    DegenerateOd(NodeId),

    #[error("choice set for {}->{} reached only {} of {required} routes", partial.od.0, partial.od.1, partial.routes.len())]
    UndersizedChoiceSet {
        partial: Box<ChoiceSet>,
        required: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown anchor {0}")]
    UnknownAnchor(u32),

    #[error("unknown category '{0}'")]
    UnknownCategory(String),

    #[error("invalid building: {0}")]
    InvalidBuilding(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
