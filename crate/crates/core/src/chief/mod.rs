//! Dialogue-flow graphs: data model, JSON codec, validation and traversal.

mod graph;
mod json;
mod model;
mod validate;

pub use graph::{dfs_path, reachable_nodes, Adjacency};
pub use json::{canonical_chief, graph_from_value, graph_to_value, parse_chief, serialize_chief};
pub use model::*;
pub use validate::validate_chief;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ChiefError {
    #[error("malformed document at line {line}, column {column}: {message}")]
    MalformedDocument {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
}
