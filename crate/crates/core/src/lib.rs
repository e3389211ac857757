//! Hierarchical register indexing and view-routed retrieval.
//!
//! Offline, every paper is turned into a *register*: one content string per
//! node of a typed schema tree, extracted at the leaves and summarized bottom
//! up. Registers of the whole corpus are merged into an index tree with one
//! index per node path ("view"). Online, a recognizer picks the views a query
//! targets and per-paper relevance is the maximum over those views' indexes.

pub mod eval;
pub mod index;
pub mod model;
pub mod recognizer;
pub mod register;
pub mod retrieval;
pub mod schema;
pub mod tokenize;

pub use schema::{NodePath, PaperType, RegisterSchema, SchemaNode, SchemaSet};
