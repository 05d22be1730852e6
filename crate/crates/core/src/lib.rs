//! Per-frame surgical phase annotation: multi-annotator consensus, inspector
//! resolution, evaluation, split planning, streaming replay and storage.

pub mod consensus;
pub mod evaluation;
pub mod fixtures;
pub mod formats;
pub mod label;
pub mod registry;
pub mod replay;
pub mod splits;
pub mod store;
