//! CSV and JSON interchange formats.
//!
//! Writers emit canonical bytes: LF line endings, no trailing newline, and
//! floats in their shortest round-tripping form. Readers accept an optional
//! trailing newline and CRLF endings.

mod csvio;
mod manifest;
mod metadata;
mod prediction;
mod results;
mod track;

use std::path::PathBuf;

use thiserror::Error;

use crate::consensus::ResolutionLedger;
use crate::evaluation::EvalError;
use crate::label::LabelError;

pub use manifest::{load_manifest, parse_manifest_json, write_manifest_json, CaseManifest};
pub use metadata::{parse_metadata_csv, write_metadata_csv, METADATA_HEADER};
pub use prediction::{detect_class_count, parse_prediction_csv, write_prediction_csv};
pub use results::{parse_results_csv, write_results_csv, RESULTS_HEADER};
pub use track::{
    parse_decision_csv, parse_track_csv, write_decision_csv, write_track_csv, DECISION_HEADER, TRACK_HEADER,
};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {detail}")]
    SchemaError { line: u64, detail: String },
    #[error("line {line}: expected frame {expected}, found {found}")]
    DenseIndexViolation { line: u64, expected: usize, found: usize },
    #[error("line {line}, column {column}: {detail}")]
    NumericError { line: u64, column: String, detail: String },
    #[error("input is not valid UTF-8")]
    Utf8,
    #[error("referenced file {0} does not exist")]
    MissingFile(PathBuf),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FormatError {
    pub(crate) fn schema(line: u64, detail: impl Into<String>) -> Self {
        FormatError::SchemaError { line, detail: detail.into() }
    }
}

pub fn parse_ledger_json(bytes: &[u8]) -> Result<ResolutionLedger, FormatError> {
    Ok(serde_json::from_slice(bytes)?)
}

pub fn write_ledger_json(ledger: &ResolutionLedger) -> String {
    serde_json::to_string_pretty(ledger).expect("ledger serializes")
}
