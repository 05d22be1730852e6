//! Scoring of per-frame phase predictions against reference tracks, and the
//! arithmetic used to compare published result tables.

mod ap;
mod loss;
mod tables;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{FrameTrack, Label, PhaseId, PhaseTaxonomy};

pub use ap::{average_precision, eval_report, phase_ap, EvalReport};
pub use loss::{cross_entropy, CrossEntropyResult, PROBABILITY_FLOOR};
pub use tables::{
    consistency_check, delta_table, deviation_report, round_half_up, AnnotationRef, ApCell, ConsistencyCheck,
    DeltaCell, DeltaRow, DeltaTable, DeviationEntry, DeviationReport,
};

/// Tolerance on row sums when detecting normalized logs.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("prediction log has no rows")]
    EmptyLog,
    #[error("row {row} has {found} columns, expected {expected}")]
    RowWidth { row: usize, expected: usize, found: usize },
    #[error("non-finite confidence at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("log has {log} classes but the taxonomy has {taxonomy}")]
    ClassCountMismatch { log: usize, taxonomy: usize },
    #[error("log and reference track share no frames")]
    NoOverlap,
    #[error("reference track has a blank at frame {0}")]
    BlankInTruth(usize),
    #[error("phase {0} is not in the taxonomy")]
    UnknownPhase(PhaseId),
    #[error("log rows are not normalized probability vectors")]
    NotNormalized,
    #[error("no consensus result for model {model}, split {split}")]
    MissingConsensus { model: String, split: String },
    #[error("duplicate result for model {model}, split {split}, annotation {annotation}")]
    DuplicateCell { model: String, split: String, annotation: String },
    #[error("model {model} does not share the key set of model {reference}")]
    KeyMismatch { model: String, reference: String },
    #[error("value {0} cannot be represented as a decimal")]
    NotDecimal(f64),
    #[error("no values to aggregate")]
    EmptyInput,
}

/// Per-frame confidence vectors over the phases of a taxonomy.
///
/// Column `i` scores the taxonomy's `i`-th phase. Row `r` covers frame
/// `frame_offset + r` of the recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PredictionLogRepr")]
pub struct PredictionLog {
    pub case_id: String,
    num_classes: usize,
    frame_offset: usize,
    rows: Vec<Vec<f64>>,
    normalized: bool,
}

#[derive(Deserialize)]
struct PredictionLogRepr {
    case_id: String,
    num_classes: usize,
    frame_offset: usize,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<PredictionLogRepr> for PredictionLog {
    type Error = EvalError;

    fn try_from(r: PredictionLogRepr) -> Result<Self, Self::Error> {
        PredictionLog::new(r.case_id, r.num_classes, r.frame_offset, r.rows)
    }
}

impl PredictionLog {
    pub fn new(
        case_id: impl Into<String>,
        num_classes: usize,
        frame_offset: usize,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, EvalError> {
        if rows.is_empty() {
            return Err(EvalError::EmptyLog);
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != num_classes {
                return Err(EvalError::RowWidth { row: r, expected: num_classes, found: row.len() });
            }
            if let Some(column) = row.iter().position(|v| !v.is_finite()) {
                return Err(EvalError::NonFinite { row: r, column });
            }
        }
        let normalized = rows.iter().all(|row| is_probability_vector(row));
        Ok(Self { case_id: case_id.into(), num_classes, frame_offset, rows, normalized })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn frame_offset(&self) -> usize {
        self.frame_offset
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Column of the highest confidence in `row`; ties go to the lowest column.
    pub fn argmax(&self, row: usize) -> usize {
        argmax(&self.rows[row])
    }
}

pub(crate) fn is_probability_vector(row: &[f64]) -> bool {
    row.iter().all(|&v| v >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOLERANCE
}

/// Index of the maximum; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// A frame present in both the log and the reference track.
#[derive(Clone, Copy, Debug)]
pub(crate) struct AlignedFrame<'a> {
    pub truth_column: usize,
    pub row: &'a [f64],
}

/// Pairs log rows with reference labels over their common frame range.
pub(crate) fn align<'a>(
    log: &'a PredictionLog,
    truth: &FrameTrack,
    taxonomy: &PhaseTaxonomy,
) -> Result<Vec<AlignedFrame<'a>>, EvalError> {
    if log.num_classes != taxonomy.len() {
        return Err(EvalError::ClassCountMismatch { log: log.num_classes, taxonomy: taxonomy.len() });
    }
    let start = log.frame_offset;
    let end = (log.frame_offset + log.len()).min(truth.len());
    if start >= end {
        return Err(EvalError::NoOverlap);
    }
    (start..end)
        .map(|frame| {
            let truth_column = match truth.labels()[frame] {
                Label::Blank => return Err(EvalError::BlankInTruth(frame)),
                Label::Phase(id) => taxonomy.column_of(id).ok_or(EvalError::UnknownPhase(id))?,
            };
            Ok(AlignedFrame { truth_column, row: &log.rows[frame - log.frame_offset] })
        })
        .collect()
}
