use serde::{Deserialize, Serialize};

use super::{align, EvalError, PredictionLog};
use crate::label::{FrameTrack, PhaseTaxonomy};

/// Confidences are clamped to at least this value before taking the log.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropyResult {
    pub loss: f64,
    /// Number of evaluated frames.
    pub frames: usize,
}

/// Mean negative log confidence assigned to the reference phase.
pub fn cross_entropy(
    log: &PredictionLog,
    truth: &FrameTrack,
    taxonomy: &PhaseTaxonomy,
) -> Result<CrossEntropyResult, EvalError> {
    if !log.is_normalized() {
        return Err(EvalError::NotNormalized);
    }
    let frames = align(log, truth, taxonomy)?;
    let total: f64 = frames.iter().map(|f| -f.row[f.truth_column].max(PROBABILITY_FLOOR).ln()).sum();
    let loss = total / frames.len() as f64;
    // -ln(1) is -0.0; report a clean zero
    Ok(CrossEntropyResult { loss: loss + 0.0, frames: frames.len() })
}
