use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{align, argmax, AlignedFrame, EvalError, PredictionLog};
use crate::label::{FrameTrack, PhaseId, PhaseTaxonomy};

/// Non-interpolated average precision of a ranking.
///
/// Items are ranked by descending score, ties broken by ascending index.
/// Returns `None` when nothing is relevant.
pub fn average_precision(scores: &[f64], relevant: &[bool]) -> Option<f64> {
    debug_assert_eq!(scores.len(), relevant.len());
    let positives = relevant.iter().filter(|r| **r).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if relevant[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

fn column_ap(frames: &[AlignedFrame<'_>], column: usize) -> Option<f64> {
    let scores: Vec<f64> = frames.iter().map(|f| f.row[column]).collect();
    let relevant: Vec<bool> = frames.iter().map(|f| f.truth_column == column).collect();
    average_precision(&scores, &relevant)
}

/// Frame-ranked AP of one phase; `Ok(None)` if the phase never occurs in
/// the evaluated reference frames.
pub fn phase_ap(
    log: &PredictionLog,
    truth: &FrameTrack,
    taxonomy: &PhaseTaxonomy,
    phase: PhaseId,
) -> Result<Option<f64>, EvalError> {
    let column = taxonomy.column_of(phase).ok_or(EvalError::UnknownPhase(phase))?;
    let frames = align(log, truth, taxonomy)?;
    Ok(column_ap(&frames, column))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub case_id: String,
    /// `None` marks a phase absent from the reference frames.
    pub per_phase_ap: BTreeMap<PhaseId, Option<f64>>,
    /// Mean over the phases with a defined AP.
    pub map_value: f64,
    pub absent_phases: Vec<PhaseId>,
    /// Row/column order of `confusion`.
    pub phase_order: Vec<PhaseId>,
    /// Rows are reference phases, columns are argmax predictions.
    pub confusion: Vec<Vec<u64>>,
    pub support: BTreeMap<PhaseId, u64>,
    pub evaluated_frames: usize,
}

impl EvalReport {
    pub fn defined_aps(&self) -> impl Iterator<Item = (PhaseId, f64)> + '_ {
        self.per_phase_ap.iter().filter_map(|(id, ap)| ap.map(|v| (*id, v)))
    }
}

pub fn eval_report(
    log: &PredictionLog,
    truth: &FrameTrack,
    taxonomy: &PhaseTaxonomy,
) -> Result<EvalReport, EvalError> {
    let frames = align(log, truth, taxonomy)?;
    let c = taxonomy.len();
    let mut confusion = vec![vec![0u64; c]; c];
    for f in &frames {
        confusion[f.truth_column][argmax(f.row)] += 1;
    }
    let mut per_phase_ap = BTreeMap::new();
    let mut support = BTreeMap::new();
    let mut absent_phases = Vec::new();
    let mut defined = Vec::new();
    for (column, phase) in taxonomy.phases().iter().enumerate() {
        let ap = column_ap(&frames, column);
        match ap {
            Some(v) => defined.push(v),
            None => absent_phases.push(phase.id),
        }
        per_phase_ap.insert(phase.id, ap);
        support.insert(phase.id, confusion[column].iter().sum());
    }
    // every aligned frame has a reference phase, so at least one AP is defined
    let map_value = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(EvalReport {
        case_id: log.case_id.clone(),
        per_phase_ap,
        map_value,
        absent_phases,
        phase_order: taxonomy.ids().collect(),
        confusion,
        support,
        evaluated_frames: frames.len(),
    })
}
