//! Unanimity merge of annotator tracks, blank-segment extraction and
//! inspector resolution.
//!
//! Frames where every annotator agrees keep that label; all other frames
//! become [`Label::Blank`] and are handed to an inspector as maximal blank
//! segments, together with what each annotator said about them. Inspector
//! decisions are collected in a [`ResolutionLedger`] and applied on top of
//! the draft. Agreed frames are final and can never be overwritten.

mod agreement;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::segments_of;
use crate::label::{Fps, FrameTrack, Label, PhaseId, PhaseTaxonomy, Provenance, Segment};

pub use agreement::{
    boundary_disagreement_profile, pairwise_agreement, AgreementStats, BoundaryBin, BoundaryProfile,
    DEFAULT_MAX_DISTANCE,
};

/// Annotator id given to merged and resolved tracks.
pub const CONSENSUS_ID: &str = "consensus";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("at least two annotator tracks are required, got {0}")]
    NotEnoughAnnotators(usize),
    #[error("track of {annotator} has {found} frames, expected {expected}")]
    LengthMismatch { annotator: String, expected: usize, found: usize },
    #[error("track of {annotator} belongs to case {found}, expected {expected}")]
    CaseMismatch { annotator: String, expected: String, found: String },
    #[error("track of {annotator} has frame rate {found}, expected {expected}")]
    FpsMismatch { annotator: String, expected: Fps, found: Fps },
    #[error("track of {annotator} has a blank at frame {frame}")]
    BlankInSource { annotator: String, frame: usize },
    #[error("resolution touches agreed frame {frame}")]
    ResolutionOverreach { frame: usize },
    #[error("resolution range {start}..={end} is invalid for a {frames}-frame draft")]
    InvalidRange { start: usize, end: usize, frames: usize },
    #[error("resolution ranges {first:?} and {second:?} overlap")]
    OverlappingResolutions { first: (usize, usize), second: (usize, usize) },
    #[error("phase {0} is not in the taxonomy")]
    UnknownLabel(PhaseId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameProvenance {
    Agreed,
    Blank,
}

/// Result of the unanimity merge: agreed frames plus blanks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusDraft {
    pub case_id: String,
    pub source_annotators: Vec<String>,
    merged: FrameTrack,
    frame_provenance: Vec<FrameProvenance>,
    /// Source tracks in canonical order. Empty for drafts reloaded from a
    /// merged track alone, in which case blank segments carry no evidence.
    sources: Vec<FrameTrack>,
}

impl ConsensusDraft {
    /// Rebuilds a draft from a previously merged track (e.g. a draft CSV).
    pub fn from_merged(mut merged: FrameTrack) -> Self {
        merged.provenance = Provenance::ConsensusDraft;
        let frame_provenance = merged
            .labels()
            .iter()
            .map(|l| if l.is_blank() { FrameProvenance::Blank } else { FrameProvenance::Agreed })
            .collect();
        Self {
            case_id: merged.case_id.clone(),
            source_annotators: Vec::new(),
            merged,
            frame_provenance,
            sources: Vec::new(),
        }
    }

    pub fn merged(&self) -> &FrameTrack {
        &self.merged
    }

    pub fn frame_provenance(&self) -> &[FrameProvenance] {
        &self.frame_provenance
    }

    pub fn sources(&self) -> &[FrameTrack] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.merged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merged.is_empty()
    }

    pub fn blank_count(&self) -> usize {
        self.frame_provenance.iter().filter(|p| **p == FrameProvenance::Blank).count()
    }

    /// Fraction of frames that survived the merge.
    pub fn coverage(&self) -> f64 {
        (self.len() - self.blank_count()) as f64 / self.len() as f64
    }

    pub fn is_agreed(&self, frame: usize) -> bool {
        self.frame_provenance.get(frame) == Some(&FrameProvenance::Agreed)
    }
}

/// Checks the shared preconditions of every multi-track operation.
pub(crate) fn check_sources(tracks: &[FrameTrack]) -> Result<(), ConsensusError> {
    if tracks.len() < 2 {
        return Err(ConsensusError::NotEnoughAnnotators(tracks.len()));
    }
    let first = &tracks[0];
    for t in tracks {
        if t.case_id != first.case_id {
            return Err(ConsensusError::CaseMismatch {
                annotator: t.annotator_id.clone(),
                expected: first.case_id.clone(),
                found: t.case_id.clone(),
            });
        }
        if t.len() != first.len() {
            return Err(ConsensusError::LengthMismatch {
                annotator: t.annotator_id.clone(),
                expected: first.len(),
                found: t.len(),
            });
        }
        if t.fps != first.fps {
            return Err(ConsensusError::FpsMismatch {
                annotator: t.annotator_id.clone(),
                expected: first.fps,
                found: t.fps,
            });
        }
        if let Some(frame) = t.first_blank() {
            return Err(ConsensusError::BlankInSource { annotator: t.annotator_id.clone(), frame });
        }
    }
    Ok(())
}

/// Strict unanimity merge: a frame keeps its label only if every track agrees.
pub fn and_merge(tracks: &[FrameTrack]) -> Result<ConsensusDraft, ConsensusError> {
    check_sources(tracks)?;
    let mut sources = tracks.to_vec();
    sources.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id).then_with(|| a.labels().cmp(b.labels())));

    let n = sources[0].len();
    let mut labels = Vec::with_capacity(n);
    let mut frame_provenance = Vec::with_capacity(n);
    for k in 0..n {
        let first = sources[0].labels()[k];
        if sources[1..].iter().all(|t| t.labels()[k] == first) {
            labels.push(first);
            frame_provenance.push(FrameProvenance::Agreed);
        } else {
            labels.push(Label::Blank);
            frame_provenance.push(FrameProvenance::Blank);
        }
    }
    let merged = FrameTrack::new(
        sources[0].case_id.clone(),
        CONSENSUS_ID,
        sources[0].fps,
        Provenance::ConsensusDraft,
        labels,
    )
    .expect("sources are non-empty");
    Ok(ConsensusDraft {
        case_id: merged.case_id.clone(),
        source_annotators: sources.iter().map(|t| t.annotator_id.clone()).collect(),
        merged,
        frame_provenance,
        sources,
    })
}

/// One annotator's labelling of a blank segment, as maximal runs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorEvidence {
    pub annotator_id: String,
    pub runs: Vec<Segment>,
}

/// A label proposed by at least one annotator within a blank segment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateLabel {
    pub label: PhaseId,
    /// Frames of the segment given this label, summed over annotators.
    pub total_frames: usize,
    pub annotators: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlankSegment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub evidence: Vec<AnnotatorEvidence>,
    /// Ordered by descending `total_frames`, then ascending label.
    pub candidates: Vec<CandidateLabel>,
    /// Agreed label immediately before the segment, if any.
    pub context_before: Option<PhaseId>,
    /// Agreed label immediately after the segment, if any.
    pub context_after: Option<PhaseId>,
}

impl BlankSegment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn describe_blank(draft: &ConsensusDraft, start: usize, end: usize) -> BlankSegment {
    let mut evidence = Vec::with_capacity(draft.sources.len());
    let mut tally: BTreeMap<PhaseId, (usize, Vec<String>)> = BTreeMap::new();
    for src in &draft.sources {
        let runs = segments_of(&src.labels()[start..=end], start);
        for run in &runs {
            if let Label::Phase(id) = run.label {
                let entry = tally.entry(id).or_default();
                entry.0 += run.len();
                if entry.1.last() != Some(&src.annotator_id) {
                    entry.1.push(src.annotator_id.clone());
                }
            }
        }
        evidence.push(AnnotatorEvidence { annotator_id: src.annotator_id.clone(), runs });
    }
    let mut candidates: Vec<CandidateLabel> = tally
        .into_iter()
        .map(|(label, (total_frames, annotators))| CandidateLabel { label, total_frames, annotators })
        .collect();
    candidates.sort_by(|a, b| b.total_frames.cmp(&a.total_frames).then(a.label.cmp(&b.label)));

    let labels = draft.merged.labels();
    BlankSegment {
        start_frame: start,
        end_frame: end,
        evidence,
        candidates,
        context_before: start.checked_sub(1).and_then(|k| labels[k].phase()),
        context_after: labels.get(end + 1).and_then(|l| l.phase()),
    }
}

/// Maximal blank runs of the draft in ascending order, each with the
/// per-annotator evidence the inspector needs.
pub fn blank_segments(draft: &ConsensusDraft) -> Vec<BlankSegment> {
    segments_of(draft.merged.labels(), 0)
        .into_iter()
        .filter(|s| s.label.is_blank())
        .map(|s| describe_blank(draft, s.start_frame, s.end_frame))
        .collect()
}

/// Describes the blank range `start..=end` without requiring it to be maximal.
pub fn describe_blank_range(draft: &ConsensusDraft, start: usize, end: usize) -> Option<BlankSegment> {
    if start > end || end >= draft.len() || !(start..=end).all(|k| !draft.is_agreed(k)) {
        return None;
    }
    Some(describe_blank(draft, start, end))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionEntry {
    pub start_frame: usize,
    pub end_frame: usize,
    pub assigned_label: PhaseId,
    pub inspector_id: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub note: String,
}

/// Inspector decisions for the blank frames of one draft.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionLedger {
    pub entries: Vec<ResolutionEntry>,
}

impl ResolutionLedger {
    pub fn new(entries: Vec<ResolutionEntry>) -> Self {
        Self { entries }
    }

    /// Every assigned label must belong to `taxonomy`.
    pub fn check_labels(&self, taxonomy: &PhaseTaxonomy) -> Result<(), ConsensusError> {
        match self.entries.iter().find(|e| !taxonomy.contains(e.assigned_label)) {
            Some(e) => Err(ConsensusError::UnknownLabel(e.assigned_label)),
            None => Ok(()),
        }
    }

    /// Entries must be well-formed, inside `frames`, and pairwise disjoint.
    pub fn check_ranges(&self, frames: usize) -> Result<(), ConsensusError> {
        let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            if e.start_frame > e.end_frame || e.end_frame >= frames {
                return Err(ConsensusError::InvalidRange { start: e.start_frame, end: e.end_frame, frames });
            }
            ranges.push((e.start_frame, e.end_frame));
        }
        ranges.sort_unstable();
        for w in ranges.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(ConsensusError::OverlappingResolutions { first: w[0], second: w[1] });
            }
        }
        Ok(())
    }
}

/// Output of [`apply_resolutions`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedTrack {
    pub track: FrameTrack,
    /// True iff no blank frame remains.
    pub complete: bool,
    /// Blank ranges the ledger did not cover.
    pub residual_blanks: Vec<(usize, usize)>,
}

/// Completes a draft with inspector decisions. Agreed frames are never
/// altered; a ledger entry touching one is rejected.
pub fn apply_resolutions(
    draft: &ConsensusDraft,
    ledger: &ResolutionLedger,
) -> Result<ResolvedTrack, ConsensusError> {
    ledger.check_ranges(draft.len())?;
    let mut labels = draft.merged.labels().to_vec();
    for e in &ledger.entries {
        if let Some(frame) = (e.start_frame..=e.end_frame).find(|&k| draft.is_agreed(k)) {
            return Err(ConsensusError::ResolutionOverreach { frame });
        }
        labels[e.start_frame..=e.end_frame].fill(Label::Phase(e.assigned_label));
    }
    let residual_blanks: Vec<(usize, usize)> = segments_of(&labels, 0)
        .into_iter()
        .filter(|s| s.label.is_blank())
        .map(|s| (s.start_frame, s.end_frame))
        .collect();
    let complete = residual_blanks.is_empty();
    let provenance = if complete { Provenance::Consensus } else { Provenance::ConsensusDraft };
    let track = FrameTrack::new(draft.case_id.clone(), CONSENSUS_ID, draft.merged.fps, provenance, labels)
        .expect("draft is non-empty");
    Ok(ResolvedTrack { track, complete, residual_blanks })
}
