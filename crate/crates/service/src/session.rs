//! Inspector session of one case: the latest draft plus the resolution
//! events recorded against it. The pending queue is derived, never stored.

use chrono::{DateTime, Utc};
use phaseforge_core::consensus::{
    apply_resolutions, describe_blank_range, BlankSegment, ConsensusDraft, ResolutionEntry, ResolutionLedger,
    ResolvedTrack,
};
use phaseforge_core::label::{PhaseId, PhaseTaxonomy};
use phaseforge_core::store::ResolutionEvent;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ApiError;

/// Body of `POST .../resolutions`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub submission_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub label: PhaseId,
    pub inspector_id: String,
    #[serde(default)]
    pub note: String,
}

impl Submission {
    fn matches(&self, entry: &ResolutionEntry) -> bool {
        self.start_frame == entry.start_frame
            && self.end_frame == entry.end_frame
            && self.label == entry.assigned_label
            && self.inspector_id == entry.inspector_id
            && self.note == entry.note
    }
}

#[derive(Debug)]
pub enum Outcome {
    /// Same submission id and content already recorded.
    Duplicate,
    Accepted(ResolutionEvent),
}

#[derive(Clone, Debug)]
pub struct Session {
    pub draft_version: u64,
    pub draft: ConsensusDraft,
    /// Events for `draft_version`, in append order.
    pub events: Vec<ResolutionEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueView {
    pub draft_version: u64,
    pub frame_count: usize,
    pub blank_frames: usize,
    pub resolved_count: usize,
    pub pending: Vec<BlankSegment>,
}

impl Session {
    pub fn new(draft_version: u64, draft: ConsensusDraft, all_events: Vec<ResolutionEvent>) -> Self {
        let events = all_events.into_iter().filter(|e| e.draft_version == draft_version).collect();
        Self { draft_version, draft, events }
    }

    pub fn ledger(&self) -> ResolutionLedger {
        ResolutionLedger::new(self.events.iter().map(|e| e.entry.clone()).collect())
    }

    pub fn resolved(&self) -> Result<ResolvedTrack, ApiError> {
        Ok(apply_resolutions(&self.draft, &self.ledger())?)
    }

    /// Blank ranges not yet covered, ascending.
    pub fn pending(&self) -> Result<Vec<(usize, usize)>, ApiError> {
        Ok(self.resolved()?.residual_blanks)
    }

    pub fn queue(&self) -> Result<QueueView, ApiError> {
        let pending = self
            .pending()?
            .into_iter()
            .map(|(s, e)| describe_blank_range(&self.draft, s, e).expect("pending range is blank"))
            .collect();
        Ok(QueueView {
            draft_version: self.draft_version,
            frame_count: self.draft.len(),
            blank_frames: self.draft.blank_count(),
            resolved_count: self.events.len(),
            pending,
        })
    }

    /// Decides what a submission does without mutating anything.
    pub fn check(
        &self,
        sub: &Submission,
        taxonomy: &PhaseTaxonomy,
        now: DateTime<Utc>,
    ) -> Result<Outcome, ApiError> {
        if let Some(prior) = self.events.iter().find(|e| e.submission_id == sub.submission_id) {
            return if sub.matches(&prior.entry) {
                Ok(Outcome::Duplicate)
            } else {
                Err(ApiError::conflict(
                    format!("submission {} was already used with different content", sub.submission_id),
                    json!({ "recorded": prior.entry }),
                ))
            };
        }
        if !taxonomy.contains(sub.label) {
            return Err(ApiError::unprocessable(
                format!("label {} is not in the project taxonomy", sub.label),
                json!({ "label": sub.label }),
            ));
        }
        let pending = self.pending()?;
        let inside = sub.start_frame <= sub.end_frame
            && pending.iter().any(|&(s, e)| s <= sub.start_frame && sub.end_frame <= e);
        if !inside {
            return Err(ApiError::conflict(
                format!("frames {}..={} are not a pending blank range", sub.start_frame, sub.end_frame),
                json!({ "pending": pending }),
            ));
        }
        Ok(Outcome::Accepted(ResolutionEvent {
            submission_id: sub.submission_id.clone(),
            draft_version: self.draft_version,
            entry: ResolutionEntry {
                start_frame: sub.start_frame,
                end_frame: sub.end_frame,
                assigned_label: sub.label,
                inspector_id: sub.inspector_id.clone(),
                timestamp: now,
                note: sub.note.clone(),
            },
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use phaseforge_core::consensus::and_merge;
    use phaseforge_core::label::FrameTrack;

    fn session() -> Session {
        // frames 2..=5 disagree
        let a = FrameTrack::from_phases("c", "a", &[0, 0, 1, 1, 1, 1, 2, 2]).unwrap();
        let b = FrameTrack::from_phases("c", "b", &[0, 0, 0, 0, 2, 2, 2, 2]).unwrap();
        Session::new(1, and_merge(&[a, b]).unwrap(), Vec::new())
    }

    fn sub(id: &str, start: usize, end: usize, label: PhaseId) -> Submission {
        Submission {
            submission_id: id.into(),
            start_frame: start,
            end_frame: end,
            label,
            inspector_id: "insp".into(),
            note: String::new(),
        }
    }

    fn accept(s: &mut Session, x: &Submission) {
        match s.check(x, &PhaseTaxonomy::cholecystectomy(), Utc::now()).unwrap() {
            Outcome::Accepted(e) => s.events.push(e),
            Outcome::Duplicate => panic!("unexpected duplicate"),
        }
    }

    #[test]
    fn partial_resolution_splits_the_range() {
        let mut s = session();
        assert_eq!(s.pending().unwrap(), vec![(2, 5)]);
        accept(&mut s, &sub("x", 2, 3, 1));
        assert_eq!(s.pending().unwrap(), vec![(4, 5)]);
        assert_eq!(s.queue().unwrap().pending[0].start_frame, 4);
    }

    #[test]
    fn rejections() {
        let mut s = session();
        let tax = PhaseTaxonomy::cholecystectomy();
        let now = Utc::now();
        assert_eq!(s.check(&sub("x", 1, 3, 1), &tax, now).unwrap_err().status(), 409);
        assert_eq!(s.check(&sub("x", 2, 3, 9), &tax, now).unwrap_err().status(), 422);
        assert_eq!(s.check(&sub("x", 3, 2, 1), &tax, now).unwrap_err().status(), 409);
        accept(&mut s, &sub("x", 2, 3, 1));
        assert!(matches!(s.check(&sub("x", 2, 3, 1), &tax, now).unwrap(), Outcome::Duplicate));
        assert_eq!(s.check(&sub("x", 4, 5, 1), &tax, now).unwrap_err().status(), 409);
        assert_eq!(s.check(&sub("y", 3, 4, 1), &tax, now).unwrap_err().status(), 409);
    }

    #[test]
    fn events_of_older_drafts_are_ignored() {
        let s = session();
        let mut stale =
            match s.check(&sub("x", 2, 5, 1), &PhaseTaxonomy::cholecystectomy(), Utc::now()).unwrap() {
                Outcome::Accepted(e) => e,
                Outcome::Duplicate => unreachable!(),
            };
        stale.draft_version = 0;
        let s = Session::new(1, s.draft, vec![stale]);
        assert_eq!(s.pending().unwrap(), vec![(2, 5)]);
    }
}
