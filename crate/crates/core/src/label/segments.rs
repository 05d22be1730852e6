use serde::{Deserialize, Serialize};

use super::{Fps, FrameTrack, Label, LabelError, Provenance};

/// Inclusive frame range carrying one label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub label: Label,
}

impl Segment {
    pub fn new(start_frame: usize, end_frame: usize, label: impl Into<Label>) -> Self {
        Self { start_frame, end_frame, label: label.into() }
    }

    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.start_frame..=self.end_frame).contains(&frame)
    }
}

/// Run-length form of a [`FrameTrack`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentTrack {
    pub case_id: String,
    pub annotator_id: String,
    pub fps: Fps,
    pub provenance: Provenance,
    pub segments: Vec<Segment>,
}

impl SegmentTrack {
    /// Checks the gap-free, sorted, maximal-run structure.
    pub fn check(&self) -> Result<(), LabelError> {
        check_segments(&self.segments, true)
    }

    pub fn frame_count(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end_frame + 1)
    }
}

fn check_segments(segments: &[Segment], require_maximal: bool) -> Result<(), LabelError> {
    let first = segments.first().ok_or(LabelError::EmptyTrack)?;
    if first.start_frame != 0 {
        return Err(LabelError::MalformedSegments(format!("first segment starts at {}", first.start_frame)));
    }
    for (i, seg) in segments.iter().enumerate() {
        if seg.end_frame < seg.start_frame {
            return Err(LabelError::MalformedSegments(format!(
                "segment {i} ends ({}) before it starts ({})",
                seg.end_frame, seg.start_frame
            )));
        }
        if let Some(prev) = i.checked_sub(1).map(|j| &segments[j]) {
            if seg.start_frame != prev.end_frame + 1 {
                let what = if seg.start_frame <= prev.end_frame { "overlaps" } else { "leaves a gap after" };
                return Err(LabelError::MalformedSegments(format!("segment {i} {what} segment {}", i - 1)));
            }
            if require_maximal && seg.label == prev.label {
                return Err(LabelError::MalformedSegments(format!(
                    "segments {} and {i} repeat label {}",
                    i - 1,
                    seg.label
                )));
            }
        }
    }
    Ok(())
}

/// Run-length encodes a label slice into maximal runs, offsetting frames by `base`.
pub fn segments_of(labels: &[Label], base: usize) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (k, &label) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.label == label => last.end_frame = base + k,
            _ => out.push(Segment::new(base + k, base + k, label)),
        }
    }
    out
}

pub fn to_segments(track: &FrameTrack) -> Result<SegmentTrack, LabelError> {
    if track.is_empty() {
        return Err(LabelError::EmptyTrack);
    }
    Ok(SegmentTrack {
        case_id: track.case_id.clone(),
        annotator_id: track.annotator_id.clone(),
        fps: track.fps,
        provenance: track.provenance,
        segments: segments_of(track.labels(), 0),
    })
}

/// Expands segments back to frames. Adjacent runs sharing a label are
/// accepted; gaps and overlaps are not.
pub fn to_frames(segments: &SegmentTrack) -> Result<FrameTrack, LabelError> {
    check_segments(&segments.segments, false)?;
    let mut labels = Vec::with_capacity(segments.frame_count());
    for seg in &segments.segments {
        labels.extend(std::iter::repeat_n(seg.label, seg.len()));
    }
    FrameTrack::new(
        segments.case_id.clone(),
        segments.annotator_id.clone(),
        segments.fps,
        segments.provenance,
        labels,
    )
}
