//! Frame-level phase labels, their run-length segment form, and validation.

mod segments;
mod taxonomy;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use segments::{segments_of, to_frames, to_segments, Segment, SegmentTrack};
pub use taxonomy::{Phase, PhaseKind, PhaseTaxonomy, SurgeryKind};

pub type PhaseId = u32;

/// Literal used for the blank label in every text format.
pub const BLANK_TOKEN: &str = "BLANK";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error("track has no frames")]
    EmptyTrack,
    #[error("segments are malformed: {0}")]
    MalformedSegments(String),
    #[error("blank label at frame {0}")]
    BlankInTrack(usize),
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("invalid frame rate: {0}")]
    InvalidFps(String),
    #[error("invalid label {0:?}")]
    InvalidLabel(String),
}

/// A per-frame label: a phase id, or the consensus "no label" state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Phase(PhaseId),
    Blank,
}

impl Label {
    pub fn phase(self) -> Option<PhaseId> {
        match self {
            Label::Phase(id) => Some(id),
            Label::Blank => None,
        }
    }

    pub fn is_blank(self) -> bool {
        matches!(self, Label::Blank)
    }
}

impl From<PhaseId> for Label {
    fn from(id: PhaseId) -> Self {
        Label::Phase(id)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Phase(id) => write!(f, "{id}"),
            Label::Blank => f.write_str(BLANK_TOKEN),
        }
    }
}

impl FromStr for Label {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == BLANK_TOKEN {
            return Ok(Label::Blank);
        }
        // reject signs and whitespace that u32::from_str would otherwise take
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(LabelError::InvalidLabel(s.to_string()));
        }
        s.parse::<PhaseId>().map(Label::Phase).map_err(|_| LabelError::InvalidLabel(s.to_string()))
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Label::Phase(id) => serializer.serialize_u32(*id),
            Label::Blank => serializer.serialize_str(BLANK_TOKEN),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(PhaseId),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Id(id) => Ok(Label::Phase(id)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Positive rational frame rate. Integral rates serialize as plain numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fps {
    num: u32,
    den: u32,
}

impl Fps {
    pub const ONE: Fps = Fps { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self, LabelError> {
        if num == 0 || den == 0 {
            return Err(LabelError::InvalidFps(format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        Ok(Fps { num: num / g, den: den / g })
    }

    pub fn numerator(self) -> u32 {
        self.num
    }

    pub fn denominator(self) -> u32 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Default for Fps {
    fn default() -> Self {
        Fps::ONE
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Fps {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || LabelError::InvalidFps(s.to_string());
        match s.split_once('/') {
            Some((n, d)) => {
                Fps::new(n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?)
            }
            None => Fps::new(s.trim().parse().map_err(|_| bad())?, 1),
        }
    }
}

impl Serialize for Fps {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.den == 1 {
            serializer.serialize_u32(self.num)
        } else {
            serializer.collect_str(self)
        }
    }
}

impl<'de> Deserialize<'de> for Fps {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Int(n) => Fps::new(n, 1).map_err(serde::de::Error::custom),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Who produced a track. Only consensus drafts may contain blanks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Annotator,
    ConsensusDraft,
    Consensus,
    Prediction,
}

impl Provenance {
    pub fn allows_blank(self) -> bool {
        matches!(self, Provenance::ConsensusDraft | Provenance::Prediction)
    }
}

/// Dense per-frame labels for one recording.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FrameTrackRepr")]
pub struct FrameTrack {
    pub case_id: String,
    pub annotator_id: String,
    pub fps: Fps,
    pub provenance: Provenance,
    labels: Vec<Label>,
}

#[derive(Deserialize)]
struct FrameTrackRepr {
    case_id: String,
    annotator_id: String,
    fps: Fps,
    provenance: Provenance,
    labels: Vec<Label>,
}

impl TryFrom<FrameTrackRepr> for FrameTrack {
    type Error = LabelError;

    fn try_from(r: FrameTrackRepr) -> Result<Self, Self::Error> {
        FrameTrack::new(r.case_id, r.annotator_id, r.fps, r.provenance, r.labels)
    }
}

impl FrameTrack {
    pub fn new(
        case_id: impl Into<String>,
        annotator_id: impl Into<String>,
        fps: Fps,
        provenance: Provenance,
        labels: Vec<Label>,
    ) -> Result<Self, LabelError> {
        if labels.is_empty() {
            return Err(LabelError::EmptyTrack);
        }
        Ok(Self { case_id: case_id.into(), annotator_id: annotator_id.into(), fps, provenance, labels })
    }

    /// Annotator track at 1 fps from raw phase ids.
    pub fn from_phases(
        case_id: impl Into<String>,
        annotator_id: impl Into<String>,
        phases: &[PhaseId],
    ) -> Result<Self, LabelError> {
        let labels = phases.iter().copied().map(Label::Phase).collect();
        Self::new(case_id, annotator_id, Fps::ONE, Provenance::Annotator, labels)
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, frame: usize) -> Option<Label> {
        self.labels.get(frame).copied()
    }

    pub fn has_blank(&self) -> bool {
        self.labels.iter().any(|l| l.is_blank())
    }

    pub fn first_blank(&self) -> Option<usize> {
        self.labels.iter().position(|l| l.is_blank())
    }

    /// Phase ids of a blank-free track.
    pub fn phases(&self) -> Result<Vec<PhaseId>, LabelError> {
        self.labels.iter().enumerate().map(|(k, l)| l.phase().ok_or(LabelError::BlankInTrack(k))).collect()
    }

    pub fn into_labels(self) -> Vec<Label> {
        self.labels
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCode {
    UnknownLabel,
    UnexpectedBlank,
    LengthMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub frame_index: usize,
    pub code: IssueCode,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    fn from_issues(issues: Vec<ValidationIssue>) -> Self {
        Self { ok: issues.is_empty(), issues }
    }
}

/// Checks taxonomy membership and the blank policy of every frame.
pub fn validate_track(track: &FrameTrack, taxonomy: &PhaseTaxonomy) -> ValidationReport {
    validate_track_with_length(track, taxonomy, None)
}

/// Like [`validate_track`], additionally comparing against an expected frame
/// count (e.g. from a case manifest).
pub fn validate_track_with_length(
    track: &FrameTrack,
    taxonomy: &PhaseTaxonomy,
    expected_frames: Option<usize>,
) -> ValidationReport {
    let mut issues = Vec::new();
    for (k, label) in track.labels.iter().enumerate() {
        match label {
            Label::Phase(id) if !taxonomy.contains(*id) => issues.push(ValidationIssue {
                frame_index: k,
                code: IssueCode::UnknownLabel,
                detail: format!("phase {id} is not in the {:?} taxonomy", taxonomy.surgery_kind()),
            }),
            Label::Blank if !track.provenance.allows_blank() => issues.push(ValidationIssue {
                frame_index: k,
                code: IssueCode::UnexpectedBlank,
                detail: format!("{:?} tracks must label every frame", track.provenance),
            }),
            _ => {}
        }
    }
    if let Some(expected) = expected_frames {
        if expected != track.len() {
            issues.push(ValidationIssue {
                frame_index: expected.min(track.len()),
                code: IssueCode::LengthMismatch,
                detail: format!("expected {expected} frames, found {}", track.len()),
            });
        }
    }
    ValidationReport::from_issues(issues)
}

/// Frame indices where the label changes from the previous frame.
pub fn transitions(track: &FrameTrack) -> Result<Vec<usize>, LabelError> {
    if let Some(k) = track.first_blank() {
        return Err(LabelError::BlankInTrack(k));
    }
    Ok(track.labels.windows(2).enumerate().filter(|(_, w)| w[0] != w[1]).map(|(k, _)| k + 1).collect())
}
