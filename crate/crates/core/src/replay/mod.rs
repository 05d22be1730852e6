//! Replays a prediction log as a live stream: frames arrive one at a time,
//! nothing is decided until the input buffer holds a full window, and each
//! decision is the argmax of the current frame's confidences.

mod buffer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{argmax, PredictionLog};
use crate::label::{Fps, FrameTrack, Label, PhaseId, PhaseTaxonomy, Provenance};
use crate::registry::UnknownStrategy;

pub use buffer::{buffer_strategies, BufferStrategy, FeatureQueue, FrameBuffer, FullWindowWait};

/// Window length used by the reference inference setup.
pub const DEFAULT_WINDOW: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplayError {
    #[error("window must be at least 1")]
    InvalidWindow,
    #[error("log has {rows} rows, shorter than the {window}-frame window")]
    LogTooShort { window: usize, rows: usize },
    #[error("decision track has {decisions} frames but the log has {rows}")]
    LengthMismatch { decisions: usize, rows: usize },
    #[error("log has {log} classes but the taxonomy has {taxonomy}")]
    ClassCountMismatch { log: usize, taxonomy: usize },
    #[error(transparent)]
    UnknownStrategy(#[from] UnknownStrategy),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferMode {
    FeatureQueue,
    FullWindowWait,
}

impl BufferMode {
    pub fn name(self) -> &'static str {
        match self {
            BufferMode::FeatureQueue => "feature_queue",
            BufferMode::FullWindowWait => "full_window_wait",
        }
    }
}

impl fmt::Display for BufferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BufferMode {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        buffer_strategies().get(s).map(|strategy| strategy.mode())
    }
}

/// What a streaming consumer sees for warmup frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmupEmission {
    /// Nothing is emitted until the first decision.
    #[default]
    Suppress,
    /// An explicit "unknown" emission per warmup frame.
    HoldUnknown,
}

impl FromStr for WarmupEmission {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "suppress" => Ok(WarmupEmission::Suppress),
            "hold_unknown" | "hold-unknown" | "unknown" => Ok(WarmupEmission::HoldUnknown),
            other => Err(format!("unknown warmup emission {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayPolicy {
    pub window: usize,
    pub mode: BufferMode,
    #[serde(default)]
    pub warmup_emission: WarmupEmission,
}

impl Default for ReplayPolicy {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            mode: BufferMode::FeatureQueue,
            warmup_emission: WarmupEmission::Suppress,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameState {
    Warmup,
    Decided,
}

impl FrameState {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameState::Warmup => "warmup",
            FrameState::Decided => "decided",
        }
    }
}

impl FromStr for FrameState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "warmup" => Ok(FrameState::Warmup),
            "decided" => Ok(FrameState::Decided),
            other => Err(format!("unknown frame state {other:?}")),
        }
    }
}

/// One streaming output event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Emission {
    Unknown { frame: usize },
    Decided { frame: usize, phase: PhaseId },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayStats {
    pub rows_visited: usize,
    pub max_buffered: usize,
    pub encoded_frames: u64,
}

/// Streaming decisions, one per log row. Warmup frames carry [`Label::Blank`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTrack {
    pub frame_offset: usize,
    pub track: FrameTrack,
    pub states: Vec<FrameState>,
    pub stats: ReplayStats,
}

impl DecisionTrack {
    pub fn new(frame_offset: usize, track: FrameTrack, states: Vec<FrameState>) -> Self {
        Self { frame_offset, track, states, stats: ReplayStats::default() }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn warmup_frames(&self) -> usize {
        self.states.iter().take_while(|s| **s == FrameState::Warmup).count()
    }

    pub fn decided(&self) -> impl Iterator<Item = (usize, PhaseId)> + '_ {
        self.states.iter().zip(self.track.labels()).enumerate().filter_map(|(k, (s, l))| match (s, l) {
            (FrameState::Decided, Label::Phase(id)) => Some((self.frame_offset + k, *id)),
            _ => None,
        })
    }
}

/// Incremental replayer: push rows in frame order, receive emissions.
pub struct Replayer<'t> {
    policy: ReplayPolicy,
    taxonomy: &'t PhaseTaxonomy,
    buffer: Box<dyn FrameBuffer>,
    next_frame: usize,
    stats: ReplayStats,
}

impl<'t> Replayer<'t> {
    pub fn new(
        policy: ReplayPolicy,
        taxonomy: &'t PhaseTaxonomy,
        frame_offset: usize,
    ) -> Result<Self, ReplayError> {
        let strategy = buffer_strategies().get(policy.mode.name())?;
        Self::with_strategy(policy, strategy.as_ref(), taxonomy, frame_offset)
    }

    pub fn with_strategy(
        policy: ReplayPolicy,
        strategy: &dyn BufferStrategy,
        taxonomy: &'t PhaseTaxonomy,
        frame_offset: usize,
    ) -> Result<Self, ReplayError> {
        if policy.window == 0 {
            return Err(ReplayError::InvalidWindow);
        }
        Ok(Self {
            policy,
            taxonomy,
            buffer: strategy.open(policy.window),
            next_frame: frame_offset,
            stats: ReplayStats::default(),
        })
    }

    /// Consumes the next row. Returns `None` for a suppressed warmup frame.
    pub fn push(&mut self, row: &[f64]) -> Option<Emission> {
        let frame = self.next_frame;
        self.next_frame += 1;
        let ready = self.buffer.push(row);
        self.stats.rows_visited += 1;
        self.stats.max_buffered = self.stats.max_buffered.max(self.buffer.buffered());
        self.stats.encoded_frames = self.buffer.encoded_frames();
        if ready {
            let newest = self.buffer.newest().expect("ready buffer holds the current row");
            let phase = self.taxonomy.id_at(argmax(newest)).expect("row width matches taxonomy");
            Some(Emission::Decided { frame, phase })
        } else {
            match self.policy.warmup_emission {
                WarmupEmission::Suppress => None,
                WarmupEmission::HoldUnknown => Some(Emission::Unknown { frame }),
            }
        }
    }

    pub fn stats(&self) -> ReplayStats {
        self.stats
    }
}

/// Streams `log` through the buffering policy in a single forward pass.
pub fn replay(
    log: &PredictionLog,
    policy: &ReplayPolicy,
    taxonomy: &PhaseTaxonomy,
) -> Result<DecisionTrack, ReplayError> {
    let strategy = buffer_strategies().get(policy.mode.name())?;
    replay_with(log, policy, strategy.as_ref(), taxonomy)
}

pub fn replay_with(
    log: &PredictionLog,
    policy: &ReplayPolicy,
    strategy: &dyn BufferStrategy,
    taxonomy: &PhaseTaxonomy,
) -> Result<DecisionTrack, ReplayError> {
    if policy.window == 0 {
        return Err(ReplayError::InvalidWindow);
    }
    if log.num_classes() != taxonomy.len() {
        return Err(ReplayError::ClassCountMismatch { log: log.num_classes(), taxonomy: taxonomy.len() });
    }
    if log.len() < policy.window {
        return Err(ReplayError::LogTooShort { window: policy.window, rows: log.len() });
    }
    // warmup frames are recorded whatever the emission policy
    let recording = ReplayPolicy { warmup_emission: WarmupEmission::HoldUnknown, ..*policy };
    let mut replayer = Replayer::with_strategy(recording, strategy, taxonomy, log.frame_offset())?;
    let mut labels = Vec::with_capacity(log.len());
    let mut states = Vec::with_capacity(log.len());
    for row in log.rows() {
        match replayer.push(row) {
            Some(Emission::Decided { phase, .. }) => {
                labels.push(Label::Phase(phase));
                states.push(FrameState::Decided);
            }
            _ => {
                labels.push(Label::Blank);
                states.push(FrameState::Warmup);
            }
        }
    }
    let track =
        FrameTrack::new(log.case_id.clone(), policy.mode.name(), Fps::ONE, Provenance::Prediction, labels)
            .expect("log has at least one row");
    Ok(DecisionTrack { frame_offset: log.frame_offset(), track, states, stats: replayer.stats() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub diff_count: usize,
    pub first_diff_frame: Option<usize>,
}

/// Counts decided frames whose label differs from the offline argmax of the log.
pub fn compare_offline(
    decisions: &DecisionTrack,
    log: &PredictionLog,
    taxonomy: &PhaseTaxonomy,
) -> Result<Divergence, ReplayError> {
    if decisions.len() != log.len() || decisions.track.len() != log.len() {
        return Err(ReplayError::LengthMismatch { decisions: decisions.len(), rows: log.len() });
    }
    if log.num_classes() != taxonomy.len() {
        return Err(ReplayError::ClassCountMismatch { log: log.num_classes(), taxonomy: taxonomy.len() });
    }
    let mut diff_count = 0;
    let mut first_diff_frame = None;
    for (k, (state, label)) in decisions.states.iter().zip(decisions.track.labels()).enumerate() {
        if *state != FrameState::Decided {
            continue;
        }
        let offline = taxonomy.id_at(log.argmax(k)).map(Label::Phase);
        if Some(*label) != offline {
            diff_count += 1;
            first_diff_frame.get_or_insert(decisions.frame_offset + k);
        }
    }
    Ok(Divergence { diff_count, first_diff_frame })
}
