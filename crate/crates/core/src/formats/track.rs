use crate::label::{Fps, FrameTrack, Label, Provenance};
use crate::replay::{DecisionTrack, FrameState};

use super::csvio::{expect_frame, expect_header, parse_frame, read_table, write_table};
use super::FormatError;

pub const TRACK_HEADER: [&str; 2] = ["frame", "phase"];
pub const DECISION_HEADER: [&str; 3] = ["frame", "phase", "state"];

fn parse_label(line: u64, cell: &str) -> Result<Label, FormatError> {
    cell.parse().map_err(|_| FormatError::schema(line, format!("phase {cell:?} is neither an id nor BLANK")))
}

/// Parses a `frame,phase` track. Frames must run densely from 0.
///
/// Case and annotator ids are left empty for the caller to fill in. The
/// provenance is `consensus_draft` when the file contains blanks and
/// `annotator` otherwise.
pub fn parse_track_csv(bytes: &[u8]) -> Result<FrameTrack, FormatError> {
    let table = read_table(bytes)?;
    expect_header(&table.header, &TRACK_HEADER)?;
    let mut labels = Vec::with_capacity(table.rows.len());
    for (k, (line, row)) in table.rows.iter().enumerate() {
        expect_frame(*line, k, parse_frame(*line, &row[0])?)?;
        labels.push(parse_label(*line, &row[1])?);
    }
    let provenance =
        if labels.iter().any(|l| l.is_blank()) { Provenance::ConsensusDraft } else { Provenance::Annotator };
    Ok(FrameTrack::new("", "", Fps::ONE, provenance, labels)?)
}

pub fn write_track_csv(track: &FrameTrack) -> String {
    write_table(&TRACK_HEADER, track.labels().iter().enumerate().map(|(k, l)| [k.to_string(), l.to_string()]))
}

/// Parses a `frame,phase,state` decision file. Frames are dense from the
/// first row's frame, which becomes the offset.
pub fn parse_decision_csv(bytes: &[u8]) -> Result<DecisionTrack, FormatError> {
    let table = read_table(bytes)?;
    expect_header(&table.header, &DECISION_HEADER)?;
    let mut labels = Vec::with_capacity(table.rows.len());
    let mut states = Vec::with_capacity(table.rows.len());
    let mut offset = 0;
    for (k, (line, row)) in table.rows.iter().enumerate() {
        let frame = parse_frame(*line, &row[0])?;
        if k == 0 {
            offset = frame;
        }
        expect_frame(*line, offset + k, frame)?;
        let label = parse_label(*line, &row[1])?;
        let state: FrameState = row[2].parse().map_err(|e: String| FormatError::schema(*line, e))?;
        if (state == FrameState::Decided) == label.is_blank() {
            return Err(FormatError::schema(*line, "decided frames need a phase and warmup frames BLANK"));
        }
        labels.push(label);
        states.push(state);
    }
    let track = FrameTrack::new("", "", Fps::ONE, Provenance::Prediction, labels)?;
    Ok(DecisionTrack::new(offset, track, states))
}

pub fn write_decision_csv(decisions: &DecisionTrack) -> String {
    write_table(
        &DECISION_HEADER,
        decisions.track.labels().iter().zip(&decisions.states).enumerate().map(|(k, (l, s))| {
            [(decisions.frame_offset + k).to_string(), l.to_string(), s.as_str().to_string()]
        }),
    )
}
