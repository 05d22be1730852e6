use serde::{Deserialize, Serialize};

use super::{and_merge, check_sources, ConsensusError};
use crate::label::{transitions, FrameTrack};

/// Default boundary distance cap: two minutes at 1 fps.
pub const DEFAULT_MAX_DISTANCE: usize = 120;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    /// Row/column order of `pairwise`, matching the input order.
    pub annotators: Vec<String>,
    pub pairwise: Vec<Vec<f64>>,
    pub unanimity_coverage: f64,
}

impl AgreementStats {
    pub fn min_pairwise(&self) -> f64 {
        let n = self.annotators.len();
        let mut min = 1.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                min = min.min(self.pairwise[i][j]);
            }
        }
        min
    }
}

/// Fraction of frames on which each annotator pair agrees, plus the
/// coverage of the unanimity merge.
pub fn pairwise_agreement(tracks: &[FrameTrack]) -> Result<AgreementStats, ConsensusError> {
    check_sources(tracks)?;
    let n = tracks.len();
    let frames = tracks[0].len() as f64;
    let mut pairwise = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let equal =
                tracks[i].labels().iter().zip(tracks[j].labels()).filter(|(a, b)| a == b).count() as f64;
            pairwise[i][j] = equal / frames;
            pairwise[j][i] = pairwise[i][j];
        }
    }
    let unanimity_coverage = and_merge(tracks)?.coverage();
    Ok(AgreementStats {
        annotators: tracks.iter().map(|t| t.annotator_id.clone()).collect(),
        pairwise,
        unanimity_coverage,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryBin {
    pub distance: usize,
    pub frames_at_distance: usize,
    pub disagreeing_frames: usize,
}

/// Histogram of disagreement against distance to the nearest phase change
/// of a reference track.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryProfile {
    pub max_distance: usize,
    /// One bin per distance `0..=max_distance`; the last bin also holds
    /// every frame farther away than the cap.
    pub bins: Vec<BoundaryBin>,
}

impl BoundaryProfile {
    pub fn total_frames(&self) -> usize {
        self.bins.iter().map(|b| b.frames_at_distance).sum()
    }

    pub fn total_disagreeing(&self) -> usize {
        self.bins.iter().map(|b| b.disagreeing_frames).sum()
    }
}

/// Distance from every frame to the nearest boundary, `None` if there are none.
fn boundary_distances(n: usize, boundaries: &[usize]) -> Vec<Option<usize>> {
    let mut dist = vec![None; n];
    let mut last: Option<usize> = None;
    let mut next = boundaries.iter().peekable();
    for (k, slot) in dist.iter_mut().enumerate() {
        while let Some(&&b) = next.peek() {
            if b <= k {
                last = Some(b);
                next.next();
            } else {
                break;
            }
        }
        let behind = last.map(|b| k - b);
        let ahead = next.peek().map(|&&b| b - k);
        *slot = match (behind, ahead) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        };
    }
    dist
}

pub fn boundary_disagreement_profile(
    reference: &FrameTrack,
    others: &[FrameTrack],
    max_distance: usize,
) -> Result<BoundaryProfile, ConsensusError> {
    let boundaries = transitions(reference).map_err(|_| ConsensusError::BlankInSource {
        annotator: reference.annotator_id.clone(),
        frame: reference.first_blank().unwrap_or(0),
    })?;
    for o in others {
        if o.len() != reference.len() {
            return Err(ConsensusError::LengthMismatch {
                annotator: o.annotator_id.clone(),
                expected: reference.len(),
                found: o.len(),
            });
        }
    }
    let mut bins: Vec<BoundaryBin> = (0..=max_distance)
        .map(|distance| BoundaryBin { distance, frames_at_distance: 0, disagreeing_frames: 0 })
        .collect();
    let reference_labels = reference.labels();
    for (k, d) in boundary_distances(reference.len(), &boundaries).into_iter().enumerate() {
        let bin = &mut bins[d.map_or(max_distance, |d| d.min(max_distance))];
        bin.frames_at_distance += 1;
        if others.iter().any(|o| o.labels()[k] != reference_labels[k]) {
            bin.disagreeing_frames += 1;
        }
    }
    Ok(BoundaryProfile { max_distance, bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::PhaseId;

    fn t(ann: &str, p: &[PhaseId]) -> FrameTrack {
        FrameTrack::from_phases("case", ann, p).unwrap()
    }

    #[test]
    fn agreement_examples() {
        let s = pairwise_agreement(&[t("a", &[0, 1, 2]), t("b", &[0, 1, 2])]).unwrap();
        assert_eq!(s.pairwise, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(s.unanimity_coverage, 1.0);

        let s = pairwise_agreement(&[t("a", &[0, 0]), t("b", &[1, 1])]).unwrap();
        assert_eq!(s.pairwise[0][1], 0.0);
        assert_eq!(s.unanimity_coverage, 0.0);
    }

    #[test]
    fn boundary_hand_case() {
        let reference = t("r", &[0, 0, 1, 1]);
        let p = boundary_disagreement_profile(&reference, &[t("o", &[0, 1, 1, 1])], 5).unwrap();
        // boundary at frame 2: frames 1 and 3 are at distance 1, frame 0 at 2
        assert_eq!(p.bins[0].frames_at_distance, 1);
        assert_eq!(p.bins[1].frames_at_distance, 2);
        assert_eq!(p.bins[2].frames_at_distance, 1);
        assert_eq!(p.bins[1].disagreeing_frames, 1);
        assert_eq!(p.total_disagreeing(), 1);
    }

    #[test]
    fn self_comparison_never_disagrees() {
        let reference = t("r", &[0, 0, 1, 1, 2, 2, 2, 3]);
        let p = boundary_disagreement_profile(&reference, std::slice::from_ref(&reference), 3).unwrap();
        assert!(p.bins.iter().all(|b| b.disagreeing_frames == 0));
        assert_eq!(p.total_frames(), 8);
    }

    #[test]
    fn constant_reference_goes_to_cap() {
        let reference = t("r", &[4; 10]);
        let p = boundary_disagreement_profile(&reference, &[t("o", &[3; 10])], 7).unwrap();
        assert_eq!(p.bins.len(), 8);
        assert_eq!(p.bins[7].frames_at_distance, 10);
        assert_eq!(p.bins[7].disagreeing_frames, 10);
    }

    #[test]
    fn distances_cap() {
        let reference = t("r", &[0, 1, 1, 1, 1, 1]);
        let p = boundary_disagreement_profile(&reference, &[], 2).unwrap();
        let counts: Vec<usize> = p.bins.iter().map(|b| b.frames_at_distance).collect();
        assert_eq!(counts, vec![1, 2, 3]);
    }
}
