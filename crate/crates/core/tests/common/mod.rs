//! Random generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use phaseforge_core::label::{Fps, FrameTrack, Label, PhaseId, PhaseTaxonomy, Provenance};
use phaseforge_core::splits::{CaseMetadata, RecordingSystem, SplitPlan, DEFAULT_COVARIATES};

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn taxonomy(gastrectomy: bool) -> PhaseTaxonomy {
    if gastrectomy {
        PhaseTaxonomy::gastrectomy()
    } else {
        PhaseTaxonomy::cholecystectomy()
    }
}

/// Piecewise-constant phase sequence with runs of roughly `mean_run` frames.
pub fn random_phases(rng: &mut ChaCha8Rng, ids: &[PhaseId], frames: usize, mean_run: usize) -> Vec<PhaseId> {
    let mut out = Vec::with_capacity(frames);
    while out.len() < frames {
        let id = ids[rng.gen_range(0..ids.len())];
        let run = rng.gen_range(1..=2 * mean_run.max(1));
        out.extend(std::iter::repeat_n(id, run.min(frames - out.len())));
    }
    out
}

/// Another annotator's view of `base`: boundaries shifted by up to `shift`
/// frames and occasional short runs relabelled.
pub fn perturb(rng: &mut ChaCha8Rng, base: &[PhaseId], ids: &[PhaseId], shift: usize) -> Vec<PhaseId> {
    let mut out = base.to_vec();
    for k in 1..base.len() {
        if base[k] != base[k - 1] && shift > 0 {
            let d = rng.gen_range(0..=shift);
            if rng.gen_bool(0.5) {
                let end = (k + d).min(base.len());
                out[k..end].fill(base[k - 1]);
            } else {
                let start = k.saturating_sub(d);
                out[start..k].fill(base[k]);
            }
        }
    }
    let flips = rng.gen_range(0..=3);
    for _ in 0..flips {
        let start = rng.gen_range(0..out.len());
        let end = (start + rng.gen_range(1..=10)).min(out.len());
        out[start..end].fill(ids[rng.gen_range(0..ids.len())]);
    }
    out
}

pub fn tracks_for(case: &str, phases: &[Vec<PhaseId>]) -> Vec<FrameTrack> {
    phases
        .iter()
        .enumerate()
        .map(|(i, p)| FrameTrack::from_phases(case, format!("ann{}", i + 1), p).unwrap())
        .collect()
}

/// Random confidence rows. With `coarse` the values come from a small set so
/// that ties are common. With `normalized` each row sums to one.
pub fn random_rows(
    rng: &mut ChaCha8Rng,
    frames: usize,
    classes: usize,
    coarse: bool,
    normalized: bool,
) -> Vec<Vec<f64>> {
    (0..frames)
        .map(|_| {
            let mut row: Vec<f64> = (0..classes)
                .map(|_| if coarse { rng.gen_range(0..4) as f64 / 4.0 } else { rng.gen::<f64>() })
                .collect();
            if normalized {
                if row.iter().all(|v| *v == 0.0) {
                    row[0] = 1.0;
                }
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
            }
            row
        })
        .collect()
}

/// AP by explicit rank enumeration: the rank of item `i` is one plus the
/// number of items that outrank it (higher score, or equal score and lower
/// index). No sorting involved.
pub fn ap_oracle(scores: &[f64], relevant: &[bool]) -> Option<f64> {
    let n = scores.len();
    let rank =
        |i: usize| 1 + (0..n).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count();
    let positives: Vec<usize> = (0..n).filter(|&i| relevant[i]).collect();
    if positives.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for &p in &positives {
        let r = rank(p);
        let hits = positives.iter().filter(|&&q| rank(q) <= r).count();
        total += hits as f64 / r as f64;
    }
    Some(total / positives.len() as f64)
}

/// Frames where not every track carries the same label.
pub fn disagreement_frames(phases: &[Vec<PhaseId>]) -> Vec<usize> {
    (0..phases[0].len()).filter(|&k| phases.iter().any(|p| p[k] != phases[0][k])).collect()
}

/// Indices b with labels[b] != labels[b-1].
pub fn boundaries_oracle(labels: &[PhaseId]) -> Vec<usize> {
    (1..labels.len()).filter(|&b| labels[b] != labels[b - 1]).collect()
}

/// Distance from `k` to the nearest boundary, capped at `cap`; `cap` when
/// there are no boundaries. Scans every boundary.
pub fn distance_oracle(boundaries: &[usize], k: usize, cap: usize) -> usize {
    boundaries.iter().map(|b| b.abs_diff(k)).min().unwrap_or(cap).min(cap)
}

pub fn argmax_oracle(row: &[f64]) -> usize {
    let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    row.iter().position(|&v| v == best).unwrap()
}

/// Random track over either taxonomy, optionally with a few blanks.
pub fn random_track(seed: u64, allow_blank: bool) -> FrameTrack {
    let mut r = rng(seed);
    let ids: Vec<PhaseId> = taxonomy(r.gen_bool(0.5)).ids().collect();
    let frames = r.gen_range(1..=3000);
    let run = r.gen_range(1..=50);
    let mut labels: Vec<Label> =
        random_phases(&mut r, &ids, frames, run).into_iter().map(Label::Phase).collect();
    if allow_blank {
        for _ in 0..r.gen_range(0..5) {
            let k = r.gen_range(0..frames);
            labels[k] = Label::Blank;
        }
    }
    let provenance =
        if labels.iter().any(|l| l.is_blank()) { Provenance::ConsensusDraft } else { Provenance::Annotator };
    FrameTrack::new("", "", Fps::ONE, provenance, labels).unwrap()
}

fn opt_value(r: &mut ChaCha8Rng) -> Option<f64> {
    match r.gen_range(0..4) {
        0 => None,
        1 => Some(r.gen_range(0..500) as f64),
        2 => Some(r.gen_range(0.0..500.0)),
        _ => Some(r.gen_range(0..5000) as f64 / 10.0),
    }
}

/// Random metadata rows with missing values, extras and awkward ids.
pub fn random_cases(seed: u64) -> Vec<CaseMetadata> {
    let mut r = rng(seed);
    let extras = ["asa", "tumor_cm"];
    (0..r.gen_range(1..30))
        .map(|i| {
            let mut extra = BTreeMap::new();
            for name in extras {
                if let Some(v) = opt_value(&mut r) {
                    extra.insert(name.to_string(), v);
                }
            }
            CaseMetadata {
                case_id: if r.gen_bool(0.1) { format!("case,{i} \"q\"") } else { format!("case{i}") },
                age: opt_value(&mut r),
                operation_minutes: opt_value(&mut r),
                bleeding_ml: opt_value(&mut r),
                bmi: opt_value(&mut r),
                recording_system: [RecordingSystem::Si, RecordingSystem::Xi, RecordingSystem::Other]
                    [r.gen_range(0..3)],
                extra,
            }
        })
        .collect()
}

/// Balance score recomputed from scratch for test sets given as case indices.
pub fn score_oracle(cases: &[CaseMetadata], sets: &[Vec<usize>]) -> f64 {
    let mut worst: f64 = 0.0;
    for cov in DEFAULT_COVARIATES {
        let values: Vec<f64> = cases.iter().map(|c| c.covariate(cov).unwrap()).collect();
        let span = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - values.iter().cloned().fold(f64::INFINITY, f64::min);
        if span == 0.0 {
            continue;
        }
        let means: Vec<f64> =
            sets.iter().map(|s| s.iter().map(|&i| values[i]).sum::<f64>() / s.len() as f64).collect();
        let spread = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - means.iter().cloned().fold(f64::INFINITY, f64::min);
        worst = worst.max(spread / span);
    }
    worst
}

pub fn plan_sets(cases: &[CaseMetadata], plan: &SplitPlan) -> Vec<Vec<usize>> {
    plan.folds
        .iter()
        .map(|f| f.test_ids.iter().map(|id| cases.iter().position(|c| &c.case_id == id).unwrap()).collect())
        .collect()
}

/// Best score among `draws` random disjoint assignments.
pub fn best_random(cases: &[CaseMetadata], folds: usize, test: usize, draws: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut idx: Vec<usize> = (0..cases.len()).collect();
    (0..draws)
        .map(|_| {
            idx.shuffle(&mut r);
            let sets: Vec<Vec<usize>> = idx.chunks(test).take(folds).map(<[usize]>::to_vec).collect();
            score_oracle(cases, &sets)
        })
        .fold(f64::INFINITY, f64::min)
}
