//! Arithmetic over tables of AP values: consensus deltas, split-mean
//! consistency and per-model deviation from the cross-model mean.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rust_decimal::prelude::*;
use rust_decimal::RoundingStrategy;
use serde::{Deserialize, Serialize};

use super::EvalError;

/// Which supervision a model was trained with.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationRef {
    Annotation(String),
    Consensus,
}

impl FromStr for AnnotationRef {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            t if t.eq_ignore_ascii_case("con") || t.eq_ignore_ascii_case("consensus") => {
                AnnotationRef::Consensus
            }
            t => AnnotationRef::Annotation(t.to_string()),
        })
    }
}

impl fmt::Display for AnnotationRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotationRef::Annotation(a) => f.write_str(a),
            AnnotationRef::Consensus => f.write_str("Con"),
        }
    }
}

/// One AP result for a (model, split, annotation) triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApCell {
    pub model: String,
    pub split: String,
    pub annotation: AnnotationRef,
    pub ap: f64,
}

impl ApCell {
    pub fn new(model: &str, split: &str, annotation: AnnotationRef, ap: f64) -> Self {
        Self { model: model.to_string(), split: split.to_string(), annotation, ap }
    }
}

/// Exact decimal value of the shortest representation of `x`, so that
/// `65.07` is treated as the decimal 65.07 rather than its binary neighbour.
fn to_decimal(x: f64) -> Result<Decimal, EvalError> {
    if !x.is_finite() {
        return Err(EvalError::NotDecimal(x));
    }
    Decimal::from_str(&x.to_string()).or_else(|_| Decimal::from_f64_retain(x).ok_or(EvalError::NotDecimal(x)))
}

fn half_up(d: Decimal, dp: u32) -> Decimal {
    d.round_dp_with_strategy(dp, RoundingStrategy::MidpointAwayFromZero)
}

/// Formats `x` rounded half away from zero to `dp` decimals.
pub fn round_half_up(x: f64, dp: u32) -> String {
    match to_decimal(x) {
        Ok(d) => format!("{:.*}", dp as usize, half_up(d, dp)),
        Err(_) => x.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaCell {
    pub annotation: String,
    pub ap: f64,
    /// Exact `consensus_ap - ap` in decimal arithmetic.
    pub delta: Decimal,
}

impl DeltaCell {
    /// Signed delta rounded half-up to two decimals, e.g. `+2.49`.
    pub fn display_delta(&self) -> String {
        let rounded = half_up(self.delta, 2);
        if rounded.is_sign_negative() && !rounded.is_zero() {
            format!("{rounded:.2}")
        } else {
            format!("+{:.2}", rounded.abs())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub model: String,
    pub split: String,
    pub consensus_ap: f64,
    /// In order of first appearance in the input.
    pub cells: Vec<DeltaCell>,
}

impl DeltaRow {
    pub fn ap_by_annotation(&self) -> BTreeMap<String, f64> {
        self.cells.iter().map(|c| (c.annotation.clone(), c.ap)).collect()
    }

    pub fn deltas(&self) -> BTreeMap<String, Decimal> {
        self.cells.iter().map(|c| (c.annotation.clone(), c.delta)).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub rows: Vec<DeltaRow>,
}

impl DeltaTable {
    /// Mean delta per model over all its splits and annotations, in order of
    /// first appearance.
    pub fn mean_delta_by_model(&self) -> Vec<(String, Decimal)> {
        let mut sums: Vec<(String, Decimal, u32)> = Vec::new();
        for row in &self.rows {
            let idx = match sums.iter().position(|(m, _, _)| *m == row.model) {
                Some(i) => i,
                None => {
                    sums.push((row.model.clone(), Decimal::ZERO, 0));
                    sums.len() - 1
                }
            };
            for c in &row.cells {
                sums[idx].1 += c.delta;
                sums[idx].2 += 1;
            }
        }
        sums.into_iter()
            .filter(|(_, _, n)| *n > 0)
            .map(|(m, total, n)| (m, total / Decimal::from(n)))
            .collect()
    }

    pub fn cell_count(&self) -> usize {
        self.rows.iter().map(|r| r.cells.len()).sum()
    }
}

/// Groups results by (model, split) and subtracts each annotation's AP
/// from the consensus AP of the same model and split.
pub fn delta_table(results: &[ApCell]) -> Result<DeltaTable, EvalError> {
    struct Group {
        model: String,
        split: String,
        consensus: Option<f64>,
        cells: Vec<(String, f64)>,
    }
    let mut groups: Vec<Group> = Vec::new();
    for cell in results {
        let idx = match groups.iter().position(|g| g.model == cell.model && g.split == cell.split) {
            Some(i) => i,
            None => {
                groups.push(Group {
                    model: cell.model.clone(),
                    split: cell.split.clone(),
                    consensus: None,
                    cells: Vec::new(),
                });
                groups.len() - 1
            }
        };
        let g = &mut groups[idx];
        let duplicate = || EvalError::DuplicateCell {
            model: cell.model.clone(),
            split: cell.split.clone(),
            annotation: cell.annotation.to_string(),
        };
        match &cell.annotation {
            AnnotationRef::Consensus => {
                if g.consensus.replace(cell.ap).is_some() {
                    return Err(duplicate());
                }
            }
            AnnotationRef::Annotation(a) => {
                if g.cells.iter().any(|(b, _)| b == a) {
                    return Err(duplicate());
                }
                g.cells.push((a.clone(), cell.ap));
            }
        }
    }
    let mut rows = Vec::with_capacity(groups.len());
    for g in groups {
        let consensus_ap = g
            .consensus
            .ok_or(EvalError::MissingConsensus { model: g.model.clone(), split: g.split.clone() })?;
        let con = to_decimal(consensus_ap)?;
        let cells = g
            .cells
            .into_iter()
            .map(|(annotation, ap)| Ok(DeltaCell { annotation, ap, delta: con - to_decimal(ap)? }))
            .collect::<Result<Vec<_>, EvalError>>()?;
        rows.push(DeltaRow { model: g.model, split: g.split, consensus_ap, cells });
    }
    Ok(DeltaTable { rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    pub derived_map: f64,
    pub reported_map: f64,
    pub consistent: bool,
}

/// Compares a reported mean against the arithmetic mean of its split values.
pub fn consistency_check(
    split_aps: &[f64],
    reported_map: f64,
    tolerance: f64,
) -> Result<ConsistencyCheck, EvalError> {
    if split_aps.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let derived_map = split_aps.iter().sum::<f64>() / split_aps.len() as f64;
    Ok(ConsistencyCheck {
        derived_map,
        reported_map,
        consistent: (derived_map - reported_map).abs() <= tolerance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationEntry {
    /// Mean over models.
    pub total_ap: f64,
    pub deviations: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport<K: Ord> {
    pub entries: BTreeMap<K, DeviationEntry>,
}

/// Per key (split or phase), the cross-model mean and each model's offset from it.
pub fn deviation_report<K: Ord + Clone>(
    aps: &BTreeMap<String, BTreeMap<K, f64>>,
) -> Result<DeviationReport<K>, EvalError> {
    let mut models = aps.iter();
    let (reference, first) = models.next().ok_or(EvalError::EmptyInput)?;
    for (model, scores) in models {
        if scores.len() != first.len() || !scores.keys().zip(first.keys()).all(|(a, b)| a == b) {
            return Err(EvalError::KeyMismatch { model: model.clone(), reference: reference.clone() });
        }
    }
    let count = aps.len() as f64;
    let entries = first
        .keys()
        .map(|key| {
            let total_ap = aps.values().map(|s| s[key]).sum::<f64>() / count;
            let deviations = aps.iter().map(|(m, s)| (m.clone(), s[key] - total_ap)).collect();
            (key.clone(), DeviationEntry { total_ap, deviations })
        })
        .collect();
    Ok(DeviationReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(a: &str) -> AnnotationRef {
        AnnotationRef::Annotation(a.to_string())
    }

    #[test]
    fn delta_examples() {
        let t = delta_table(&[
            ApCell::new("2D-CNN-LSTM", "Split1", ann("Ann1"), 65.07),
            ApCell::new("2D-CNN-LSTM", "Split1", AnnotationRef::Consensus, 67.56),
            ApCell::new("3D-ResNet", "Split2", ann("Ann4"), 62.46),
            ApCell::new("3D-ResNet", "Split2", AnnotationRef::Consensus, 69.95),
            ApCell::new("3D-ResNet", "Split2", ann("Ann5"), 69.95),
        ])
        .unwrap();
        assert_eq!(t.rows[0].cells[0].display_delta(), "+2.49");
        assert_eq!(t.rows[0].cells[0].delta, Decimal::from_str("2.49").unwrap());
        assert_eq!(t.rows[1].cells[0].display_delta(), "+7.49");
        assert_eq!(t.rows[1].cells[1].delta, Decimal::ZERO);
        assert_eq!(t.rows[1].cells[1].display_delta(), "+0.00");
    }

    #[test]
    fn missing_consensus_and_duplicates() {
        let err = delta_table(&[ApCell::new("m", "s", ann("Ann1"), 1.0)]).unwrap_err();
        assert!(matches!(err, EvalError::MissingConsensus { .. }));
        let err = delta_table(&[
            ApCell::new("m", "s", AnnotationRef::Consensus, 1.0),
            ApCell::new("m", "s", AnnotationRef::Consensus, 2.0),
        ])
        .unwrap_err();
        assert!(matches!(err, EvalError::DuplicateCell { .. }));
    }

    #[test]
    fn negative_and_midpoint_rounding() {
        let t = delta_table(&[
            ApCell::new("m", "s", ann("a"), 50.125),
            ApCell::new("m", "s", ann("b"), 49.995),
            ApCell::new("m", "s", AnnotationRef::Consensus, 50.0),
        ])
        .unwrap();
        assert_eq!(t.rows[0].cells[0].display_delta(), "-0.13");
        assert_eq!(t.rows[0].cells[1].display_delta(), "+0.01");
        assert_eq!(round_half_up(2.345, 2), "2.35");
        assert_eq!(round_half_up(61.083333, 1), "61.1");
    }

    #[test]
    fn annotation_parsing() {
        assert_eq!("Con".parse::<AnnotationRef>().unwrap(), AnnotationRef::Consensus);
        assert_eq!("consensus".parse::<AnnotationRef>().unwrap(), AnnotationRef::Consensus);
        assert_eq!("Ann3".parse::<AnnotationRef>().unwrap(), ann("Ann3"));
    }

    #[test]
    fn consistency_examples() {
        let c = consistency_check(&[65.8, 59.2, 51.1, 51.7, 70.9, 67.8], 61.1, 0.15).unwrap();
        assert!((c.derived_map - 61.083333).abs() < 1e-5);
        assert!(c.consistent);
        let c = consistency_check(&[72.9, 60.6, 57.1, 46.3, 72.9, 62.9], 67.6, 0.15).unwrap();
        assert!((c.derived_map - 62.116667).abs() < 1e-5);
        assert!(!c.consistent);
        assert!(consistency_check(&[42.5], 42.5, 0.0).unwrap().consistent);
        assert_eq!(consistency_check(&[], 1.0, 0.1), Err(EvalError::EmptyInput));
    }

    #[test]
    fn deviation_examples() {
        let one: BTreeMap<String, BTreeMap<u32, f64>> =
            [("m".to_string(), [(1, 40.0), (2, 60.0)].into())].into();
        let r = deviation_report(&one).unwrap();
        assert!(r.entries.values().all(|e| e.deviations["m"] == 0.0));

        let two: BTreeMap<String, BTreeMap<&str, f64>> =
            [("a".to_string(), [("k", 60.0)].into()), ("b".to_string(), [("k", 70.0)].into())].into();
        let r = deviation_report(&two).unwrap();
        assert_eq!(r.entries["k"].total_ap, 65.0);
        assert_eq!(r.entries["k"].deviations["a"], -5.0);
        assert_eq!(r.entries["k"].deviations["b"], 5.0);

        let ragged: BTreeMap<String, BTreeMap<&str, f64>> =
            [("a".to_string(), [("k", 60.0)].into()), ("b".to_string(), [("j", 70.0)].into())].into();
        assert!(matches!(deviation_report(&ragged), Err(EvalError::KeyMismatch { .. })));
    }
}
