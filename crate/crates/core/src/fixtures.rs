//! Embedded reference data: the two surgical taxonomies, published AP
//! tables, and synthetic case cohorts for split planning.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::evaluation::{AnnotationRef, ApCell};
use crate::formats::parse_metadata_csv;
use crate::label::{PhaseId, PhaseTaxonomy};
use crate::splits::CaseMetadata;

const CHOLEC_TAXONOMY: &str = include_str!("../fixtures/cholec_taxonomy.json");
const GASTRECTOMY_TAXONOMY: &str = include_str!("../fixtures/gastrectomy_taxonomy.json");
const TABLE1: &str = include_str!("../fixtures/table1_aps.json");
const TABLE2: &str = include_str!("../fixtures/table2_aps.json");
const PHASE_APS: &str = include_str!("../fixtures/supp_table3_aps.json");
const COHORT_24: &str = include_str!("../fixtures/synthetic_cohort_24.csv");
const COHORT_40: &str = include_str!("../fixtures/synthetic_cohort_40.csv");

pub const FIXTURE_NAMES: [&str; 7] = [
    "cholec_taxonomy",
    "gastrectomy_taxonomy",
    "table1_aps",
    "table2_aps",
    "supp_table3_aps",
    "synthetic_cohort_24",
    "synthetic_cohort_40",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FixtureError {
    #[error("no fixture named {0:?}")]
    NotFound(String),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct TaxonomyFixture {
    pub description: String,
    pub taxonomy: PhaseTaxonomy,
}

/// Per-split APs of one (model, annotation) pair and the mAP printed beside them.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct SplitMeanRow {
    pub model: String,
    pub annotation: String,
    pub split_aps: Vec<f64>,
    pub reported_map: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct SplitMeanFixture {
    pub description: String,
    pub rows: Vec<SplitMeanRow>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
struct RawCell {
    model: String,
    split: String,
    annotation: String,
    ap: f64,
}

/// A difference as printed, e.g. `"+2.49"`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct PrintedDelta {
    pub model: String,
    pub split: String,
    pub annotation: String,
    pub delta: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaFixture {
    pub description: String,
    pub cells: Vec<ApCell>,
    pub reported_deltas: Vec<PrintedDelta>,
}

#[derive(Deserialize)]
struct RawDeltaFixture {
    description: String,
    cells: Vec<RawCell>,
    reported_deltas: Vec<PrintedDelta>,
}

/// model -> phase id -> AP
pub type PhaseApTable = BTreeMap<String, BTreeMap<PhaseId, f64>>;

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct PhaseApFixture {
    pub description: String,
    pub cholecystectomy: PhaseApTable,
    pub gastrectomy: PhaseApTable,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Fixture {
    Taxonomy(TaxonomyFixture),
    SplitMeans(SplitMeanFixture),
    Deltas(DeltaFixture),
    PhaseAps(PhaseApFixture),
    Cohort(Vec<CaseMetadata>),
}

// Embedded data is checked by the tests below, so parse failures are bugs.
fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> T {
    serde_json::from_str(text).expect("embedded fixture parses")
}

pub fn load_fixture(name: &str) -> Result<Fixture, FixtureError> {
    Ok(match name {
        "cholec_taxonomy" => Fixture::Taxonomy(parse(CHOLEC_TAXONOMY)),
        "gastrectomy_taxonomy" => Fixture::Taxonomy(parse(GASTRECTOMY_TAXONOMY)),
        "table1_aps" => Fixture::SplitMeans(table1_aps()),
        "table2_aps" => Fixture::Deltas(table2_aps()),
        "supp_table3_aps" => Fixture::PhaseAps(supp_table3_aps()),
        "synthetic_cohort_24" => Fixture::Cohort(synthetic_cohort(24)),
        "synthetic_cohort_40" => Fixture::Cohort(synthetic_cohort(40)),
        other => return Err(FixtureError::NotFound(other.to_string())),
    })
}

pub fn taxonomy_fixture(name: &str) -> Result<TaxonomyFixture, FixtureError> {
    match load_fixture(name)? {
        Fixture::Taxonomy(t) => Ok(t),
        _ => Err(FixtureError::NotFound(name.to_string())),
    }
}

/// Cholecystectomy AP over six splits per model and annotation.
pub fn table1_aps() -> SplitMeanFixture {
    parse(TABLE1)
}

/// Gastrectomy averaged AP per model, split and annotation.
pub fn table2_aps() -> DeltaFixture {
    let raw: RawDeltaFixture = parse(TABLE2);
    DeltaFixture {
        description: raw.description,
        cells: raw
            .cells
            .into_iter()
            .map(|c| {
                let annotation: AnnotationRef = c.annotation.parse().expect("infallible");
                ApCell::new(&c.model, &c.split, annotation, c.ap)
            })
            .collect(),
        reported_deltas: raw.reported_deltas,
    }
}

pub fn supp_table3_aps() -> PhaseApFixture {
    parse(PHASE_APS)
}

/// Synthetic cohort of 24 or 40 cases; any other size panics.
pub fn synthetic_cohort(size: usize) -> Vec<CaseMetadata> {
    let text = match size {
        24 => COHORT_24,
        40 => COHORT_40,
        _ => panic!("no synthetic cohort of {size} cases"),
    };
    parse_metadata_csv(text.as_bytes()).expect("embedded cohort parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splits::RecordingSystem;

    #[test]
    fn every_fixture_loads() {
        for name in FIXTURE_NAMES {
            load_fixture(name).unwrap();
        }
        assert_eq!(load_fixture("table9"), Err(FixtureError::NotFound("table9".into())));
    }

    #[test]
    fn taxonomies_match_builtins() {
        let c = taxonomy_fixture("cholec_taxonomy").unwrap().taxonomy;
        assert_eq!(c, PhaseTaxonomy::cholecystectomy());
        assert_eq!(c.len(), 7);
        assert_eq!(c.phase(0).unwrap().name, "preparation");
        let g = taxonomy_fixture("gastrectomy_taxonomy").unwrap().taxonomy;
        assert_eq!(g, PhaseTaxonomy::gastrectomy());
        assert_eq!(g.len(), 27);
        assert_eq!(g.phase(18).unwrap().name, "Gastric transection");
    }

    #[test]
    fn table_shapes() {
        let t1 = table1_aps();
        assert_eq!(t1.rows.len(), 9);
        assert!(t1.rows.iter().all(|r| r.split_aps.len() == 6));
        assert_eq!(t1.rows[2].split_aps[2], 51.59);

        let t2 = table2_aps();
        assert_eq!(t2.cells.len(), 45);
        assert_eq!(t2.reported_deltas.len(), 36);
        let con = t2
            .cells
            .iter()
            .find(|c| {
                c.model == "2D-CNN-LSTM" && c.split == "Split3" && c.annotation == AnnotationRef::Consensus
            })
            .unwrap();
        assert_eq!(con.ap, 71.64);
        assert!(t2.cells.iter().any(|c| c.ap == 68.8));

        let t3 = supp_table3_aps();
        assert!(t3.cholecystectomy.values().all(|m| m.keys().copied().eq(0..7)));
        assert!(t3.gastrectomy.values().all(|m| m.keys().copied().eq(1..=27)));
        assert_eq!(t3.gastrectomy["3D-ResNet"][&18], 90.1);
    }

    #[test]
    fn cohorts() {
        let c40 = synthetic_cohort(40);
        assert_eq!(c40.len(), 40);
        assert_eq!(c40.iter().filter(|c| c.recording_system == RecordingSystem::Si).count(), 19);
        assert!(c40.iter().all(|c| c.bmi.is_some()));
        assert_eq!(synthetic_cohort(24).len(), 24);
    }
}
