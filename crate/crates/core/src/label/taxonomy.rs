use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{LabelError, PhaseId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurgeryKind {
    Cholecystectomy,
    Gastrectomy,
    /// A user-supplied taxonomy with no builtin shape constraints.
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Surgical,
    NonSurgical,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub id: PhaseId,
    pub name: String,
    pub kind: PhaseKind,
}

/// Closed, ordered set of phase labels for one surgery type.
///
/// Column `i` of a prediction log scores `phases[i]`, so the order here is
/// significant wherever confidences are involved.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PhaseTaxonomy {
    surgery_kind: SurgeryKind,
    phases: Vec<Phase>,
}

#[derive(Deserialize)]
struct RawTaxonomy {
    surgery_kind: SurgeryKind,
    phases: Vec<Phase>,
}

impl<'de> Deserialize<'de> for PhaseTaxonomy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawTaxonomy::deserialize(deserializer)?;
        PhaseTaxonomy::new(raw.surgery_kind, raw.phases).map_err(serde::de::Error::custom)
    }
}

const CHOLEC_PHASES: [&str; 7] = [
    "preparation",
    "calot triangle dissection",
    "clipping and cutting",
    "gallbladder dissection",
    "gallbladder packaging",
    "cleaning and coagulation",
    "gallbladder retraction",
];

const GASTRECTOMY_PHASES: [&str; 27] = [
    "Trocar insertion",
    "Docking",
    "Division of less omentum up to the right side of the esophagus",
    "Liver retraction",
    "Partial (or total) omentectomy",
    "Ligation of left gastroepiploic vessels",
    "Clearance of soft tissues along the greater curvature",
    "Ligation of Right gastroepiploic vein",
    "Ligation of Right Gastroepiploic Artery",
    "Creation of window for duodenal transection",
    "Duodenal transection",
    "Ligation of right gastric artery",
    "Dissection of LN stations 12a",
    "Dissection of LN station 8 and 9",
    "Dissection of LN station 7 and ligation of left gastric artery",
    "Dissection of LN station 11p",
    "Clearance of soft tissue along the lesser curvature",
    "Gastric transection",
    "Harvesting resected specimen into Endo bag",
    "Anastomosis",
    "Retrieval of specimen",
    "Adhesiolysis",
    "Housekeeping",
    "Clean camera",
    "Junk",
    "Other procedure",
    "Unexpected surgical events",
];

/// Ids above this value are non-gastrectomy actions.
const GASTRECTOMY_LAST_SURGICAL: PhaseId = 21;

impl PhaseTaxonomy {
    pub fn new(surgery_kind: SurgeryKind, phases: Vec<Phase>) -> Result<Self, LabelError> {
        if phases.is_empty() {
            return Err(LabelError::InvalidTaxonomy("phase list is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for p in &phases {
            if !seen.insert(p.id) {
                return Err(LabelError::InvalidTaxonomy(format!("duplicate phase id {}", p.id)));
            }
        }
        match surgery_kind {
            SurgeryKind::Cholecystectomy => {
                let ids: Vec<PhaseId> = phases.iter().map(|p| p.id).collect();
                if ids != (0..7).collect::<Vec<_>>() {
                    return Err(LabelError::InvalidTaxonomy(
                        "cholecystectomy requires exactly the ids 0..=6 in order".into(),
                    ));
                }
            }
            SurgeryKind::Gastrectomy => {
                let ids: Vec<PhaseId> = phases.iter().map(|p| p.id).collect();
                if ids != (1..=27).collect::<Vec<_>>() {
                    return Err(LabelError::InvalidTaxonomy(
                        "gastrectomy requires exactly the ids 1..=27 in order".into(),
                    ));
                }
                for p in &phases {
                    let expected = if p.id > GASTRECTOMY_LAST_SURGICAL {
                        PhaseKind::NonSurgical
                    } else {
                        PhaseKind::Surgical
                    };
                    if p.kind != expected {
                        return Err(LabelError::InvalidTaxonomy(format!(
                            "gastrectomy phase {} must be {:?}",
                            p.id, expected
                        )));
                    }
                }
            }
            SurgeryKind::Other => {}
        }
        Ok(Self { surgery_kind, phases })
    }

    /// The seven-phase laparoscopic cholecystectomy taxonomy, ids 0..=6.
    pub fn cholecystectomy() -> Self {
        let phases = CHOLEC_PHASES
            .iter()
            .enumerate()
            .map(|(i, name)| Phase { id: i as PhaseId, name: (*name).to_string(), kind: PhaseKind::Surgical })
            .collect();
        Self { surgery_kind: SurgeryKind::Cholecystectomy, phases }
    }

    /// The 27-phase robotic subtotal gastrectomy taxonomy, ids 1..=27.
    pub fn gastrectomy() -> Self {
        let phases = GASTRECTOMY_PHASES
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let id = i as PhaseId + 1;
                let kind =
                    if id > GASTRECTOMY_LAST_SURGICAL { PhaseKind::NonSurgical } else { PhaseKind::Surgical };
                Phase { id, name: (*name).to_string(), kind }
            })
            .collect();
        Self { surgery_kind: SurgeryKind::Gastrectomy, phases }
    }

    /// Generic taxonomy with ids `0..count`, useful for synthetic data.
    pub fn numbered(count: usize) -> Result<Self, LabelError> {
        let phases = (0..count)
            .map(|i| Phase { id: i as PhaseId, name: format!("phase {i}"), kind: PhaseKind::Surgical })
            .collect();
        Self::new(SurgeryKind::Other, phases)
    }

    /// Resolves `cholec`/`cholecystectomy` and `gastrectomy` (case-insensitive).
    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "cholec" | "cholecystectomy" => Some(Self::cholecystectomy()),
            "gastrectomy" | "gastric" => Some(Self::gastrectomy()),
            _ => None,
        }
    }

    pub fn surgery_kind(&self) -> SurgeryKind {
        self.surgery_kind
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn contains(&self, id: PhaseId) -> bool {
        self.column_of(id).is_some()
    }

    /// Position of `id` in the taxonomy, i.e. its confidence column.
    pub fn column_of(&self, id: PhaseId) -> Option<usize> {
        self.phases.iter().position(|p| p.id == id)
    }

    pub fn id_at(&self, column: usize) -> Option<PhaseId> {
        self.phases.get(column).map(|p| p.id)
    }

    pub fn phase(&self, id: PhaseId) -> Option<&Phase> {
        self.phases.iter().find(|p| p.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = PhaseId> + '_ {
        self.phases.iter().map(|p| p.id)
    }
}
