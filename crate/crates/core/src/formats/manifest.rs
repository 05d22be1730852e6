use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::label::Fps;
use crate::splits::{CaseMetadata, RecordingSystem};

use super::FormatError;

/// Description of one case and the files that belong to it. Relative paths
/// resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseManifest {
    pub case_id: String,
    pub fps: Fps,
    pub frame_count: usize,
    #[serde(default)]
    pub recording_system: RecordingSystem,
    pub metadata: CaseMetadata,
    #[serde(default)]
    pub track_files: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub prediction_files: BTreeMap<String, PathBuf>,
}

impl CaseManifest {
    pub fn new(case_id: impl Into<String>, frame_count: usize) -> Self {
        let case_id = case_id.into();
        Self {
            metadata: CaseMetadata::new(case_id.clone()),
            case_id,
            fps: Fps::ONE,
            frame_count,
            recording_system: RecordingSystem::Other,
            track_files: BTreeMap::new(),
            prediction_files: BTreeMap::new(),
        }
    }

    pub fn check(&self) -> Result<(), FormatError> {
        if self.frame_count == 0 {
            return Err(FormatError::schema(0, "frame_count must be at least 1"));
        }
        if self.case_id.is_empty() {
            return Err(FormatError::schema(0, "case_id must not be empty"));
        }
        if self.metadata.case_id != self.case_id {
            return Err(FormatError::schema(0, "metadata.case_id differs from case_id"));
        }
        Ok(())
    }

    /// Every referenced file, resolved against `base`.
    pub fn referenced_files(&self, base: &Path) -> Vec<PathBuf> {
        self.track_files.values().chain(self.prediction_files.values()).map(|p| base.join(p)).collect()
    }

    pub fn check_files(&self, base: &Path) -> Result<(), FormatError> {
        match self.referenced_files(base).into_iter().find(|p| !p.is_file()) {
            Some(missing) => Err(FormatError::MissingFile(missing)),
            None => Ok(()),
        }
    }
}

/// Parses and checks a manifest without touching the file system.
pub fn parse_manifest_json(bytes: &[u8]) -> Result<CaseManifest, FormatError> {
    let m: CaseManifest = serde_json::from_slice(bytes)?;
    m.check()?;
    Ok(m)
}

pub fn write_manifest_json(manifest: &CaseManifest) -> String {
    serde_json::to_string_pretty(manifest).expect("manifest serializes")
}

/// Reads a manifest file and checks that every file it references exists.
pub fn load_manifest(path: &Path) -> Result<CaseManifest, FormatError> {
    let m = parse_manifest_json(&std::fs::read(path)?)?;
    m.check_files(path.parent().unwrap_or(Path::new(".")))?;
    Ok(m)
}
