//! Versioned on-disk project store.
//!
//! Layout under the root:
//!
//! ```text
//! projects/<project>/project/v000001.json
//! projects/<project>/cases/<case>/manifest/v000001.json
//! projects/<project>/cases/<case>/tracks/<annotator>/v000001.csv
//! projects/<project>/cases/<case>/draft/v000001.json
//! projects/<project>/cases/<case>/events/v000001.json   (append-only)
//! projects/<project>/reports/<name>/v000001.json
//! ```
//!
//! Every write creates a new version file. The bytes go to a temporary file
//! in the target directory which is then linked into place without
//! replacing anything, so readers never see a partial artifact and two
//! writers can never claim the same version.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{ConsensusDraft, ResolutionEntry};
use crate::formats::{
    parse_manifest_json, parse_track_csv, write_manifest_json, write_track_csv, CaseManifest, FormatError,
};
use crate::label::{FrameTrack, PhaseTaxonomy};

/// Environment variable that overrides the store root.
pub const HOME_ENV: &str = "PHASEFORGE_HOME";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid identifier {0:?}")]
    InvalidId(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0} already exists")]
    Exists(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectInfo {
    pub project_id: String,
    pub taxonomy: PhaseTaxonomy,
    pub created: DateTime<Utc>,
}

/// One accepted inspector submission, tied to the draft version it resolves.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionEvent {
    pub submission_id: String,
    pub draft_version: u64,
    pub entry: ResolutionEntry,
}

/// Identifiers become path components: letters, digits, `-`, `_`, `.`,
/// not starting with a dot.
pub fn check_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

fn version_name(version: u64, ext: &str) -> String {
    format!("v{version:06}.{ext}")
}

fn parse_version(name: &str, ext: &str) -> Option<u64> {
    name.strip_prefix('v')?.strip_suffix(ext)?.strip_suffix('.')?.parse().ok()
}

#[derive(Clone, Debug)]
pub struct ProjectStore {
    root: PathBuf,
}

impl ProjectStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("projects"))?;
        Ok(Self { root })
    }

    /// Opens `$PHASEFORGE_HOME` if set, otherwise `default`.
    pub fn from_env(default: impl Into<PathBuf>) -> Result<Self, StoreError> {
        match std::env::var_os(HOME_ENV) {
            Some(home) if !home.is_empty() => Self::open(PathBuf::from(home)),
            _ => Self::open(default),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn project_dir(&self, project: &str) -> Result<PathBuf, StoreError> {
        check_id(project)?;
        Ok(self.root.join("projects").join(project))
    }

    fn case_dir(&self, project: &str, case: &str) -> Result<PathBuf, StoreError> {
        check_id(case)?;
        Ok(self.project_dir(project)?.join("cases").join(case))
    }

    /// Versions present in `dir`, ascending.
    pub fn versions(dir: &Path, ext: &str) -> Result<Vec<u64>, StoreError> {
        let entries = match fs::read_dir(dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut versions = Vec::new();
        for entry in entries {
            if let Some(v) = entry?.file_name().to_str().and_then(|n| parse_version(n, ext)) {
                versions.push(v);
            }
        }
        versions.sort_unstable();
        Ok(versions)
    }

    /// Writes `bytes` as the next version in `dir` and returns that version.
    pub fn write_version(dir: &Path, ext: &str, bytes: &[u8]) -> Result<u64, StoreError> {
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::Builder::new().prefix(".tmp-").tempfile_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        let mut version = Self::versions(dir, ext)?.last().copied().unwrap_or(0) + 1;
        loop {
            match tmp.persist_noclobber(dir.join(version_name(version, ext))) {
                Ok(_) => return Ok(version),
                Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => {
                    tmp = e.file;
                    version += 1;
                }
                Err(e) => return Err(e.error.into()),
            }
        }
    }

    pub fn read_version(dir: &Path, ext: &str, version: u64) -> Result<Vec<u8>, StoreError> {
        let path = dir.join(version_name(version, ext));
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotFound(path.display().to_string()),
            _ => e.into(),
        })
    }

    pub fn read_latest(dir: &Path, ext: &str) -> Result<Option<(u64, Vec<u8>)>, StoreError> {
        match Self::versions(dir, ext)?.last() {
            Some(&v) => Ok(Some((v, Self::read_version(dir, ext, v)?))),
            None => Ok(None),
        }
    }

    fn latest_json<T: DeserializeOwned>(dir: &Path, what: &str) -> Result<(u64, T), StoreError> {
        let (v, bytes) =
            Self::read_latest(dir, "json")?.ok_or_else(|| StoreError::NotFound(what.to_string()))?;
        Ok((v, serde_json::from_slice(&bytes)?))
    }

    fn write_json<T: Serialize>(dir: &Path, value: &T) -> Result<u64, StoreError> {
        Self::write_version(dir, "json", serde_json::to_string_pretty(value)?.as_bytes())
    }

    pub fn create_project(
        &self,
        project_id: &str,
        taxonomy: PhaseTaxonomy,
    ) -> Result<ProjectInfo, StoreError> {
        let dir = self.project_dir(project_id)?.join("project");
        if !Self::versions(&dir, "json")?.is_empty() {
            return Err(StoreError::Exists(format!("project {project_id}")));
        }
        let info = ProjectInfo { project_id: project_id.to_string(), taxonomy, created: Utc::now() };
        Self::write_json(&dir, &info)?;
        Ok(info)
    }

    pub fn project(&self, project_id: &str) -> Result<ProjectInfo, StoreError> {
        Ok(Self::latest_json(
            &self.project_dir(project_id)?.join("project"),
            &format!("project {project_id}"),
        )?
        .1)
    }

    fn list_dirs(dir: &Path) -> Result<Vec<String>, StoreError> {
        let mut names = Vec::new();
        match fs::read_dir(dir) {
            Ok(entries) => {
                for entry in entries {
                    let entry = entry?;
                    if entry.file_type()?.is_dir() {
                        if let Some(name) = entry.file_name().to_str() {
                            if check_id(name).is_ok() {
                                names.push(name.to_string());
                            }
                        }
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        names.sort();
        Ok(names)
    }

    pub fn list_projects(&self) -> Result<Vec<String>, StoreError> {
        Self::list_dirs(&self.root.join("projects"))
    }

    pub fn put_case(&self, project: &str, manifest: &CaseManifest) -> Result<u64, StoreError> {
        self.project(project)?;
        manifest.check()?;
        let dir = self.case_dir(project, &manifest.case_id)?.join("manifest");
        Self::write_version(&dir, "json", write_manifest_json(manifest).as_bytes())
    }

    pub fn case(&self, project: &str, case: &str) -> Result<CaseManifest, StoreError> {
        let dir = self.case_dir(project, case)?.join("manifest");
        let (_, bytes) = Self::read_latest(&dir, "json")?
            .ok_or_else(|| StoreError::NotFound(format!("case {project}/{case}")))?;
        Ok(parse_manifest_json(&bytes)?)
    }

    pub fn list_cases(&self, project: &str) -> Result<Vec<String>, StoreError> {
        Self::list_dirs(&self.project_dir(project)?.join("cases"))
    }

    /// Stores a track as canonical CSV. Returns the new version.
    pub fn put_track(
        &self,
        project: &str,
        case: &str,
        annotator: &str,
        track: &FrameTrack,
    ) -> Result<u64, StoreError> {
        check_id(annotator)?;
        let dir = self.case_dir(project, case)?.join("tracks").join(annotator);
        Self::write_version(&dir, "csv", write_track_csv(track).as_bytes())
    }

    pub fn track(&self, project: &str, case: &str, annotator: &str) -> Result<FrameTrack, StoreError> {
        check_id(annotator)?;
        let manifest = self.case(project, case)?;
        let dir = self.case_dir(project, case)?.join("tracks").join(annotator);
        let (_, bytes) = Self::read_latest(&dir, "csv")?
            .ok_or_else(|| StoreError::NotFound(format!("track {project}/{case}/{annotator}")))?;
        let mut track = parse_track_csv(&bytes)?;
        track.case_id = case.to_string();
        track.annotator_id = annotator.to_string();
        track.fps = manifest.fps;
        Ok(track)
    }

    pub fn list_tracks(&self, project: &str, case: &str) -> Result<Vec<String>, StoreError> {
        Self::list_dirs(&self.case_dir(project, case)?.join("tracks"))
    }

    /// Latest version of every annotator track, ordered by annotator id.
    pub fn tracks(&self, project: &str, case: &str) -> Result<Vec<FrameTrack>, StoreError> {
        self.list_tracks(project, case)?.iter().map(|a| self.track(project, case, a)).collect()
    }

    pub fn put_draft(&self, project: &str, case: &str, draft: &ConsensusDraft) -> Result<u64, StoreError> {
        Self::write_json(&self.case_dir(project, case)?.join("draft"), draft)
    }

    /// Latest draft and its version.
    pub fn draft(&self, project: &str, case: &str) -> Result<(u64, ConsensusDraft), StoreError> {
        Self::latest_json(&self.case_dir(project, case)?.join("draft"), &format!("draft {project}/{case}"))
    }

    pub fn append_event(
        &self,
        project: &str,
        case: &str,
        event: &ResolutionEvent,
    ) -> Result<u64, StoreError> {
        Self::write_json(&self.case_dir(project, case)?.join("events"), event)
    }

    /// All events in append order.
    pub fn events(&self, project: &str, case: &str) -> Result<Vec<ResolutionEvent>, StoreError> {
        let dir = self.case_dir(project, case)?.join("events");
        Self::versions(&dir, "json")?
            .into_iter()
            .map(|v| Ok(serde_json::from_slice(&Self::read_version(&dir, "json", v)?)?))
            .collect()
    }

    pub fn put_report<T: Serialize>(&self, project: &str, name: &str, report: &T) -> Result<u64, StoreError> {
        check_id(name)?;
        self.project(project)?;
        Self::write_json(&self.project_dir(project)?.join("reports").join(name), report)
    }

    pub fn report<T: DeserializeOwned>(&self, project: &str, name: &str) -> Result<(u64, T), StoreError> {
        check_id(name)?;
        Self::latest_json(&self.project_dir(project)?.join("reports").join(name), &format!("report {name}"))
    }
}
