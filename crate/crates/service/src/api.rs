use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::Utc;
use phaseforge_core::consensus::{
    and_merge, boundary_disagreement_profile, pairwise_agreement, AgreementStats, BoundaryProfile,
    CONSENSUS_ID, DEFAULT_MAX_DISTANCE,
};
use phaseforge_core::evaluation::{eval_report, EvalReport};
use phaseforge_core::formats::{parse_manifest_json, parse_prediction_csv, parse_track_csv, write_track_csv};
use phaseforge_core::label::{validate_track_with_length, PhaseTaxonomy, Provenance};
use phaseforge_core::store::{check_id, ProjectInfo, StoreError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::session::{Outcome, QueueView, Session, Submission};
use crate::{blocking, AppState};

type ApiResult<T> = Result<T, ApiError>;

#[derive(Deserialize)]
#[serde(untagged)]
pub enum TaxonomyChoice {
    Builtin(String),
    Custom(PhaseTaxonomy),
}

#[derive(Deserialize)]
pub struct NewProject {
    pub project_id: String,
    pub taxonomy: TaxonomyChoice,
}

pub async fn create_project(State(st): State<AppState>, Json(body): Json<NewProject>) -> ApiResult<Response> {
    let taxonomy = match body.taxonomy {
        TaxonomyChoice::Builtin(name) => PhaseTaxonomy::builtin(&name)
            .ok_or_else(|| ApiError::unprocessable(format!("unknown taxonomy {name:?}"), Value::Null))?,
        TaxonomyChoice::Custom(t) => t,
    };
    let info = blocking(move || Ok(st.store.create_project(&body.project_id, taxonomy)?)).await?;
    Ok((StatusCode::CREATED, Json(info)).into_response())
}

pub async fn list_projects(State(st): State<AppState>) -> ApiResult<Json<Vec<String>>> {
    blocking(move || Ok(Json(st.store.list_projects()?))).await
}

pub async fn get_project(State(st): State<AppState>, Path(p): Path<String>) -> ApiResult<Json<ProjectInfo>> {
    blocking(move || Ok(Json(st.store.project(&p)?))).await
}

pub async fn create_case(
    State(st): State<AppState>,
    Path(p): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let manifest = parse_manifest_json(&body)?;
    manifest.check()?;
    let lock = st.case_lock(&p, &manifest.case_id).await;
    let _guard = lock.lock().await;
    let case_id = manifest.case_id.clone();
    let version = blocking(move || Ok(st.store.put_case(&p, &manifest)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "case_id": case_id, "version": version }))).into_response())
}

pub async fn list_cases(State(st): State<AppState>, Path(p): Path<String>) -> ApiResult<Json<Vec<String>>> {
    blocking(move || {
        st.store.project(&p)?;
        Ok(Json(st.store.list_cases(&p)?))
    })
    .await
}

pub async fn get_case(
    State(st): State<AppState>,
    Path((p, c)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    blocking(move || {
        let manifest = st.store.case(&p, &c)?;
        let tracks = st.store.list_tracks(&p, &c)?;
        Ok(Json(json!({ "manifest": manifest, "tracks": tracks })))
    })
    .await
}

pub async fn put_track(
    State(st): State<AppState>,
    Path((p, c, annotator)): Path<(String, String, String)>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    check_id(&annotator)?;
    if annotator == CONSENSUS_ID {
        return Err(ApiError::unprocessable(
            format!("annotator id {CONSENSUS_ID:?} is reserved"),
            Value::Null,
        ));
    }
    let mut track = parse_track_csv(&body)?;
    let lock = st.case_lock(&p, &c).await;
    let _guard = lock.lock().await;
    blocking(move || {
        let taxonomy = st.store.project(&p)?.taxonomy;
        let manifest = st.store.case(&p, &c)?;
        track.case_id = c.clone();
        track.annotator_id = annotator.clone();
        track.fps = manifest.fps;
        track.provenance = Provenance::Annotator;
        let report = validate_track_with_length(&track, &taxonomy, Some(manifest.frame_count));
        if !report.ok {
            return Err(ApiError::unprocessable(
                "track failed validation",
                serde_json::to_value(report).unwrap(),
            ));
        }
        let version = st.store.put_track(&p, &c, &annotator, &track)?;
        Ok(Json(json!({ "annotator": annotator, "version": version, "frame_count": track.len() })))
    })
    .await
}

#[derive(Serialize)]
pub struct DraftSummary {
    pub draft_version: u64,
    /// False when the tracks were unchanged and the existing draft was kept.
    pub created: bool,
    pub annotators: Vec<String>,
    pub frame_count: usize,
    pub blank_frames: usize,
    pub coverage: f64,
}

pub async fn build_consensus(
    State(st): State<AppState>,
    Path((p, c)): Path<(String, String)>,
) -> ApiResult<Json<DraftSummary>> {
    let lock = st.case_lock(&p, &c).await;
    let _guard = lock.lock().await;
    blocking(move || {
        st.store.case(&p, &c)?;
        let tracks = st.store.tracks(&p, &c)?;
        if tracks.is_empty() {
            return Err(ApiError::unprocessable("case has no annotator tracks", Value::Null));
        }
        let draft = and_merge(&tracks)?;
        let existing = match st.store.draft(&p, &c) {
            Ok((v, d)) if d == draft => Some(v),
            Ok(_) | Err(StoreError::NotFound(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let created = existing.is_none();
        let draft_version = match existing {
            Some(v) => v,
            None => st.store.put_draft(&p, &c, &draft)?,
        };
        Ok(Json(DraftSummary {
            draft_version,
            created,
            annotators: tracks.iter().map(|t| t.annotator_id.clone()).collect(),
            frame_count: draft.len(),
            blank_frames: draft.blank_count(),
            coverage: draft.coverage(),
        }))
    })
    .await
}

/// Latest session of a case. A case without a draft is a conflict, an
/// unknown case is not found.
fn load_session(st: &AppState, p: &str, c: &str) -> ApiResult<Session> {
    st.store.case(p, c)?;
    let (version, draft) = match st.store.draft(p, c) {
        Ok(d) => d,
        Err(StoreError::NotFound(_)) => {
            return Err(ApiError::conflict("consensus has not been computed for this case", Value::Null))
        }
        Err(e) => return Err(e.into()),
    };
    Ok(Session::new(version, draft, st.store.events(p, c)?))
}

pub async fn blanks(
    State(st): State<AppState>,
    Path((p, c)): Path<(String, String)>,
) -> ApiResult<Json<QueueView>> {
    blocking(move || Ok(Json(load_session(&st, &p, &c)?.queue()?))).await
}

pub async fn submit_resolution(
    State(st): State<AppState>,
    Path((p, c)): Path<(String, String)>,
    Json(sub): Json<Submission>,
) -> ApiResult<Json<QueueView>> {
    let lock = st.case_lock(&p, &c).await;
    let _guard = lock.lock().await;
    blocking(move || {
        let taxonomy = st.store.project(&p)?.taxonomy;
        let mut session = load_session(&st, &p, &c)?;
        match session.check(&sub, &taxonomy, Utc::now())? {
            Outcome::Duplicate => {}
            Outcome::Accepted(event) => {
                st.store.append_event(&p, &c, &event)?;
                session.events.push(event);
            }
        }
        Ok(Json(session.queue()?))
    })
    .await
}

#[derive(Deserialize)]
pub struct StatsQuery {
    pub reference: Option<String>,
    pub max_distance: Option<usize>,
}

#[derive(Serialize, Deserialize)]
pub struct StatsView {
    pub agreement: AgreementStats,
    pub min_pairwise: f64,
    pub reference: String,
    pub boundary_profile: BoundaryProfile,
}

pub async fn stats(
    State(st): State<AppState>,
    Path((p, c)): Path<(String, String)>,
    Query(q): Query<StatsQuery>,
) -> ApiResult<Json<StatsView>> {
    blocking(move || {
        st.store.case(&p, &c)?;
        let tracks = st.store.tracks(&p, &c)?;
        if tracks.is_empty() {
            return Err(ApiError::unprocessable("case has no annotator tracks", Value::Null));
        }
        let agreement = pairwise_agreement(&tracks)?;
        let reference = q.reference.unwrap_or_else(|| tracks[0].annotator_id.clone());
        let (refs, others): (Vec<_>, Vec<_>) = tracks.into_iter().partition(|t| t.annotator_id == reference);
        let reference_track = refs
            .first()
            .ok_or_else(|| ApiError::NotFound(format!("annotator {reference} has no track in this case")))?;
        let boundary_profile = boundary_disagreement_profile(
            reference_track,
            &others,
            q.max_distance.unwrap_or(DEFAULT_MAX_DISTANCE),
        )?;
        Ok(Json(StatsView { min_pairwise: agreement.min_pairwise(), agreement, reference, boundary_profile }))
    })
    .await
}

fn remaining_blanks(pending: &[(usize, usize)]) -> ApiError {
    let ranges: Vec<Value> =
        pending.iter().map(|&(s, e)| json!({ "start_frame": s, "end_frame": e })).collect();
    let frames: usize = pending.iter().map(|&(s, e)| e - s + 1).sum();
    ApiError::conflict(
        format!("{} blank segment(s) still pending", pending.len()),
        json!({ "remaining": ranges, "remaining_frames": frames }),
    )
}

pub async fn export(State(st): State<AppState>, Path((p, c)): Path<(String, String)>) -> ApiResult<Response> {
    blocking(move || {
        let resolved = load_session(&st, &p, &c)?.resolved()?;
        if !resolved.complete {
            return Err(remaining_blanks(&resolved.residual_blanks));
        }
        let csv = write_track_csv(&resolved.track);
        Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
    })
    .await
}

fn default_reference() -> String {
    CONSENSUS_ID.to_string()
}

fn default_model() -> String {
    "model".to_string()
}

#[derive(Deserialize)]
pub struct EvalRequest {
    pub case_id: String,
    /// Prediction CSV text.
    pub predictions: String,
    /// `consensus` or an annotator id.
    #[serde(default = "default_reference")]
    pub reference: String,
    #[serde(default = "default_model")]
    pub model: String,
}

pub async fn evaluate(
    State(st): State<AppState>,
    Path(p): Path<String>,
    Json(req): Json<EvalRequest>,
) -> ApiResult<Json<EvalReport>> {
    check_id(&req.model)?;
    blocking(move || {
        let taxonomy = st.store.project(&p)?.taxonomy;
        let mut log = parse_prediction_csv(req.predictions.as_bytes(), taxonomy.len())?;
        log.case_id = req.case_id.clone();
        let truth = if req.reference == CONSENSUS_ID {
            let resolved = load_session(&st, &p, &req.case_id)?.resolved()?;
            if !resolved.complete {
                return Err(remaining_blanks(&resolved.residual_blanks));
            }
            resolved.track
        } else {
            st.store.track(&p, &req.case_id, &req.reference)?
        };
        let report = eval_report(&log, &truth, &taxonomy)?;
        st.store.put_report(&p, &format!("eval.{}.{}.{}", req.case_id, req.model, req.reference), &report)?;
        Ok(Json(report))
    })
    .await
}
