//! HTTP API over a [`ProjectStore`]: track upload, consensus drafting, the
//! blank-segment inspector queue, export and evaluation.
//!
//! Mutations of one case run one at a time behind a per-case lock and are
//! written to the store before the response is sent. Reads take no lock.

pub mod api;
pub mod auth;
pub mod error;
mod openapi;
pub mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::http::header;
use axum::response::{Html, IntoResponse};
use axum::routing::{get, post, put};
use axum::{middleware, Json, Router};
use phaseforge_core::store::ProjectStore;
use tokio::net::TcpListener;
use tokio::sync::Mutex;

pub use auth::{Authenticator, Permissive, StaticTokens};
pub use error::ApiError;

const INDEX_HTML: &str = include_str!("../static/index.html");

/// Request bodies up to this size are accepted; prediction CSVs of long
/// cases run to several megabytes.
pub const BODY_LIMIT: usize = 64 * 1024 * 1024;

type CaseLocks = HashMap<(String, String), Arc<Mutex<()>>>;

#[derive(Clone)]
pub struct AppState {
    pub store: ProjectStore,
    pub auth: Arc<dyn Authenticator>,
    locks: Arc<Mutex<CaseLocks>>,
}

impl AppState {
    pub fn new(store: ProjectStore) -> Self {
        Self::with_auth(store, Arc::new(Permissive))
    }

    pub fn with_auth(store: ProjectStore, auth: Arc<dyn Authenticator>) -> Self {
        Self { store, auth, locks: Arc::default() }
    }

    pub(crate) async fn case_lock(&self, project: &str, case: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().await;
        locks.entry((project.to_string(), case.to_string())).or_default().clone()
    }
}

/// Runs blocking store work off the async workers.
pub(crate) async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?
}

pub fn router(state: AppState) -> Router {
    let case = "/api/projects/{p}/cases/{c}";
    let protected = Router::new()
        .route("/api/projects", post(api::create_project).get(api::list_projects))
        .route("/api/projects/{p}", get(api::get_project))
        .route("/api/projects/{p}/cases", post(api::create_case).get(api::list_cases))
        .route("/api/projects/{p}/evaluate", post(api::evaluate))
        .route(case, get(api::get_case))
        .route(&format!("{case}/tracks/{{annotator}}"), put(api::put_track))
        .route(&format!("{case}/consensus"), post(api::build_consensus))
        .route(&format!("{case}/blanks"), get(api::blanks))
        .route(&format!("{case}/resolutions"), post(api::submit_resolution))
        .route(&format!("{case}/stats"), get(api::stats))
        .route(&format!("{case}/export"), get(api::export))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth::require_auth));
    Router::new()
        .merge(protected)
        .route("/api/spec", get(|| async { Json(openapi::document()) }))
        .route(
            "/",
            get(|| async { ([(header::CACHE_CONTROL, "no-cache")], Html(INDEX_HTML)).into_response() }),
        )
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub async fn bind_and_serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    serve(TcpListener::bind(addr).await?, state).await
}
