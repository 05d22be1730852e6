//! Bearer-token checks. The default accepts every request.

use std::collections::BTreeSet;

use axum::extract::{Request, State};
use axum::http::header::AUTHORIZATION;
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};

use crate::{error::ApiError, AppState};

pub trait Authenticator: Send + Sync {
    /// `token` is the value after `Bearer `, if the header was present.
    fn authorize(&self, token: Option<&str>) -> bool;
}

pub struct Permissive;

impl Authenticator for Permissive {
    fn authorize(&self, _token: Option<&str>) -> bool {
        true
    }
}

/// Accepts a fixed set of tokens.
pub struct StaticTokens(pub BTreeSet<String>);

impl StaticTokens {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(tokens: I) -> Self {
        Self(tokens.into_iter().map(Into::into).collect())
    }
}

impl Authenticator for StaticTokens {
    fn authorize(&self, token: Option<&str>) -> bool {
        token.is_some_and(|t| self.0.contains(t))
    }
}

pub(crate) async fn require_auth(State(state): State<AppState>, request: Request, next: Next) -> Response {
    let token = request
        .headers()
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    if state.auth.authorize(token) {
        next.run(request).await
    } else {
        ApiError::Unauthorized.into_response()
    }
}
