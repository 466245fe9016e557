//! HTTP front end of the peer daemon.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use smcgate_core::api::json_error_offset;
use smcgate_core::wire::Envelope;
use smcgate_core::{Failure, Reason};

use crate::daemon::PeerDaemon;

pub fn status_for(reason: Reason) -> StatusCode {
    match reason {
        Reason::UnknownSession => StatusCode::NOT_FOUND,
        Reason::MalformedRequest => StatusCode::BAD_REQUEST,
        Reason::BadGatewaySig | Reason::BadSig | Reason::BadCert => StatusCode::FORBIDDEN,
        _ => StatusCode::CONFLICT,
    }
}

fn reject(f: Failure) -> Response {
    (status_for(f.reason), Json(f)).into_response()
}

fn envelope(body: &[u8], path_id: Option<&str>) -> Result<Envelope, Response> {
    let env: Envelope = serde_json::from_slice(body).map_err(|e| {
        reject(Failure::with_detail(
            Reason::MalformedRequest,
            format!("byte {}: {e}", json_error_offset(body, &e)),
        ))
    })?;
    if path_id.is_some_and(|id| id != env.session_id) {
        return Err(reject(Failure::with_detail(
            Reason::MalformedRequest,
            "path and envelope session ids differ",
        )));
    }
    Ok(env)
}

async fn blocking<F>(f: F) -> Response
where
    F: FnOnce() -> Response + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response())
}

async fn verify(State(d): State<Arc<PeerDaemon>>, body: Bytes) -> Response {
    blocking(move || match envelope(&body, None) {
        Ok(env) => Json(d.handle_verify(&env)).into_response(),
        Err(r) => r,
    })
    .await
}

async fn start(State(d): State<Arc<PeerDaemon>>, Path(id): Path<String>, body: Bytes) -> Response {
    blocking(move || match envelope(&body, Some(&id)) {
        Ok(env) => match d.handle_start(&env) {
            Ok(reply) => Json(reply).into_response(),
            Err(f) => reject(f),
        },
        Err(r) => r,
    })
    .await
}

async fn deliver(State(d): State<Arc<PeerDaemon>>, Path(id): Path<String>, body: Bytes) -> Response {
    blocking(move || match envelope(&body, Some(&id)) {
        Ok(env) => match d.handle_deliver(&env) {
            Ok(()) => StatusCode::NO_CONTENT.into_response(),
            Err(f) => reject(f),
        },
        Err(r) => r,
    })
    .await
}

async fn health(State(d): State<Arc<PeerDaemon>>) -> Response {
    Json(d.health()).into_response()
}

pub fn router(daemon: Arc<PeerDaemon>) -> Router {
    Router::new()
        .route("/sessions/verify", post(verify))
        .route("/sessions/:id/start", post(start))
        .route("/sessions/:id/share", post(deliver))
        .route("/sessions/:id/result", post(deliver))
        .route("/health", get(health))
        .with_state(daemon)
}

pub async fn serve(listener: tokio::net::TcpListener, daemon: Arc<PeerDaemon>) -> std::io::Result<()> {
    axum::serve(listener, router(daemon)).await
}
