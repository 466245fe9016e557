//! HTTP front end of the gateway.
//!
//! `POST /computations` answers with NDJSON: an `accepted` line as soon as
//! the request passes verification, then one final `result` or `failed`
//! line on the same connection. Requests dropped at admission get a single
//! `failed` event with status 503.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use smcgate_core::api::json_error_offset;
use smcgate_core::wire::{ComputationEvent, GrantReply, Registration};
use smcgate_core::{ComputationRequest, Failure, GrantRequest, Reason};
use tokio::sync::{mpsc, oneshot};

use crate::service::Gateway;

pub fn status_for(reason: Reason) -> StatusCode {
    match reason {
        Reason::RequestDropped => StatusCode::SERVICE_UNAVAILABLE,
        Reason::MalformedRequest => StatusCode::BAD_REQUEST,
        Reason::UnknownSession => StatusCode::NOT_FOUND,
        Reason::BadCert | Reason::BadSig | Reason::PolicyDenied => StatusCode::FORBIDDEN,
        _ => StatusCode::CONFLICT,
    }
}

fn reject(f: Failure) -> Response {
    (status_for(f.reason), Json(f)).into_response()
}

fn body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, Response> {
    serde_json::from_slice(bytes).map_err(|e| {
        reject(Failure::with_detail(
            Reason::MalformedRequest,
            format!("byte {}: {e}", json_error_offset(bytes, &e)),
        ))
    })
}

async fn metadata(State(gw): State<Arc<Gateway>>) -> Response {
    Json(gw.handle_metadata()).into_response()
}

async fn grants(State(gw): State<Arc<Gateway>>, bytes: Bytes) -> Response {
    let req: GrantRequest = match body(&bytes) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let (tx, rx) = oneshot::channel();
    let reply = match gw.submit_grant(req, move |reply| {
        let _ = tx.send(reply);
    }) {
        Ok(()) => match rx.await {
            Ok(reply) => reply,
            Err(_) => return StatusCode::INTERNAL_SERVER_ERROR.into_response(),
        },
        Err(failure) => GrantReply::Failed { failure },
    };
    let status = match &reply {
        GrantReply::Granted { .. } => StatusCode::OK,
        GrantReply::Failed { failure } => status_for(failure.reason),
    };
    (status, Json(reply)).into_response()
}

fn ndjson_line(ev: &ComputationEvent) -> Bytes {
    let mut line = serde_json::to_vec(ev).expect("event serializes");
    line.push(b'\n');
    Bytes::from(line)
}

async fn computations(State(gw): State<Arc<Gateway>>, bytes: Bytes) -> Response {
    let req: ComputationRequest = match body(&bytes) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let (tx, rx) = mpsc::unbounded_channel::<ComputationEvent>();
    if let Err(failure) = gw.submit_computation(req, move |ev| {
        let _ = tx.send(ev);
    }) {
        let ev = ComputationEvent::Failed {
            session_id: None,
            failure,
        };
        return (StatusCode::SERVICE_UNAVAILABLE, Json(ev)).into_response();
    }
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv()
            .await
            .map(|ev| (Ok::<_, Infallible>(ndjson_line(&ev)), rx))
    });
    (
        [(header::CONTENT_TYPE, smcgate_net::NDJSON)],
        Body::from_stream(stream),
    )
        .into_response()
}

async fn poll(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> Response {
    match gw.poll(&id) {
        Some(ev) => Json(ev).into_response(),
        None => reject(Failure::new(Reason::UnknownSession)),
    }
}

async fn stats(State(gw): State<Arc<Gateway>>) -> Response {
    Json(gw.stats()).into_response()
}

async fn register(State(gw): State<Arc<Gateway>>, bytes: Bytes) -> Response {
    let reg: Registration = match body(&bytes) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    match tokio::task::spawn_blocking(move || gw.handle_registration(&reg)).await {
        Ok(Ok(ack)) => Json(ack).into_response(),
        Ok(Err(f)) => reject(f),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

pub fn router(gw: Arc<Gateway>) -> Router {
    Router::new()
        .route("/metadata", get(metadata))
        .route("/grants", post(grants))
        .route("/computations", post(computations))
        .route("/computations/:id", get(poll))
        .route("/stats", get(stats))
        .route("/peers/register", post(register))
        .with_state(gw)
}
