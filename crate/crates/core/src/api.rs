//! Transport-neutral service interfaces.
//!
//! Components talk to each other only through these traits, so the same
//! daemon code runs behind HTTP (the `smcgate-net` crate) and wired together
//! in one process (tests and the bench harness).

use std::sync::Arc;

use thiserror::Error;

use crate::messages::{ComputationRequest, GrantRequest};
use crate::reason::Failure;
use crate::wire::{
    ComputationEvent, Envelope, GrantReply, Health, Metadata, Registration, RegistrationAck,
    StartReply, Stats, VerifyReply,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApiError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("malformed response at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("rejected: {0}")]
    Rejected(Failure),
}

impl ApiError {
    /// Parse error for a JSON body, keeping the byte offset of the fault.
    pub fn malformed(body: &[u8], err: &serde_json::Error) -> Self {
        ApiError::Malformed {
            offset: json_error_offset(body, err),
            message: err.to_string(),
        }
    }
}

/// Converts serde_json's line/column into a byte offset into `body`.
pub fn json_error_offset(body: &[u8], err: &serde_json::Error) -> usize {
    let (line, column) = (err.line(), err.column());
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in body.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(body.len());
        }
        offset += l.len() + 1;
    }
    body.len()
}

pub trait GatewayApi: Send + Sync {
    fn metadata(&self) -> Result<Metadata, ApiError>;

    fn request_grant(&self, req: &GrantRequest) -> Result<GrantReply, ApiError>;

    /// Submits a request and blocks until the final event. `on_accept` fires
    /// when the accept notice arrives.
    fn compute(
        &self,
        req: &ComputationRequest,
        on_accept: &mut dyn FnMut(&str),
    ) -> Result<ComputationEvent, ApiError>;

    fn poll(&self, session_id: &str) -> Result<ComputationEvent, ApiError>;

    fn stats(&self) -> Result<Stats, ApiError>;

    fn register(&self, reg: &Registration) -> Result<RegistrationAck, ApiError>;
}

pub trait PeerApi: Send + Sync {
    fn verify(&self, env: &Envelope) -> Result<VerifyReply, ApiError>;

    /// Starts the session; the reporter's reply carries the sealed result.
    fn start(&self, env: &Envelope) -> Result<StartReply, ApiError>;

    /// Delivers a peer-to-peer `share` or `result` envelope.
    fn deliver(&self, env: &Envelope) -> Result<(), ApiError>;

    fn health(&self) -> Result<Health, ApiError>;
}

/// Resolves a peer address to a handle.
pub trait PeerConnector: Send + Sync {
    fn connect(&self, address: &str) -> Result<Arc<dyn PeerApi>, ApiError>;
}
