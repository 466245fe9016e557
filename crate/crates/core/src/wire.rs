//! JSON messages exchanged over HTTP between clients, the gateway and peers.
//!
//! Peer-facing traffic is wrapped in an [`Envelope`]:
//! `{"type", "session_id", "body", "sig_gateway"?, "sig_peer"?}`. The gateway
//! signs `verify` and `start` envelopes; peers sign `share` and `result`
//! envelopes they send to each other. Both signatures cover the canonical
//! envelope with both signature fields removed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{signing_input, CanonicalError};
use crate::clock::Timestamp;
use crate::crypto::{verify, Certificate, Ciphertext, Identity, Signature};
use crate::messages::{AccountabilityEntry, ComputationRequest, Grant, SignedResult};
use crate::profile::PeerProfile;
use crate::query::Query;
use crate::reason::{Failure, Reason};
use crate::smc::{SessionSkeleton, SmcMessage};

/// Request forwarded to each selected peer for re-verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBody {
    pub request: ComputationRequest,
    /// Peer ids of the whole session group, sorted.
    pub group: Vec<String>,
}

/// Result broadcast by the reporter to the other participants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultBody {
    pub result: SignedResult,
    pub ciphertext: Ciphertext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case")]
pub enum Payload {
    Verify(VerifyBody),
    Start(SessionSkeleton),
    Share(SmcMessage),
    Result(ResultBody),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Verify(_) => "verify",
            Payload::Start(_) => "start",
            Payload::Share(_) => "share",
            Payload::Result(_) => "result",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(flatten)]
    pub payload: Payload,
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sig_gateway: Option<Signature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sig_peer: Option<Signature>,
}

impl Envelope {
    fn unsigned(session_id: &str, payload: Payload) -> Self {
        Self {
            payload,
            session_id: session_id.to_owned(),
            sig_gateway: None,
            sig_peer: None,
        }
    }

    pub fn from_gateway(gateway: &Identity, session_id: &str, payload: Payload) -> Self {
        let mut e = Self::unsigned(session_id, payload);
        e.sig_gateway = Some(gateway.sign(&e.signing_input().expect("envelope is canonically encodable")));
        e
    }

    pub fn from_peer(peer: &Identity, session_id: &str, payload: Payload) -> Self {
        let mut e = Self::unsigned(session_id, payload);
        e.sig_peer = Some(peer.sign(&e.signing_input().expect("envelope is canonically encodable")));
        e
    }

    /// Rebuilds a gateway-signed verification envelope, e.g. from a log entry.
    pub fn verify_request(
        session_id: &str,
        body: VerifyBody,
        sig_gateway: Signature,
    ) -> Self {
        let mut e = Self::unsigned(session_id, Payload::Verify(body));
        e.sig_gateway = Some(sig_gateway);
        e
    }

    pub fn signing_input(&self) -> Result<Vec<u8>, CanonicalError> {
        signing_input(self, &["sig_gateway", "sig_peer"])
    }

    pub fn verify_gateway(&self, gateway: &Certificate) -> bool {
        match (&self.sig_gateway, self.signing_input()) {
            (Some(sig), Ok(input)) => verify(sig, gateway, &input),
            _ => false,
        }
    }

    pub fn verify_peer(&self, peer: &Certificate) -> bool {
        match (&self.sig_peer, self.signing_input()) {
            (Some(sig), Ok(input)) => verify(sig, peer, &input),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Accept,
    /// Only the coarse reason class leaves the peer.
    Veto { class: String },
}

impl Decision {
    pub fn veto(reason: Reason) -> Self {
        Decision::Veto {
            class: reason.class().to_owned(),
        }
    }

    pub fn is_accept(&self) -> bool {
        matches!(self, Decision::Accept)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReply {
    pub peer_id: String,
    #[serde(flatten)]
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartReply {
    pub peer_id: String,
    /// Present only in the reporter's reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ciphertext: Option<Ciphertext>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub peer_id: String,
    /// "ok", or "degraded" after an accountability log write failed.
    pub status: String,
    pub log_entries: u64,
    pub log_errors: u64,
    pub open_sessions: usize,
}

/// Peer pairing message, signed by the peer's own key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registration {
    pub profile: PeerProfile,
    pub address: String,
    pub timestamp: Timestamp,
    pub sig_peer: Signature,
}

impl Registration {
    pub fn new(peer: &Identity, profile: PeerProfile, address: &str, timestamp: Timestamp) -> Self {
        let mut r = Registration {
            profile,
            address: address.to_owned(),
            timestamp,
            sig_peer: Signature(Vec::new()),
        };
        r.sig_peer = peer
            .sign_value(&r, &["sig_peer"])
            .expect("registration is canonically encodable");
        r
    }

    pub fn verify(&self) -> bool {
        signing_input(self, &["sig_peer"])
            .is_ok_and(|input| verify(&self.sig_peer, &self.profile.certificate, &input))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationAck {
    pub gateway_certificate: Certificate,
    pub peers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedQuery {
    pub canonical: String,
    pub description: String,
    pub query: Query,
}

impl PublishedQuery {
    pub fn new(query: Query) -> Self {
        Self {
            canonical: query.canonical_string(),
            description: query.describe(),
            query,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Metadata {
    pub queries: Vec<PublishedQuery>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GrantReply {
    Granted { grant: Grant },
    Failed { failure: Failure },
}

/// One NDJSON line of a computation response, or a poll answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ComputationEvent {
    Accepted {
        session_id: String,
    },
    Result {
        session_id: String,
        ciphertext: Ciphertext,
    },
    Failed {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session_id: Option<String>,
        failure: Failure,
    },
}

impl ComputationEvent {
    pub fn is_final(&self) -> bool {
        !matches!(self, ComputationEvent::Accepted { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Stats {
    /// Admitted requests not yet finished, including those in service.
    pub queue_depth: usize,
    pub workers_busy: usize,
    pub capacity: usize,
    pub max_queue_depth: usize,
    pub admitted: u64,
    pub dropped: u64,
    pub completed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntryError {
    #[error("gateway signature does not verify")]
    GatewaySignature,
    #[error("result signature does not verify")]
    PeerSignature,
    #[error("result belongs to session {0:?}")]
    SessionMismatch(String),
    #[error("result present without reporter certificate")]
    MissingReporter,
    #[error("reporter {0:?} is not in the session group")]
    ReporterNotInGroup(String),
}

/// Re-checks the signatures recorded in an accountability entry.
pub fn verify_entry(entry: &AccountabilityEntry, gateway: &Certificate) -> Result<(), EntryError> {
    let env = Envelope::verify_request(
        &entry.session_id,
        VerifyBody {
            request: entry.request.clone(),
            group: entry.group.clone(),
        },
        entry.sig_gateway.clone(),
    );
    if !env.verify_gateway(gateway) {
        return Err(EntryError::GatewaySignature);
    }
    if let Some(result) = &entry.result {
        let reporter = entry.reporter.as_ref().ok_or(EntryError::MissingReporter)?;
        if result.session_id != entry.session_id {
            return Err(EntryError::SessionMismatch(result.session_id.clone()));
        }
        if !entry.group.contains(&reporter.subject) {
            return Err(EntryError::ReporterNotInGroup(reporter.subject.clone()));
        }
        if !result.verify(reporter) {
            return Err(EntryError::PeerSignature);
        }
    }
    Ok(())
}
