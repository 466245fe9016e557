//! Signed protocol messages exchanged between clients, gateway and peers.
//!
//! Every signature covers the canonical encoding of the message with its own
//! signature field removed (see [`crate::canonical::signing_input`]).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{signing_input, CanonicalError};
use crate::clock::Timestamp;
use crate::crypto::{verify, Certificate, Ciphertext, Fingerprint, Identity, Signature};
use crate::fixed::Fixed;
use crate::query::Query;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MessageError {
    #[error("query set must not be empty")]
    NoQueries,
    #[error("grant window is empty: not_before {0} >= not_after {1}")]
    EmptyWindow(Timestamp, Timestamp),
}

/// Grant fields before the issuer signs them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnsignedGrant {
    pub queries: BTreeSet<Query>,
    pub holder: Fingerprint,
    pub purpose: String,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
}

impl UnsignedGrant {
    pub fn sign(self, issuer: &Identity) -> Result<Grant, MessageError> {
        if self.queries.is_empty() {
            return Err(MessageError::NoQueries);
        }
        if self.not_before >= self.not_after {
            return Err(MessageError::EmptyWindow(self.not_before, self.not_after));
        }
        let sig_issuer = issuer
            .sign_value(&self, &[])
            .expect("grant is canonically encodable");
        Ok(Grant {
            queries: self.queries,
            holder: self.holder,
            purpose: self.purpose,
            not_before: self.not_before,
            not_after: self.not_after,
            sig_issuer,
        })
    }
}

/// An issuer-signed, time-bounded statement binding a query set to a client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGrant")]
pub struct Grant {
    pub queries: BTreeSet<Query>,
    pub holder: Fingerprint,
    pub purpose: String,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
    pub sig_issuer: Signature,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrant {
    queries: BTreeSet<Query>,
    holder: Fingerprint,
    purpose: String,
    not_before: Timestamp,
    not_after: Timestamp,
    sig_issuer: Signature,
}

impl TryFrom<RawGrant> for Grant {
    type Error = MessageError;

    fn try_from(r: RawGrant) -> Result<Self, Self::Error> {
        if r.queries.is_empty() {
            return Err(MessageError::NoQueries);
        }
        if r.not_before >= r.not_after {
            return Err(MessageError::EmptyWindow(r.not_before, r.not_after));
        }
        Ok(Grant {
            queries: r.queries,
            holder: r.holder,
            purpose: r.purpose,
            not_before: r.not_before,
            not_after: r.not_after,
            sig_issuer: r.sig_issuer,
        })
    }
}

impl Grant {
    pub fn signing_input(&self) -> Vec<u8> {
        signing_input(self, &["sig_issuer"]).expect("grant is canonically encodable")
    }

    /// True if any of `authorities` signed this grant. Certificate validity
    /// of the authority is the caller's concern.
    pub fn signed_by_any<'a>(&self, authorities: impl IntoIterator<Item = &'a Certificate>) -> bool {
        let input = self.signing_input();
        authorities
            .into_iter()
            .any(|c| verify(&self.sig_issuer, c, &input))
    }

    pub fn covers(&self, query: &Query) -> bool {
        self.queries
            .iter()
            .any(|q| crate::query::query_matches(q, query))
    }

    pub fn valid_at(&self, now: Timestamp) -> bool {
        self.not_before <= now && now <= self.not_after
    }

    pub fn lifetime(&self) -> u64 {
        self.not_after - self.not_before
    }
}

/// A client's request for a grant over a set of published queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGrantRequest")]
pub struct GrantRequest {
    pub certificate: Certificate,
    pub queries: BTreeSet<Query>,
    pub sig_client: Signature,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrantRequest {
    certificate: Certificate,
    queries: BTreeSet<Query>,
    sig_client: Signature,
}

impl TryFrom<RawGrantRequest> for GrantRequest {
    type Error = MessageError;

    fn try_from(r: RawGrantRequest) -> Result<Self, Self::Error> {
        if r.queries.is_empty() {
            return Err(MessageError::NoQueries);
        }
        Ok(GrantRequest {
            certificate: r.certificate,
            queries: r.queries,
            sig_client: r.sig_client,
        })
    }
}

impl GrantRequest {
    pub fn new(client: &Identity, queries: BTreeSet<Query>) -> Result<Self, MessageError> {
        if queries.is_empty() {
            return Err(MessageError::NoQueries);
        }
        let mut r = GrantRequest {
            certificate: client.certificate().clone(),
            queries,
            sig_client: Signature(Vec::new()),
        };
        r.sig_client = client
            .sign_value(&r, &["sig_client"])
            .expect("grant request is canonically encodable");
        Ok(r)
    }

    pub fn signing_input(&self) -> Vec<u8> {
        signing_input(self, &["sig_client"]).expect("grant request is canonically encodable")
    }
}

/// A client's request to run one granted query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputationRequest {
    pub query: Query,
    pub certificate: Certificate,
    pub grant: Grant,
    pub timestamp: Timestamp,
    pub sig_client: Signature,
}

impl ComputationRequest {
    pub fn new(client: &Identity, query: Query, grant: Grant, timestamp: Timestamp) -> Self {
        let mut r = ComputationRequest {
            query,
            certificate: client.certificate().clone(),
            grant,
            timestamp,
            sig_client: Signature(Vec::new()),
        };
        r.sig_client = client
            .sign_value(&r, &["sig_client"])
            .expect("computation request is canonically encodable");
        r
    }

    pub fn signing_input(&self) -> Vec<u8> {
        signing_input(self, &["sig_client"]).expect("computation request is canonically encodable")
    }
}

/// A result value signed by the reporting peer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignedResult {
    pub session_id: String,
    pub value: Fixed,
    pub sig_peer: Signature,
}

impl SignedResult {
    pub fn new(reporter: &Identity, session_id: &str, value: Fixed) -> Self {
        let mut r = SignedResult {
            session_id: session_id.to_owned(),
            value,
            sig_peer: Signature(Vec::new()),
        };
        r.sig_peer = reporter
            .sign_value(&r, &["sig_peer"])
            .expect("result is canonically encodable");
        r
    }

    pub fn signing_input(&self) -> Result<Vec<u8>, CanonicalError> {
        signing_input(self, &["sig_peer"])
    }

    pub fn verify(&self, reporter: &Certificate) -> bool {
        self.signing_input()
            .is_ok_and(|input| verify(&self.sig_peer, reporter, &input))
    }
}

/// Plaintext inside the result ciphertext: the signed value plus the
/// certificate needed to check it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultPayload {
    pub result: SignedResult,
    pub reporter: Certificate,
}

/// One persisted record of an accepted computation request at a peer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountabilityEntry {
    pub session_id: String,
    pub group: Vec<String>,
    pub request: ComputationRequest,
    /// Gateway signature over the forwarded verification envelope.
    pub sig_gateway: Signature,
    pub result: Option<SignedResult>,
    pub reporter: Option<Certificate>,
    pub encrypted_result: Option<Ciphertext>,
}
