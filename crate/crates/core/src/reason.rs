//! Machine-readable reason codes for failures and vetoes.

use std::fmt;

use serde::{Deserialize, Serialize};

/// The individual verification checks, in the order they are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Grant path: client certificate valid under the client trust anchors.
    GrantCertificate,
    /// Grant path: grant request signature by the enclosed certificate.
    GrantSignature,
    /// Grant path: access policy permits every requested query.
    GrantPolicy,
    /// Computation path: grant holder is the requesting certificate, which is valid.
    Holder,
    /// Computation path: request signature by the requesting certificate.
    RequestSignature,
    /// Computation path: `grant.not_before <= now`.
    NotBefore,
    /// Computation path: `now <= grant.not_after`.
    NotAfter,
    /// Computation path: grant signed by a configured access authority.
    Issuer,
    /// Computation path: requested query is one of the granted queries.
    QueryInclusion,
    /// Peer-side: forwarded request carries a valid gateway signature.
    GatewaySignature,
    /// Peer-side local policy.
    LocalPolicy,
    /// Peer-side: labels, inputs, protocol and data let this peer take part.
    Eligibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    BadCert,
    BadSig,
    PolicyDenied,
    HolderMismatch,
    GrantNotYetValid,
    GrantExpired,
    BadIssuer,
    QueryNotGranted,
    ClientNotAllowed,
    PurposeNotAllowed,
    GroupTooSmall,
    StaleRequest,
    RateLimited,
    BadGatewaySig,
    NotEligible,
    NoData,
    Timeout,
    RequestDropped,
    PeerVeto,
    PeerTimeout,
    SessionFailed,
    MalformedRequest,
    UnknownSession,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::BadCert => "BAD_CERT",
            Reason::BadSig => "BAD_SIG",
            Reason::PolicyDenied => "POLICY_DENIED",
            Reason::HolderMismatch => "HOLDER_MISMATCH",
            Reason::GrantNotYetValid => "GRANT_NOT_YET_VALID",
            Reason::GrantExpired => "GRANT_EXPIRED",
            Reason::BadIssuer => "BAD_ISSUER",
            Reason::QueryNotGranted => "QUERY_NOT_GRANTED",
            Reason::ClientNotAllowed => "CLIENT_NOT_ALLOWED",
            Reason::PurposeNotAllowed => "PURPOSE_NOT_ALLOWED",
            Reason::GroupTooSmall => "GROUP_TOO_SMALL",
            Reason::StaleRequest => "STALE_REQUEST",
            Reason::RateLimited => "RATE_LIMITED",
            Reason::BadGatewaySig => "BAD_GATEWAY_SIG",
            Reason::NotEligible => "NOT_ELIGIBLE",
            Reason::NoData => "NO_DATA",
            Reason::Timeout => "TIMEOUT",
            Reason::RequestDropped => "REQUEST_DROPPED",
            Reason::PeerVeto => "PEER_VETO",
            Reason::PeerTimeout => "PEER_TIMEOUT",
            Reason::SessionFailed => "SESSION_FAILED",
            Reason::MalformedRequest => "MALFORMED_REQUEST",
            Reason::UnknownSession => "UNKNOWN_SESSION",
        }
    }

    /// Coarse class reported upstream when a peer vetoes.
    pub fn class(self) -> &'static str {
        match self {
            Reason::BadGatewaySig
            | Reason::HolderMismatch
            | Reason::BadCert
            | Reason::BadSig
            | Reason::GrantNotYetValid
            | Reason::GrantExpired
            | Reason::BadIssuer
            | Reason::QueryNotGranted => "authorization",
            Reason::ClientNotAllowed
            | Reason::PurposeNotAllowed
            | Reason::GroupTooSmall
            | Reason::StaleRequest
            | Reason::RateLimited => "local_policy",
            Reason::NotEligible | Reason::NoData => "availability",
            Reason::Timeout | Reason::PeerTimeout => "timeout",
            _ => "other",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A failure notice: reason code plus optional detail (e.g. the denied query).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub reason: Reason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Failure {
    pub fn new(reason: Reason) -> Self {
        Self {
            reason,
            detail: None,
        }
    }

    pub fn with_detail(reason: Reason, detail: impl Into<String>) -> Self {
        Self {
            reason,
            detail: Some(detail.into()),
        }
    }
}

impl From<Reason> for Failure {
    fn from(r: Reason) -> Self {
        Failure::new(r)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.detail {
            Some(d) => write!(f, "{}: {d}", self.reason),
            None => write!(f, "{}", self.reason),
        }
    }
}

impl std::error::Error for Failure {}
