//! Formal validity checks on computation requests, shared by the gateway
//! and the peers that re-verify forwarded requests.

use crate::clock::Timestamp;
use crate::crypto::{verify, Certificate, TrustStore};
use crate::messages::ComputationRequest;
use crate::reason::{Check, Failure, Reason};

/// Trust configuration for authorizing client requests.
///
/// Client certificates and access-authority certificates are anchored
/// separately so the grant authority can live outside the gateway.
#[derive(Debug, Clone, Default)]
pub struct RequestTrust {
    pub client_anchors: TrustStore,
    pub authority_anchors: TrustStore,
    /// Certificates of the access authorities allowed to sign grants.
    pub authorities: Vec<Certificate>,
}

/// A failed check together with the failure notice it produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejected {
    pub check: Check,
    pub failure: Failure,
}

impl Rejected {
    fn new(check: Check, reason: Reason) -> Self {
        Self {
            check,
            failure: Failure::new(reason),
        }
    }

    fn detailed(check: Check, reason: Reason, detail: impl Into<String>) -> Self {
        Self {
            check,
            failure: Failure::with_detail(reason, detail),
        }
    }
}

/// Runs holder, request-signature, grant-window, issuer and query-inclusion
/// checks in that order and reports the first failure.
pub fn check_computation_request(
    r: &ComputationRequest,
    trust: &RequestTrust,
    now: Timestamp,
) -> Result<(), Rejected> {
    if r.grant.holder != r.certificate.fingerprint() {
        return Err(Rejected::new(Check::Holder, Reason::HolderMismatch));
    }
    if let Err(e) = trust.client_anchors.verify(&r.certificate, now) {
        return Err(Rejected::detailed(Check::Holder, Reason::BadCert, e.to_string()));
    }
    if r.certificate.purpose.is_empty() {
        return Err(Rejected::detailed(
            Check::Holder,
            Reason::BadCert,
            "client certificate has no purpose",
        ));
    }
    if !verify(&r.sig_client, &r.certificate, &r.signing_input()) {
        return Err(Rejected::new(Check::RequestSignature, Reason::BadSig));
    }
    if r.grant.not_before > now {
        return Err(Rejected::new(Check::NotBefore, Reason::GrantNotYetValid));
    }
    if now > r.grant.not_after {
        return Err(Rejected::new(Check::NotAfter, Reason::GrantExpired));
    }
    let valid_authorities = trust
        .authorities
        .iter()
        .filter(|c| trust.authority_anchors.is_valid(c, now));
    if !r.grant.signed_by_any(valid_authorities) {
        return Err(Rejected::new(Check::Issuer, Reason::BadIssuer));
    }
    if !r.grant.covers(&r.query) {
        return Err(Rejected::detailed(
            Check::QueryInclusion,
            Reason::QueryNotGranted,
            r.query.canonical_string(),
        ));
    }
    Ok(())
}
