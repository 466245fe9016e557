//! Client side of the query gateway.
//!
//! [`Client`] drives the whole exchange over any [`GatewayApi`]: it fetches
//! the catalogue, obtains and stores grants, checks every grant locally
//! before keeping or using it, and only accepts a result whose ciphertext
//! opens and whose peer signature verifies.

pub mod config;
pub mod store;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;
use smcgate_core::api::{ApiError, GatewayApi};
use smcgate_core::messages::ResultPayload;
use smcgate_core::wire::{ComputationEvent, GrantReply, Metadata, PublishedQuery};
use smcgate_core::{
    Certificate, Clock, ComputationRequest, Failure, Fixed, Grant, GrantRequest, Identity, Query,
    TrustStore,
};
use thiserror::Error;

pub use config::ClientConfig;
pub use store::GrantStore;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Api(#[from] ApiError),
    #[error("gateway refused: {0}")]
    Failure(Failure),
    #[error("no stored grant for {0}")]
    NoGrant(String),
    #[error("TAMPERED_RESULT: {0}")]
    Tampered(String),
    #[error("grant rejected locally: {0}")]
    BadGrant(String),
    #[error("selection: {0}")]
    Selection(String),
    #[error("grant store: {0}")]
    Store(String),
}

impl ClientError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Failure(_) => 2,
            ClientError::Tampered(_) => 3,
            ClientError::NoGrant(_) => 4,
            _ => 1,
        }
    }
}

/// Which authorities may sign grants and which anchors vouch for peers.
#[derive(Debug, Clone, Default)]
pub struct ClientTrust {
    pub authority_anchors: TrustStore,
    pub authorities: Vec<Certificate>,
    /// Anchors for reporter certificates; empty accepts any reporter whose
    /// signature verifies.
    pub peer_anchors: TrustStore,
}

/// A decrypted and verified result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Outcome {
    pub session_id: String,
    pub value: Fixed,
    pub reporter: String,
    pub query: String,
}

/// Renew once less than this fraction of the lifetime remains.
const RENEW_FRACTION: u64 = 10;

pub struct Client<G: GatewayApi> {
    identity: Identity,
    gateway: G,
    trust: ClientTrust,
    store: GrantStore,
    clock: Arc<dyn Clock>,
}

/// Resolves a selector: a catalogue index, or a unique prefix of a
/// canonical query string.
pub fn select<'a>(catalog: &'a [PublishedQuery], sel: &str) -> Result<&'a PublishedQuery, ClientError> {
    if let Ok(i) = sel.parse::<usize>() {
        return catalog
            .get(i)
            .ok_or_else(|| ClientError::Selection(format!("index {i} out of range ({} queries)", catalog.len())));
    }
    if let Some(exact) = catalog.iter().find(|q| q.canonical == sel) {
        return Ok(exact);
    }
    let hits: Vec<&PublishedQuery> = catalog.iter().filter(|q| q.canonical.starts_with(sel)).collect();
    match hits.as_slice() {
        [one] => Ok(one),
        [] => Err(ClientError::Selection(format!("no query starts with {sel:?}"))),
        many => Err(ClientError::Selection(format!("{sel:?} matches {} queries", many.len()))),
    }
}

impl<G: GatewayApi> Client<G> {
    pub fn new(identity: Identity, gateway: G, trust: ClientTrust, store: GrantStore, clock: Arc<dyn Clock>) -> Self {
        Self {
            identity,
            gateway,
            trust,
            store,
            clock,
        }
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn gateway(&self) -> &G {
        &self.gateway
    }

    pub fn store(&self) -> &GrantStore {
        &self.store
    }

    pub fn metadata(&self) -> Result<Metadata, ClientError> {
        Ok(self.gateway.metadata()?)
    }

    /// The issuer, validity window and coverage checks a peer would apply.
    pub fn check_grant(&self, grant: &Grant, query: &Query) -> Result<(), String> {
        let now = self.clock.now();
        if grant.holder != self.identity.fingerprint() {
            return Err("grant is held by another certificate".into());
        }
        if !grant.valid_at(now) {
            return Err("grant is outside its validity window".into());
        }
        let authorities = self
            .trust
            .authorities
            .iter()
            .filter(|c| self.trust.authority_anchors.is_valid(c, now));
        if !grant.signed_by_any(authorities) {
            return Err("grant is not signed by a trusted authority".into());
        }
        if !grant.covers(query) {
            return Err("grant does not cover the query".into());
        }
        Ok(())
    }

    /// Requests one grant covering all `queries` and stores it after
    /// checking it locally.
    pub fn request_grant(&mut self, queries: &[Query]) -> Result<Grant, ClientError> {
        let set: BTreeSet<Query> = queries.iter().cloned().collect();
        let req = GrantRequest::new(&self.identity, set.clone())
            .map_err(|e| ClientError::Store(e.to_string()))?;
        let grant = match self.gateway.request_grant(&req)? {
            GrantReply::Granted { grant } => grant,
            GrantReply::Failed { failure } => return Err(ClientError::Failure(failure)),
        };
        if grant.queries != set {
            return Err(ClientError::BadGrant("granted queries differ from the request".into()));
        }
        for q in &set {
            self.check_grant(&grant, q).map_err(ClientError::BadGrant)?;
        }
        self.store.put(&grant)?;
        Ok(grant)
    }

    fn needs_renewal(&self, grant: &Grant) -> bool {
        let now = self.clock.now();
        let remaining = grant.not_after.saturating_sub(now);
        remaining * RENEW_FRACTION < grant.lifetime()
    }

    /// A stored grant for `query` that passes the local checks, renewed
    /// first if it is expired or close to expiry. Errors before any network
    /// call when nothing is stored.
    pub fn grant_for(&mut self, query: &Query) -> Result<Grant, ClientError> {
        let stored = self
            .store
            .get(query)
            .cloned()
            .ok_or_else(|| ClientError::NoGrant(query.canonical_string()))?;
        if self.needs_renewal(&stored) {
            let queries: Vec<Query> = stored.queries.iter().cloned().collect();
            return self.request_grant(&queries);
        }
        if let Err(why) = self.check_grant(&stored, query) {
            self.store.remove(query)?;
            return Err(ClientError::BadGrant(why));
        }
        Ok(stored)
    }

    /// Runs `query` and returns the verified plaintext result.
    pub fn compute(&mut self, query: &Query) -> Result<Outcome, ClientError> {
        let grant = self.grant_for(query)?;
        let req = ComputationRequest::new(&self.identity, query.clone(), grant, self.clock.now());
        let mut accepted: Option<String> = None;
        let ev = self
            .gateway
            .compute(&req, &mut |id| accepted = Some(id.to_owned()))?;
        match ev {
            ComputationEvent::Result { session_id, ciphertext } => {
                if accepted.as_ref().is_some_and(|a| *a != session_id) {
                    return Err(ClientError::Tampered("result for a different session".into()));
                }
                let plain = self
                    .identity
                    .decrypt(&ciphertext)
                    .map_err(|e| ClientError::Tampered(e.to_string()))?;
                let payload: ResultPayload = serde_json::from_slice(&plain)
                    .map_err(|e| ClientError::Tampered(format!("result payload: {e}")))?;
                self.verify_payload(&payload, &session_id)?;
                Ok(Outcome {
                    session_id,
                    value: payload.result.value,
                    reporter: payload.reporter.subject,
                    query: query.canonical_string(),
                })
            }
            ComputationEvent::Failed { failure, .. } => Err(ClientError::Failure(failure)),
            ComputationEvent::Accepted { .. } => {
                Err(ClientError::Api(ApiError::Transport("no final event".into())))
            }
        }
    }

    fn verify_payload(&self, p: &ResultPayload, session_id: &str) -> Result<(), ClientError> {
        if p.result.session_id != session_id {
            return Err(ClientError::Tampered("signed session id does not match".into()));
        }
        if !p.result.verify(&p.reporter) {
            return Err(ClientError::Tampered("peer signature does not verify".into()));
        }
        if self.trust.peer_anchors.anchors().next().is_some()
            && !self.trust.peer_anchors.is_valid(&p.reporter, self.clock.now())
        {
            return Err(ClientError::Tampered("reporter certificate is not trusted".into()));
        }
        Ok(())
    }

    /// Repeats [`Client::compute`] at `hz` for `duration`, reporting each
    /// attempt to `each`. Returns the number of successful results.
    pub fn poll(
        &mut self,
        query: &Query,
        hz: f64,
        duration: Duration,
        mut each: impl FnMut(&Result<Outcome, ClientError>),
    ) -> usize {
        let period = Duration::from_secs_f64(1.0 / hz.max(1e-3));
        let start = Instant::now();
        let mut next = start;
        let mut ok = 0;
        while start.elapsed() < duration {
            let r = self.compute(query);
            ok += usize::from(r.is_ok());
            each(&r);
            next += period;
            if let Some(wait) = next.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        ok
    }
}
