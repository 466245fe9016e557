//! Session handling for one peer.
//!
//! A session moves through three steps, each driven by the gateway or by
//! other peers:
//!
//! 1. `verify`: the forwarded request is re-checked and, on accept, the
//!    peer's contribution is computed and parked under the session id.
//! 2. `start`: the gateway announces the final group; the peer creates its
//!    backend party and sends its first-round messages. The reporter blocks
//!    until the result is reconstructed, then signs, seals, logs and returns
//!    it.
//! 3. `deliver`: backend messages and the reporter's result broadcast.
//!
//! Session state is guarded per session; locks are never held while sending.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use smcgate_core::api::{ApiError, PeerApi, PeerConnector};
use smcgate_core::checks::{Rejected, RequestTrust};
use smcgate_core::smc::{ComputationResult, Party, SessionSkeleton, SmcBackend, SmcMessage};
use smcgate_core::wire::{
    Decision, Envelope, Health, Payload, Registration, ResultBody, StartReply, VerifyReply,
};
use smcgate_core::{
    AccountabilityEntry, Certificate, Check, Clock, ComputationRequest, Failure, Fixed, Identity,
    LabelSet, PeerProfile, Reason, Signature, Timestamp, TrustStore,
};

use crate::log::AccountabilityLog;
use crate::policy::{verify_computation_request, LocalPolicy, RateLimiter};
use crate::store::{preprocess, ReadingStore, StoreError};

#[derive(Debug, Clone)]
pub struct PeerSettings {
    pub peer_id: String,
    /// Address other parties use to reach this peer.
    pub address: String,
    pub labels: LabelSet,
    pub inputs: BTreeSet<String>,
    pub protocols: BTreeSet<String>,
    pub policy: LocalPolicy,
    /// How long the reporter waits for the backend to finish.
    pub session_timeout: Duration,
    /// Verified sessions that never start are dropped after this many seconds.
    pub pending_ttl: u64,
}

impl PeerSettings {
    pub fn new(peer_id: &str, address: &str, labels: LabelSet, inputs: &[&str]) -> Self {
        Self {
            peer_id: peer_id.to_owned(),
            address: address.to_owned(),
            labels,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            protocols: [smcgate_core::smc::SUM.to_owned()].into(),
            policy: LocalPolicy::default(),
            session_timeout: Duration::from_secs(10),
            pending_ttl: 600,
        }
    }
}

/// Trust configuration of a peer.
#[derive(Debug, Clone)]
pub struct PeerTrust {
    pub requests: RequestTrust,
    /// Anchors for the certificates of fellow peers.
    pub peer_anchors: TrustStore,
    /// Gateway certificate; pinned at pairing time if not configured.
    pub gateway: Option<Certificate>,
}

struct Session {
    request: ComputationRequest,
    group: Vec<String>,
    sig_gateway: Signature,
    contribution: Fixed,
    created: Timestamp,
    skeleton: Option<SessionSkeleton>,
    party: Option<Box<dyn Party>>,
    early: Vec<Envelope>,
    failed: Option<String>,
}

impl Session {
    fn output(&self) -> Option<Fixed> {
        self.party.as_ref().and_then(|p| p.output())
    }
}

struct Slot {
    state: Mutex<Session>,
    changed: Condvar,
}

pub struct PeerDaemon {
    identity: Identity,
    settings: PeerSettings,
    requests: RequestTrust,
    peer_anchors: TrustStore,
    gateway: RwLock<Option<Certificate>>,
    gateway_configured: bool,
    store: Mutex<ReadingStore>,
    limiter: RateLimiter,
    backend: Box<dyn SmcBackend>,
    connector: RwLock<Option<Arc<dyn PeerConnector>>>,
    clock: Arc<dyn Clock>,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
    log: Option<AccountabilityLog>,
    log_entries: AtomicU64,
    log_errors: AtomicU64,
}

fn failure(reason: Reason, detail: impl Into<String>) -> Failure {
    Failure::with_detail(reason, detail)
}

fn rejected(check: Check, reason: Reason) -> Rejected {
    Rejected {
        check,
        failure: Failure::new(reason),
    }
}

impl PeerDaemon {
    pub fn new(
        identity: Identity,
        settings: PeerSettings,
        trust: PeerTrust,
        store: ReadingStore,
        backend: Box<dyn SmcBackend>,
        clock: Arc<dyn Clock>,
        log: Option<AccountabilityLog>,
    ) -> Self {
        let log_entries = log.as_ref().map_or(0, |l| l.len());
        Self {
            identity,
            settings,
            requests: trust.requests,
            peer_anchors: trust.peer_anchors,
            gateway_configured: trust.gateway.is_some(),
            gateway: RwLock::new(trust.gateway),
            store: Mutex::new(store),
            limiter: RateLimiter::default(),
            backend,
            connector: RwLock::new(None),
            clock,
            sessions: Mutex::new(HashMap::new()),
            log,
            log_entries: AtomicU64::new(log_entries),
            log_errors: AtomicU64::new(0),
        }
    }

    /// Sets how this peer reaches other peers. Must be called before the
    /// first session starts.
    pub fn set_connector(&self, connector: Arc<dyn PeerConnector>) {
        *self.connector.write().expect("connector lock") = Some(connector);
    }

    pub fn id(&self) -> &str {
        &self.settings.peer_id
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn settings(&self) -> &PeerSettings {
        &self.settings
    }

    pub fn log(&self) -> Option<&AccountabilityLog> {
        self.log.as_ref()
    }

    pub fn gateway_certificate(&self) -> Option<Certificate> {
        self.gateway.read().expect("gateway lock").clone()
    }

    pub fn profile(&self) -> PeerProfile {
        PeerProfile {
            peer_id: self.settings.peer_id.clone(),
            certificate: self.identity.certificate().clone(),
            labels: self.settings.labels.clone(),
            inputs: self.settings.inputs.clone(),
            protocols: self
                .settings
                .protocols
                .iter()
                .filter(|p| self.backend.supports(p))
                .cloned()
                .collect(),
        }
    }

    pub fn registration(&self) -> Registration {
        Registration::new(
            &self.identity,
            self.profile(),
            &self.settings.address,
            self.clock.now(),
        )
    }

    /// Pins the gateway certificate returned at pairing. A configured
    /// certificate must match exactly.
    pub fn pin_gateway(&self, cert: Certificate) -> Result<(), String> {
        let mut g = self.gateway.write().expect("gateway lock");
        match &*g {
            Some(existing) if self.gateway_configured && *existing != cert => Err(format!(
                "gateway presented certificate {} but {} is configured",
                cert.fingerprint(),
                existing.fingerprint()
            )),
            _ => {
                *g = Some(cert);
                Ok(())
            }
        }
    }

    pub fn ingest(&self, input: &str, value: Fixed, timestamp: Timestamp) -> Result<(), StoreError> {
        self.store.lock().expect("store lock").append(input, value, timestamp)
    }

    /// Computes this peer's contribution for `request` from local readings.
    pub fn contribution(&self, request: &ComputationRequest, now: Timestamp) -> Result<Fixed, StoreError> {
        let mut store = self.store.lock().expect("store lock");
        store.refresh()?;
        store.prune(now);
        let q = &request.query;
        let series = store.preselect(&q.input, q.preselector, now)?;
        preprocess(&series, q.preprocessor)
    }

    /// The full verification decision with its exact reason, without
    /// registering a session.
    pub fn evaluate(&self, env: &Envelope) -> Result<Fixed, Rejected> {
        let gateway = self.gateway_certificate();
        if !gateway.as_ref().is_some_and(|g| env.verify_gateway(g)) {
            return Err(rejected(Check::GatewaySignature, Reason::BadGatewaySig));
        }
        let Payload::Verify(body) = &env.payload else {
            return Err(rejected(Check::GatewaySignature, Reason::MalformedRequest));
        };
        let now = self.clock.now();
        let r = &body.request;
        verify_computation_request(
            r,
            &body.group,
            now,
            &self.requests,
            &self.settings.policy,
            &self.limiter,
        )?;
        let q = &r.query;
        let eligible = body.group.contains(&self.settings.peer_id)
            && self.profile().eligible_for(q);
        if !eligible {
            return Err(rejected(Check::Eligibility, Reason::NotEligible));
        }
        self.contribution(r, now)
            .map_err(|e| Rejected {
                check: Check::Eligibility,
                failure: failure(Reason::NoData, e.to_string()),
            })
    }

    fn gc(&self, now: Timestamp) {
        let ttl = self.settings.pending_ttl;
        self.sessions.lock().expect("sessions lock").retain(|_, slot| {
            slot.state
                .lock()
                .map(|s| s.created + ttl > now)
                .unwrap_or(false)
        });
    }

    pub fn handle_verify(&self, env: &Envelope) -> VerifyReply {
        let now = self.clock.now();
        self.gc(now);
        let decision = match self.evaluate(env) {
            Err(r) => {
                tracing::info!(session = %env.session_id, reason = %r.failure, "veto");
                Decision::veto(r.failure.reason)
            }
            Ok(contribution) => {
                let Payload::Verify(body) = &env.payload else {
                    unreachable!("evaluate accepts only verify envelopes")
                };
                let session = Session {
                    request: body.request.clone(),
                    group: body.group.clone(),
                    sig_gateway: env.sig_gateway.clone().expect("checked by evaluate"),
                    contribution,
                    created: now,
                    skeleton: None,
                    party: None,
                    early: Vec::new(),
                    failed: None,
                };
                let mut sessions = self.sessions.lock().expect("sessions lock");
                if sessions.contains_key(&env.session_id) {
                    Decision::veto(Reason::MalformedRequest)
                } else {
                    sessions.insert(
                        env.session_id.clone(),
                        Arc::new(Slot {
                            state: Mutex::new(session),
                            changed: Condvar::new(),
                        }),
                    );
                    Decision::Accept
                }
            }
        };
        VerifyReply {
            peer_id: self.settings.peer_id.clone(),
            decision,
        }
    }

    fn slot(&self, session_id: &str) -> Result<Arc<Slot>, Failure> {
        self.sessions
            .lock()
            .expect("sessions lock")
            .get(session_id)
            .cloned()
            .ok_or_else(|| Failure::new(Reason::UnknownSession))
    }

    fn remove(&self, session_id: &str) {
        self.sessions.lock().expect("sessions lock").remove(session_id);
    }

    fn connector(&self) -> Result<Arc<dyn PeerConnector>, Failure> {
        self.connector
            .read()
            .expect("connector lock")
            .clone()
            .ok_or_else(|| failure(Reason::SessionFailed, "no peer connector configured"))
    }

    /// Signs and sends backend messages. Returns the first unreachable peer.
    fn send(&self, skeleton: &SessionSkeleton, msgs: Vec<SmcMessage>) -> Result<(), Failure> {
        if msgs.is_empty() {
            return Ok(());
        }
        let connector = self.connector()?;
        for msg in msgs {
            let to = msg.to.clone();
            let fail = |why: String| failure(Reason::SessionFailed, format!("participant {to:?} failed: {why}"));
            let addr = skeleton
                .participant(&to)
                .map(|p| p.address.clone())
                .ok_or_else(|| fail("not in session".into()))?;
            let env = Envelope::from_peer(&self.identity, &skeleton.session_id, Payload::Share(msg));
            connector
                .connect(&addr)
                .and_then(|peer| peer.deliver(&env))
                .map_err(|e| fail(e.to_string()))?;
        }
        Ok(())
    }

    fn fail(&self, slot: &Slot, why: &Failure) {
        let mut s = slot.state.lock().expect("session lock");
        if s.failed.is_none() {
            s.failed = Some(why.to_string());
        }
        slot.changed.notify_all();
    }

    fn check_skeleton(&self, s: &Session, skeleton: &SessionSkeleton, now: Timestamp) -> Result<(), Failure> {
        let ids: BTreeSet<&str> = skeleton.peer_ids().collect();
        let group: BTreeSet<&str> = s.group.iter().map(String::as_str).collect();
        if ids != group {
            return Err(failure(Reason::MalformedRequest, "start group differs from verified group"));
        }
        if skeleton.protocol != s.request.query.protocol {
            return Err(failure(Reason::MalformedRequest, "protocol differs from the query"));
        }
        for p in &skeleton.participants {
            if p.certificate.subject != p.peer_id {
                return Err(failure(Reason::BadCert, format!("certificate subject for {:?}", p.peer_id)));
            }
            if let Err(e) = self.peer_anchors.verify(&p.certificate, now) {
                return Err(failure(Reason::BadCert, format!("{}: {e}", p.peer_id)));
            }
        }
        Ok(())
    }

    /// Feeds one peer message into a started session.
    fn receive_share(s: &mut Session, env: &Envelope) -> Result<Vec<SmcMessage>, Failure> {
        let Payload::Share(msg) = &env.payload else {
            return Err(Failure::new(Reason::MalformedRequest));
        };
        let skeleton = s.skeleton.as_ref().expect("session started");
        let sender = skeleton
            .participant(&msg.from)
            .ok_or_else(|| failure(Reason::MalformedRequest, "sender not in session"))?;
        if !env.verify_peer(&sender.certificate) {
            return Err(failure(Reason::BadSig, format!("share from {:?}", msg.from)));
        }
        let party = s.party.as_mut().expect("session started");
        party
            .receive(msg.clone())
            .map_err(|e| failure(Reason::SessionFailed, e.to_string()))
    }

    pub fn handle_start(&self, env: &Envelope) -> Result<StartReply, Failure> {
        let gateway = self.gateway_certificate();
        if !gateway.as_ref().is_some_and(|g| env.verify_gateway(g)) {
            return Err(Failure::new(Reason::BadGatewaySig));
        }
        let Payload::Start(skeleton) = &env.payload else {
            return Err(Failure::new(Reason::MalformedRequest));
        };
        if skeleton.session_id != env.session_id {
            return Err(failure(Reason::MalformedRequest, "session id mismatch"));
        }
        let slot = self.slot(&env.session_id)?;
        let now = self.clock.now();
        let outgoing = {
            let mut s = slot.state.lock().expect("session lock");
            if s.skeleton.is_some() {
                return Err(failure(Reason::MalformedRequest, "session already started"));
            }
            self.check_skeleton(&s, skeleton, now)?;
            let mut party = self
                .backend
                .party(skeleton, &self.settings.peer_id, s.contribution)
                .map_err(|e| failure(Reason::SessionFailed, e.to_string()))?;
            let mut out = party
                .start()
                .map_err(|e| failure(Reason::SessionFailed, e.to_string()))?;
            s.skeleton = Some(skeleton.clone());
            s.party = Some(party);
            for early in std::mem::take(&mut s.early) {
                match Self::receive_share(&mut s, &early) {
                    Ok(more) => out.extend(more),
                    Err(f) => {
                        s.failed = Some(f.to_string());
                        slot.changed.notify_all();
                        return Err(f);
                    }
                }
            }
            slot.changed.notify_all();
            out
        };
        if let Err(f) = self.send(skeleton, outgoing) {
            self.fail(&slot, &f);
            return Err(f);
        }
        if skeleton.reporter().peer_id != self.settings.peer_id {
            return Ok(StartReply {
                peer_id: self.settings.peer_id.clone(),
                ciphertext: None,
            });
        }
        self.report(&env.session_id, &slot, skeleton)
    }

    /// Reporter side: wait for the value, seal it for the client, log it and
    /// broadcast it to the group.
    fn report(&self, session_id: &str, slot: &Slot, skeleton: &SessionSkeleton) -> Result<StartReply, Failure> {
        let deadline = Instant::now() + self.settings.session_timeout;
        let mut s = slot.state.lock().expect("session lock");
        let value = loop {
            if let Some(why) = &s.failed {
                let f = failure(Reason::SessionFailed, why.clone());
                drop(s);
                self.remove(session_id);
                return Err(f);
            }
            if let Some(v) = s.output() {
                break v;
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                drop(s);
                self.remove(session_id);
                return Err(failure(Reason::SessionFailed, "timed out waiting for peers"));
            }
            s = slot.changed.wait_timeout(s, left).expect("session lock").0;
        };
        let sealed = ComputationResult::seal(value, session_id, &self.identity, &s.request.certificate)
            .map_err(|e| failure(Reason::SessionFailed, e.to_string()))?;
        let entry = AccountabilityEntry {
            session_id: session_id.to_owned(),
            group: s.group.clone(),
            request: s.request.clone(),
            sig_gateway: s.sig_gateway.clone(),
            result: Some(sealed.signed()),
            reporter: Some(self.identity.certificate().clone()),
            encrypted_result: Some(sealed.ciphertext.clone()),
        };
        drop(s);
        self.remove(session_id);
        self.record(entry);
        self.broadcast(skeleton, &sealed);
        Ok(StartReply {
            peer_id: self.settings.peer_id.clone(),
            ciphertext: Some(sealed.ciphertext),
        })
    }

    fn broadcast(&self, skeleton: &SessionSkeleton, sealed: &ComputationResult) {
        let Ok(connector) = self.connector() else {
            return;
        };
        let env = Envelope::from_peer(
            &self.identity,
            &skeleton.session_id,
            Payload::Result(ResultBody {
                result: sealed.signed(),
                ciphertext: sealed.ciphertext.clone(),
            }),
        );
        for p in skeleton.participants.iter().skip(1) {
            if let Err(e) = connector.connect(&p.address).and_then(|peer| peer.deliver(&env)) {
                tracing::warn!(peer = %p.peer_id, error = %e, "result broadcast failed");
            }
        }
    }

    /// Appends to the accountability log. A failed write degrades health
    /// but never fails the session.
    fn record(&self, entry: AccountabilityEntry) {
        let Some(log) = &self.log else {
            return;
        };
        match log.append(entry) {
            Ok(_) => {
                self.log_entries.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => {
                self.log_errors.fetch_add(1, Ordering::Relaxed);
                tracing::error!(error = %e, "accountability log write failed");
            }
        }
    }

    pub fn handle_deliver(&self, env: &Envelope) -> Result<(), Failure> {
        match &env.payload {
            Payload::Share(msg) => {
                if msg.to != self.settings.peer_id {
                    return Err(failure(Reason::MalformedRequest, "share addressed to another peer"));
                }
                let slot = self.slot(&env.session_id)?;
                let (skeleton, outgoing, result) = {
                    let mut s = slot.state.lock().expect("session lock");
                    if s.skeleton.is_none() {
                        s.early.push(env.clone());
                        return Ok(());
                    }
                    let r = Self::receive_share(&mut s, env);
                    if let Err(f) = &r {
                        s.failed = Some(f.to_string());
                    }
                    slot.changed.notify_all();
                    (s.skeleton.clone().expect("started"), r.as_ref().ok().cloned(), r)
                };
                result?;
                if let Err(f) = self.send(&skeleton, outgoing.unwrap_or_default()) {
                    self.fail(&slot, &f);
                    return Err(f);
                }
                Ok(())
            }
            Payload::Result(body) => {
                let slot = self.slot(&env.session_id)?;
                let entry = {
                    let s = slot.state.lock().expect("session lock");
                    let skeleton = s
                        .skeleton
                        .as_ref()
                        .ok_or_else(|| failure(Reason::MalformedRequest, "result before start"))?;
                    let reporter = &skeleton.reporter().certificate;
                    if !env.verify_peer(reporter) || !body.result.verify(reporter) {
                        return Err(failure(Reason::BadSig, "result not signed by the reporter"));
                    }
                    if body.result.session_id != env.session_id {
                        return Err(failure(Reason::MalformedRequest, "result for another session"));
                    }
                    AccountabilityEntry {
                        session_id: env.session_id.clone(),
                        group: s.group.clone(),
                        request: s.request.clone(),
                        sig_gateway: s.sig_gateway.clone(),
                        result: Some(body.result.clone()),
                        reporter: Some(reporter.clone()),
                        encrypted_result: Some(body.ciphertext.clone()),
                    }
                };
                self.remove(&env.session_id);
                self.record(entry);
                Ok(())
            }
            _ => Err(failure(Reason::MalformedRequest, "expected share or result")),
        }
    }

    pub fn health(&self) -> Health {
        let errors = self.log_errors.load(Ordering::Relaxed);
        Health {
            peer_id: self.settings.peer_id.clone(),
            status: if errors == 0 { "ok" } else { "degraded" }.into(),
            log_entries: self.log_entries.load(Ordering::Relaxed),
            log_errors: errors,
            open_sessions: self.sessions.lock().expect("sessions lock").len(),
        }
    }
}

impl PeerApi for PeerDaemon {
    fn verify(&self, env: &Envelope) -> Result<VerifyReply, ApiError> {
        Ok(self.handle_verify(env))
    }

    fn start(&self, env: &Envelope) -> Result<StartReply, ApiError> {
        self.handle_start(env).map_err(ApiError::Rejected)
    }

    fn deliver(&self, env: &Envelope) -> Result<(), ApiError> {
        self.handle_deliver(env).map_err(ApiError::Rejected)
    }

    fn health(&self) -> Result<Health, ApiError> {
        Ok(PeerDaemon::health(self))
    }
}
