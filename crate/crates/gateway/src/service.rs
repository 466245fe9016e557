//! Grant issuing and computation orchestration.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex, RwLock, Weak};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use smcgate_core::api::{ApiError, PeerApi, PeerConnector};
use smcgate_core::checks::check_computation_request;
use smcgate_core::crypto::verify;
use smcgate_core::smc::{Participant, SessionSkeleton};
use smcgate_core::wire::{
    ComputationEvent, Decision, Envelope, GrantReply, Metadata, Payload, PublishedQuery, Registration,
    RegistrationAck, Stats, VerifyBody,
};
use smcgate_core::{
    build_label_superset, Ciphertext, Clock, ComputationRequest, Failure, GrantRequest, Identity,
    Predicate, Preprocessor, Preselector, Query, Reason, RequestTrust, Timestamp, TrustStore,
    UnsignedGrant,
};

use crate::policy::{AccessPolicy, Context};
use crate::queue::WorkQueue;
use crate::registry::{PeerEntry, Registry};

/// Query shape crossed with every label when enumeration is on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryTemplate {
    pub input: String,
    #[serde(default = "default_protocol")]
    pub protocol: String,
    pub preselector: Preselector,
    pub preprocessor: Preprocessor,
}

fn default_protocol() -> String {
    smcgate_core::smc::SUM.to_owned()
}

#[derive(Debug, Clone)]
pub struct GatewaySettings {
    pub queue_capacity: usize,
    pub workers: usize,
    /// Deadline for all verify replies of one request.
    pub peer_timeout: Duration,
    /// Deadline for the reporter's sealed result after start.
    pub session_timeout: Duration,
    pub grant_lifetime: u64,
    pub min_publishable_group: usize,
    /// Seconds a peer stays live after its last successful contact.
    pub liveness: u64,
    /// Largest tolerated clock difference on peer registrations.
    pub max_registration_age: u64,
    pub queries: Vec<Query>,
    pub enumerate: bool,
    pub templates: Vec<QueryTemplate>,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            queue_capacity: 100,
            workers: 8,
            peer_timeout: Duration::from_secs(10),
            session_timeout: Duration::from_secs(30),
            grant_lifetime: 3600,
            min_publishable_group: 3,
            liveness: 60,
            max_registration_age: 300,
            queries: Vec::new(),
            enumerate: false,
            templates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GatewayTrust {
    pub requests: RequestTrust,
    pub peer_anchors: TrustStore,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerDecision {
    pub peer_id: String,
    pub decision: Decision,
    pub latency: Duration,
}

/// Outcome of informing the group about a request.
#[derive(Debug, Clone)]
pub struct InformReport {
    /// Replies in arrival order; peers that never answered are reported as
    /// timeout vetoes with the full deadline as latency.
    pub decisions: Vec<PeerDecision>,
    pub outcome: Result<(), Failure>,
}

/// Observation hooks used by tests and the bench harness.
pub trait GatewayTap: Send + Sync {
    /// Bytes of every peer reply that reaches the gateway.
    fn inbound(&self, _session_id: &str, _peer_id: &str, _bytes: &[u8]) {}
    fn informed(&self, _session_id: &str, _report: &InformReport) {}
    /// Every event sent to a client.
    fn emitted(&self, _event: &ComputationEvent) {}
}

const RESULT_CACHE: usize = 10_000;

#[derive(Default)]
struct ResultCache {
    events: HashMap<String, ComputationEvent>,
    order: VecDeque<String>,
}

impl ResultCache {
    fn put(&mut self, id: &str, ev: ComputationEvent) {
        if self.events.insert(id.to_owned(), ev).is_none() {
            self.order.push_back(id.to_owned());
            while self.order.len() > RESULT_CACHE {
                if let Some(old) = self.order.pop_front() {
                    self.events.remove(&old);
                }
            }
        }
    }
}

pub struct Gateway {
    identity: Identity,
    authority: Identity,
    settings: GatewaySettings,
    trust: GatewayTrust,
    policy: RwLock<Arc<AccessPolicy>>,
    registry: Registry,
    published: RwLock<Arc<Vec<PublishedQuery>>>,
    connector: Arc<dyn PeerConnector>,
    clock: Arc<dyn Clock>,
    queue: WorkQueue,
    results: Mutex<ResultCache>,
    tap: RwLock<Option<Arc<dyn GatewayTap>>>,
}

fn failed(reason: Reason, detail: impl Into<String>) -> Failure {
    Failure::with_detail(reason, detail)
}

impl Gateway {
    /// `authority` signs grants; without one the gateway identity does.
    pub fn new(
        identity: Identity,
        authority: Option<Identity>,
        settings: GatewaySettings,
        trust: GatewayTrust,
        policy: AccessPolicy,
        connector: Arc<dyn PeerConnector>,
        clock: Arc<dyn Clock>,
    ) -> Arc<Self> {
        let queue = WorkQueue::new(settings.queue_capacity, settings.workers);
        let gw = Arc::new(Self {
            authority: authority.unwrap_or_else(|| identity.clone()),
            identity,
            registry: Registry::new(settings.liveness),
            settings,
            trust,
            policy: RwLock::new(Arc::new(policy)),
            published: RwLock::new(Arc::new(Vec::new())),
            connector,
            clock,
            queue,
            results: Mutex::new(ResultCache::default()),
            tap: RwLock::new(None),
        });
        gw.refresh_queries();
        gw
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn authority(&self) -> &Identity {
        &self.authority
    }

    pub fn settings(&self) -> &GatewaySettings {
        &self.settings
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn set_tap(&self, tap: Option<Arc<dyn GatewayTap>>) {
        *self.tap.write().expect("tap lock") = tap;
    }

    fn tap(&self) -> Option<Arc<dyn GatewayTap>> {
        self.tap.read().expect("tap lock").clone()
    }

    pub fn set_policy(&self, policy: AccessPolicy) {
        *self.policy.write().expect("policy lock") = Arc::new(policy);
    }

    pub fn policy(&self) -> Arc<AccessPolicy> {
        Arc::clone(&self.policy.read().expect("policy lock"))
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn stats(&self) -> Stats {
        self.queue.stats()
    }

    pub fn reset_stats(&self) {
        self.queue.reset_counters();
    }

    pub fn published(&self) -> Arc<Vec<PublishedQuery>> {
        Arc::clone(&self.published.read().expect("published lock"))
    }

    pub fn handle_metadata(&self) -> Metadata {
        Metadata {
            queries: self.published().as_ref().clone(),
        }
    }

    /// Recomputes the published queries from the configuration and the
    /// currently live peers, and swaps them in.
    pub fn refresh_queries(&self) -> Arc<Vec<PublishedQuery>> {
        let live = self.registry.live(self.clock.now());
        let mut candidates: BTreeSet<Query> = self.settings.queries.iter().cloned().collect();
        if self.settings.enumerate {
            for label in build_label_superset(live.iter().map(|e| &e.profile)) {
                let Ok(predicate) = Predicate::eq(label.key(), label.value()) else {
                    continue;
                };
                for t in &self.settings.templates {
                    if let Ok(q) = Query::new(
                        predicate.clone(),
                        t.preselector,
                        t.preprocessor,
                        &t.protocol,
                        &t.input,
                    ) {
                        candidates.insert(q);
                    }
                }
            }
        }
        let mut list: Vec<PublishedQuery> = candidates
            .into_iter()
            .filter(|q| {
                live.iter().filter(|e| e.profile.eligible_for(q)).count() >= self.settings.min_publishable_group
            })
            .map(PublishedQuery::new)
            .collect();
        list.sort_by(|a, b| a.canonical.cmp(&b.canonical));
        let list = Arc::new(list);
        *self.published.write().expect("published lock") = Arc::clone(&list);
        list
    }

    /// Issues a grant for every requested query, or fails as a whole.
    pub fn handle_grant(&self, r: &GrantRequest) -> GrantReply {
        match self.grant(r) {
            Ok(grant) => GrantReply::Granted { grant },
            Err(failure) => GrantReply::Failed { failure },
        }
    }

    fn grant(&self, r: &GrantRequest) -> Result<smcgate_core::Grant, Failure> {
        let now = self.clock.now();
        if let Err(e) = self.trust.requests.client_anchors.verify(&r.certificate, now) {
            return Err(failed(Reason::BadCert, e.to_string()));
        }
        if r.certificate.purpose.is_empty() {
            return Err(failed(Reason::BadCert, "client certificate has no purpose"));
        }
        if !verify(&r.sig_client, &r.certificate, &r.signing_input()) {
            return Err(Failure::new(Reason::BadSig));
        }
        if r.queries.is_empty() {
            return Err(failed(Reason::PolicyDenied, "no queries requested"));
        }
        let ctx = Context {
            now,
            live_peers: self.registry.live_count(now),
        };
        let published = self.published();
        let policy = self.policy();
        for q in &r.queries {
            let listed = published.iter().any(|p| p.query == *q);
            if !listed || !policy.permits(q, &r.certificate, ctx) {
                return Err(failed(Reason::PolicyDenied, q.canonical_string()));
            }
        }
        UnsignedGrant {
            queries: r.queries.clone(),
            holder: r.certificate.fingerprint(),
            purpose: r.certificate.purpose.clone(),
            not_before: now,
            not_after: now + self.settings.grant_lifetime,
        }
        .sign(&self.authority)
        .map_err(|e| failed(Reason::MalformedRequest, e.to_string()))
    }

    /// Queues a grant request; `done` runs on a worker. Fails immediately
    /// with `REQUEST_DROPPED` when the queue is full.
    pub fn submit_grant(
        self: &Arc<Self>,
        r: GrantRequest,
        done: impl FnOnce(GrantReply) + Send + 'static,
    ) -> Result<(), Failure> {
        let gw = Arc::clone(self);
        self.queue
            .try_submit(Box::new(move || done(gw.handle_grant(&r))))
            .map_err(|_| Failure::new(Reason::RequestDropped))
    }

    /// Queues a computation request. `emit` receives the accept notice and
    /// then exactly one final event, or a single failure event.
    pub fn submit_computation(
        self: &Arc<Self>,
        r: ComputationRequest,
        emit: impl FnMut(ComputationEvent) + Send + 'static,
    ) -> Result<(), Failure> {
        let gw = Arc::clone(self);
        let mut emit = emit;
        self.queue
            .try_submit(Box::new(move || gw.handle_computation(&r, &mut emit)))
            .map_err(|_| Failure::new(Reason::RequestDropped))
    }

    fn emit(&self, ev: ComputationEvent, sink: &mut dyn FnMut(ComputationEvent)) {
        if let Some(t) = self.tap() {
            t.emitted(&ev);
        }
        sink(ev);
    }

    /// Runs one computation request to completion on the calling thread.
    pub fn handle_computation(&self, r: &ComputationRequest, sink: &mut dyn FnMut(ComputationEvent)) {
        let now = self.clock.now();
        if let Err(rej) = check_computation_request(r, &self.trust.requests, now) {
            self.emit(
                ComputationEvent::Failed {
                    session_id: None,
                    failure: rej.failure,
                },
                sink,
            );
            return;
        }
        let session_id = uuid::Uuid::new_v4().to_string();
        let accepted = ComputationEvent::Accepted {
            session_id: session_id.clone(),
        };
        self.results.lock().expect("results lock").put(&session_id, accepted.clone());
        self.emit(accepted, sink);
        let last = match self.orchestrate(&session_id, r) {
            Ok(ciphertext) => ComputationEvent::Result {
                session_id: session_id.clone(),
                ciphertext,
            },
            Err(failure) => {
                tracing::info!(session = %session_id, reason = %failure.reason, "computation failed");
                ComputationEvent::Failed {
                    session_id: Some(session_id.clone()),
                    failure,
                }
            }
        };
        self.results.lock().expect("results lock").put(&session_id, last.clone());
        self.emit(last, sink);
    }

    pub fn poll(&self, session_id: &str) -> Option<ComputationEvent> {
        self.results.lock().expect("results lock").events.get(session_id).cloned()
    }

    /// Live registered peers eligible for `query`, ordered by peer id.
    pub fn translate_request(&self, query: &Query, session_id: &str) -> Result<SessionSkeleton, Failure> {
        let group: Vec<Participant> = self
            .registry
            .live(self.clock.now())
            .into_iter()
            .filter(|e| e.profile.eligible_for(query))
            .map(|e| Participant {
                peer_id: e.profile.peer_id,
                address: e.address,
                certificate: e.profile.certificate,
            })
            .collect();
        if group.len() < self.settings.min_publishable_group {
            return Err(failed(
                Reason::GroupTooSmall,
                format!("{} eligible peers, {} needed", group.len(), self.settings.min_publishable_group),
            ));
        }
        SessionSkeleton::new(session_id, query.protocol.clone(), group)
            .map_err(|e| failed(Reason::SessionFailed, e.to_string()))
    }

    fn orchestrate(&self, session_id: &str, r: &ComputationRequest) -> Result<Ciphertext, Failure> {
        let skeleton = self.translate_request(&r.query, session_id)?;
        let group: Vec<String> = skeleton.peer_ids().map(str::to_owned).collect();
        let verify_env = Envelope::from_gateway(
            &self.identity,
            session_id,
            Payload::Verify(VerifyBody {
                request: r.clone(),
                group,
            }),
        );
        let report = self.inform_peers(&skeleton, &verify_env);
        if let Some(t) = self.tap() {
            t.informed(session_id, &report);
        }
        report.outcome?;
        let start_env = Envelope::from_gateway(&self.identity, session_id, Payload::Start(skeleton.clone()));
        self.start_session(&skeleton, &start_env)
    }

    fn link(&self, address: &str) -> Result<Arc<dyn PeerApi>, ApiError> {
        self.connector.connect(address)
    }

    fn observe<T: Serialize>(&self, session_id: &str, peer_id: &str, reply: &T) {
        if let Some(t) = self.tap() {
            let bytes = serde_json::to_vec(reply).expect("reply serializes");
            t.inbound(session_id, peer_id, &bytes);
        }
    }

    /// Sends the signed request to every participant concurrently and
    /// waits for unanimous acceptance. Stops at the first explicit veto.
    pub fn inform_peers(&self, skeleton: &SessionSkeleton, env: &Envelope) -> InformReport {
        let started = Instant::now();
        let deadline = started + self.settings.peer_timeout;
        let (tx, rx) = mpsc::channel();
        for p in &skeleton.participants {
            let tx = tx.clone();
            let link = self.link(&p.address);
            let env = env.clone();
            let peer_id = p.peer_id.clone();
            std::thread::spawn(move || {
                let reply = link.and_then(|l| l.verify(&env));
                let _ = tx.send((peer_id, reply, started.elapsed()));
            });
        }
        drop(tx);
        let mut decisions = Vec::with_capacity(skeleton.participants.len());
        let mut timeouts = 0usize;
        while decisions.len() < skeleton.participants.len() {
            let left = deadline.saturating_duration_since(Instant::now());
            let Ok((peer_id, reply, latency)) = rx.recv_timeout(left) else {
                break;
            };
            let decision = match reply {
                Ok(v) => {
                    self.observe(&env.session_id, &peer_id, &v);
                    self.registry.mark_seen(&peer_id, self.clock.now());
                    if v.peer_id == peer_id {
                        v.decision
                    } else {
                        Decision::veto(Reason::MalformedRequest)
                    }
                }
                Err(ApiError::Rejected(f)) => Decision::veto(f.reason),
                Err(e) => {
                    tracing::debug!(peer = %peer_id, error = %e, "verify call failed");
                    Decision::veto(Reason::Timeout)
                }
            };
            let explicit = match &decision {
                Decision::Accept => None,
                Decision::Veto { class } if class == Reason::Timeout.class() => {
                    timeouts += 1;
                    None
                }
                Decision::Veto { class } => Some(class.clone()),
            };
            decisions.push(PeerDecision {
                peer_id,
                decision,
                latency,
            });
            if let Some(class) = explicit {
                return InformReport {
                    decisions,
                    outcome: Err(failed(Reason::PeerVeto, class)),
                };
            }
        }
        for p in &skeleton.participants {
            if !decisions.iter().any(|d| d.peer_id == p.peer_id) {
                timeouts += 1;
                decisions.push(PeerDecision {
                    peer_id: p.peer_id.clone(),
                    decision: Decision::veto(Reason::Timeout),
                    latency: self.settings.peer_timeout,
                });
            }
        }
        let outcome = if timeouts > 0 {
            Err(failed(Reason::PeerTimeout, format!("{timeouts} peer(s) did not answer")))
        } else {
            Ok(())
        };
        InformReport { decisions, outcome }
    }

    /// Starts the computation at every participant and returns the
    /// reporter's ciphertext untouched.
    fn start_session(&self, skeleton: &SessionSkeleton, env: &Envelope) -> Result<Ciphertext, Failure> {
        let deadline = Instant::now() + self.settings.session_timeout + self.settings.peer_timeout;
        let (tx, rx) = mpsc::channel();
        for p in &skeleton.participants {
            let tx = tx.clone();
            let link = self.link(&p.address);
            let env = env.clone();
            let peer_id = p.peer_id.clone();
            std::thread::spawn(move || {
                let _ = tx.send((peer_id, link.and_then(|l| l.start(&env))));
            });
        }
        drop(tx);
        let reporter = &skeleton.reporter().peer_id;
        let mut answered = 0;
        while answered < skeleton.participants.len() {
            let left = deadline.saturating_duration_since(Instant::now());
            let Ok((peer_id, reply)) = rx.recv_timeout(left) else {
                return Err(failed(Reason::SessionFailed, "timed out waiting for the result"));
            };
            answered += 1;
            match reply {
                Ok(reply) => {
                    self.observe(&env.session_id, &peer_id, &reply);
                    if &peer_id == reporter {
                        return reply
                            .ciphertext
                            .ok_or_else(|| failed(Reason::SessionFailed, "reporter returned no result"));
                    }
                }
                Err(e) => return Err(failed(Reason::SessionFailed, format!("peer {peer_id}: {e}"))),
            }
        }
        Err(failed(Reason::SessionFailed, "reporter returned no result"))
    }

    /// Admits a peer whose certificate chains to the peer anchors.
    pub fn handle_registration(&self, reg: &Registration) -> Result<RegistrationAck, Failure> {
        let now = self.clock.now();
        if let Err(e) = self.trust.peer_anchors.verify(&reg.profile.certificate, now) {
            return Err(failed(Reason::BadCert, e.to_string()));
        }
        if !reg.verify() {
            return Err(Failure::new(Reason::BadSig));
        }
        if let Err(e) = reg.profile.validate() {
            return Err(failed(Reason::MalformedRequest, e.to_string()));
        }
        if reg.address.is_empty() {
            return Err(failed(Reason::MalformedRequest, "empty peer address"));
        }
        if now.abs_diff(reg.timestamp) > self.settings.max_registration_age {
            return Err(Failure::new(Reason::StaleRequest));
        }
        self.registry.upsert(reg.profile.clone(), reg.address.clone(), now);
        self.refresh_queries();
        tracing::info!(peer = %reg.profile.peer_id, address = %reg.address, "peer registered");
        Ok(RegistrationAck {
            gateway_certificate: self.identity.certificate().clone(),
            peers: self.registry.len(),
        })
    }

    /// Health-probes every registered peer concurrently, then refreshes
    /// the published queries. Returns the number of live peers.
    pub fn probe_peers(&self) -> usize {
        let peers: Vec<PeerEntry> = self.registry.all();
        let (tx, rx) = mpsc::channel();
        for e in &peers {
            let tx = tx.clone();
            let link = self.link(&e.address);
            let id = e.profile.peer_id.clone();
            std::thread::spawn(move || {
                let ok = link.and_then(|l| l.health()).is_ok_and(|h| h.peer_id == id);
                let _ = tx.send((id, ok));
            });
        }
        drop(tx);
        let deadline = Instant::now() + self.settings.peer_timeout;
        for _ in 0..peers.len() {
            let left = deadline.saturating_duration_since(Instant::now());
            match rx.recv_timeout(left) {
                Ok((id, true)) => self.registry.mark_seen(&id, self.clock.now()),
                Ok(_) => {}
                Err(_) => break,
            }
        }
        self.refresh_queries();
        self.registry.live_count(self.clock.now())
    }

    /// Probes peers every `interval` until the handle is dropped.
    pub fn start_prober(self: &Arc<Self>, interval: Duration) -> Prober {
        let stop = Arc::new(AtomicBool::new(false));
        let weak: Weak<Self> = Arc::downgrade(self);
        let flag = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            let tick = Duration::from_millis(50);
            let mut next = Instant::now() + interval;
            while !flag.load(Ordering::SeqCst) {
                if Instant::now() >= next {
                    match weak.upgrade() {
                        Some(gw) => {
                            gw.probe_peers();
                        }
                        None => return,
                    }
                    next = Instant::now() + interval;
                }
                std::thread::sleep(tick);
            }
        });
        Prober {
            stop,
            handle: Some(handle),
        }
    }
}

pub struct Prober {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl Drop for Prober {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
