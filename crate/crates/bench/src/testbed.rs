//! A complete deployment in one process: certificate authority, gateway,
//! client identity and a set of peers with seeded readings.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use smcgate_core::checks::RequestTrust;
use smcgate_core::label::labels;
use smcgate_core::smc::backend_by_name;
use smcgate_core::{
    parse_predicate, Clock, ComputationRequest, Fixed, Grant, GrantRequest, Identity, Preprocessor,
    Preselector, Query, Timestamp, TrustStore, Validity,
};
use smcgate_gateway::service::Prober;
use smcgate_gateway::{AccessPolicy, AccessRule, Gateway, GatewaySettings, GatewayTrust, LocalGateway};
use smcgate_peer::{
    register, AccountabilityLog, Backoff, InProcessNetwork, LocalPolicy, PeerDaemon, PeerSettings,
    PeerTrust, ReadingStore,
};
use thiserror::Error;

pub const INPUT: &str = "power_consumption";
/// Predicate every member peer satisfies.
pub const PREDICATE: &str = "type = heater ∧ roomtype ∈ [kitchen, meetingroom]";
pub const PURPOSE: &str = "energy analytics";

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error("peer {peer} failed to register: {why}")]
    Register { peer: String, why: String },
    #[error("accountability log: {0}")]
    Log(String),
    #[error("testbed: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct TestbedConfig {
    /// Peers matching [`PREDICATE`].
    pub peers: usize,
    /// Extra peers that do not match it.
    pub bystanders: usize,
    pub queue_capacity: usize,
    pub workers: usize,
    pub peer_timeout: Duration,
    pub session_timeout: Duration,
    /// Seed for the readings.
    pub seed: u64,
    /// Directory for per-peer accountability logs; none keeps no logs.
    pub log_dir: Option<PathBuf>,
    /// Peer-side local policy applied to every peer.
    pub peer_policy: LocalPolicy,
    pub prober: Option<Duration>,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        Self {
            peers: 10,
            bystanders: 0,
            queue_capacity: 100,
            workers: 8,
            peer_timeout: Duration::from_secs(10),
            session_timeout: Duration::from_secs(30),
            seed: 7,
            log_dir: None,
            peer_policy: LocalPolicy {
                max_requests_per_client_per_hour: u32::MAX,
                ..LocalPolicy::default()
            },
            prober: Some(Duration::from_secs(20)),
        }
    }
}

/// The reading history seeded into one peer.
#[derive(Debug, Clone)]
pub struct Seeded {
    pub peer_id: String,
    pub member: bool,
    pub readings: Vec<(Timestamp, Fixed)>,
}

pub struct Testbed {
    pub ca: Identity,
    pub gateway_identity: Identity,
    pub client: Identity,
    pub clock: Arc<dyn Clock>,
    /// What gateway and peers accept for client requests.
    pub trust: RequestTrust,
    pub net: Arc<InProcessNetwork>,
    pub gateway: Arc<Gateway>,
    pub api: LocalGateway,
    pub peers: Vec<Arc<PeerDaemon>>,
    pub seeded: Vec<Seeded>,
    pub query: Query,
    _prober: Option<Prober>,
}

/// The listing-style query: sum over peers of their 6-hour average.
pub fn listing_query() -> Query {
    Query::new(
        parse_predicate(PREDICATE).expect("predicate parses"),
        Preselector::Last6Hours,
        Preprocessor::Average,
        smcgate_core::smc::SUM,
        INPUT,
    )
    .expect("query is valid")
}

fn validity(now: Timestamp) -> Validity {
    Validity::new(now.saturating_sub(86_400), now + 365 * 86_400).expect("validity")
}

/// Readings inside and outside the 6-hour window, with 3 decimals.
fn seed_readings(rng: &mut StdRng, now: Timestamp) -> Vec<(Timestamp, Fixed)> {
    let inside = rng.gen_range(2..8);
    let mut out = Vec::new();
    for i in 0..inside + 2 {
        let age = if i < inside {
            rng.gen_range(60..6 * 3600 - 60)
        } else {
            rng.gen_range(6 * 3600 + 60..12 * 3600)
        };
        out.push((now - age, Fixed::from_milli(rng.gen_range(0..1_000_000))));
    }
    out.sort_by_key(|r| r.0);
    out
}

impl Testbed {
    pub fn launch(config: TestbedConfig, clock: Arc<dyn Clock>) -> Result<Self, LaunchError> {
        if config.peers == 0 || config.queue_capacity == 0 || config.workers == 0 {
            return Err(LaunchError::Invalid("peers, capacity and workers must be positive".into()));
        }
        let now = clock.now();
        let v = validity(now);
        let ca = Identity::self_signed("bench-ca", "", v);
        let gateway_identity = ca.issue("gateway", "", v);
        let client = ca.issue("bench-client", PURPOSE, v);
        let anchors = TrustStore::new([ca.certificate().clone()]).map_err(LaunchError::Invalid)?;
        let requests = RequestTrust {
            client_anchors: anchors.clone(),
            authority_anchors: anchors.clone(),
            authorities: vec![gateway_identity.certificate().clone()],
        };
        let query = listing_query();
        let net = InProcessNetwork::new();
        let gateway = Gateway::new(
            gateway_identity.clone(),
            None,
            GatewaySettings {
                queue_capacity: config.queue_capacity,
                workers: config.workers,
                peer_timeout: config.peer_timeout,
                session_timeout: config.session_timeout,
                queries: vec![query.clone()],
                ..GatewaySettings::default()
            },
            GatewayTrust {
                requests: requests.clone(),
                peer_anchors: anchors.clone(),
            },
            AccessPolicy::new(vec![AccessRule::allow_all()]),
            net.connector_for("gateway"),
            Arc::clone(&clock),
        );
        let api = LocalGateway::new(Arc::clone(&gateway));

        let mut rng = StdRng::seed_from_u64(config.seed);
        let mut peers = Vec::new();
        let mut seeded = Vec::new();
        for i in 0..config.peers + config.bystanders {
            let member = i < config.peers;
            let id = if member { format!("peer-{i:03}") } else { format!("other-{i:03}") };
            let room = match (member, i % 2) {
                (false, _) => "office",
                (true, 0) => "kitchen",
                (true, _) => "meetingroom",
            };
            let mut settings = PeerSettings::new(
                &id,
                &format!("inproc://{id}"),
                labels([("type", "heater"), ("roomtype", room)]),
                &[INPUT],
            );
            settings.policy = config.peer_policy.clone();
            settings.session_timeout = config.session_timeout;
            let readings = seed_readings(&mut rng, now);
            let mut store = ReadingStore::in_memory();
            for &(ts, value) in &readings {
                store
                    .append(INPUT, value, ts)
                    .map_err(|e| LaunchError::Invalid(e.to_string()))?;
            }
            let log = match &config.log_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir).map_err(|e| LaunchError::Log(e.to_string()))?;
                    let path = dir.join(format!("{id}.jsonl"));
                    Some(AccountabilityLog::open(&path).map_err(|e| LaunchError::Log(e.to_string()))?)
                }
                None => None,
            };
            let daemon = Arc::new(PeerDaemon::new(
                ca.issue(&id, "", v),
                settings,
                PeerTrust {
                    requests: requests.clone(),
                    peer_anchors: anchors.clone(),
                    gateway: None,
                },
                store,
                backend_by_name("additive").expect("additive backend"),
                Arc::clone(&clock),
                log,
            ));
            net.attach(Arc::clone(&daemon));
            register(&daemon, &api, Backoff::default()).map_err(|e| LaunchError::Register {
                peer: id.clone(),
                why: e.to_string(),
            })?;
            peers.push(daemon);
            seeded.push(Seeded {
                peer_id: id,
                member,
                readings,
            });
        }
        let prober = config.prober.map(|every| gateway.start_prober(every));
        Ok(Self {
            ca,
            gateway_identity,
            client,
            clock,
            trust: requests,
            net,
            gateway,
            api,
            peers,
            seeded,
            query,
            _prober: prober,
        })
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn member_ids(&self) -> BTreeSet<&str> {
        self.seeded.iter().filter(|s| s.member).map(|s| s.peer_id.as_str()).collect()
    }

    pub fn seeded_by_id(&self) -> BTreeMap<&str, &Seeded> {
        self.seeded.iter().map(|s| (s.peer_id.as_str(), s)).collect()
    }

    /// A signed grant request for the testbed query.
    pub fn grant_request(&self) -> GrantRequest {
        GrantRequest::new(&self.client, [self.query.clone()].into()).expect("grant request")
    }

    /// Obtains a grant for the testbed query through the gateway.
    pub fn grant(&self) -> Result<Grant, smcgate_core::Failure> {
        let (tx, rx) = std::sync::mpsc::channel();
        self.gateway
            .submit_grant(self.grant_request(), move |r| {
                let _ = tx.send(r);
            })?;
        match rx.recv().expect("grant reply") {
            smcgate_core::wire::GrantReply::Granted { grant } => Ok(grant),
            smcgate_core::wire::GrantReply::Failed { failure } => Err(failure),
        }
    }

    pub fn computation_request(&self, grant: &Grant) -> ComputationRequest {
        ComputationRequest::new(&self.client, self.query.clone(), grant.clone(), self.now())
    }
}
