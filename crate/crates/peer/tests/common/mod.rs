#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use smcgate_core::checks::RequestTrust;
use smcgate_core::label::labels;
use smcgate_core::smc::{backend_by_name, Participant, SessionSkeleton};
use smcgate_core::wire::{Envelope, Payload, VerifyBody};
use smcgate_core::{
    parse_predicate, Clock, ComputationRequest, Fixed, Grant, Identity, ManualClock, Preprocessor,
    Preselector, Query, TrustStore, UnsignedGrant, Validity,
};
use smcgate_peer::{AccountabilityLog, PeerDaemon, PeerSettings, PeerTrust, ReadingStore};

pub const T0: u64 = 1_700_000_000;

pub struct Pki {
    pub ca: Identity,
    pub gateway: Identity,
    pub client: Identity,
    pub clock: Arc<ManualClock>,
}

pub fn validity() -> Validity {
    Validity::new(T0 - 86_400, T0 + 365 * 86_400).unwrap()
}

impl Pki {
    pub fn new() -> Self {
        let ca = Identity::self_signed("ca", "", validity());
        let gateway = ca.issue("gateway", "", validity());
        let client = ca.issue("client", "energy analytics", validity());
        Self {
            ca,
            gateway,
            client,
            clock: Arc::new(ManualClock::new(T0)),
        }
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn trust(&self) -> PeerTrust {
        let anchors = TrustStore::new([self.ca.certificate().clone()]).unwrap();
        PeerTrust {
            requests: RequestTrust {
                client_anchors: anchors.clone(),
                authority_anchors: anchors.clone(),
                authorities: vec![self.gateway.certificate().clone()],
            },
            peer_anchors: anchors,
            gateway: Some(self.gateway.certificate().clone()),
        }
    }

    /// A peer with labels `roomtype=<room>` and one reading of `value`.
    pub fn peer(&self, id: &str, room: &str, value: &str, log: Option<&Path>) -> Arc<PeerDaemon> {
        self.peer_with(id, room, value, log, |_| {})
    }

    pub fn peer_with(
        &self,
        id: &str,
        room: &str,
        value: &str,
        log: Option<&Path>,
        tweak: impl FnOnce(&mut PeerSettings),
    ) -> Arc<PeerDaemon> {
        let mut settings = PeerSettings::new(
            id,
            &format!("inproc://{id}"),
            labels([("roomtype", room), ("type", "heater")]),
            &["power_consumption"],
        );
        tweak(&mut settings);
        let mut store = ReadingStore::in_memory();
        store
            .append("power_consumption", value.parse().unwrap(), T0 - 60)
            .unwrap();
        let log = log.map(|p| AccountabilityLog::open(&p.join(format!("{id}.jsonl"))).unwrap());
        Arc::new(PeerDaemon::new(
            self.ca.issue(id, "", validity()),
            settings,
            self.trust(),
            store,
            backend_by_name("additive").unwrap(),
            self.clock.clone(),
            log,
        ))
    }

    pub fn grant_for(&self, holder: &Identity, queries: &[&Query], not_before: u64, not_after: u64) -> Grant {
        UnsignedGrant {
            queries: queries.iter().map(|q| (*q).clone()).collect::<BTreeSet<_>>(),
            holder: holder.fingerprint(),
            purpose: holder.certificate().purpose.clone(),
            not_before,
            not_after,
        }
        .sign(&self.gateway)
        .unwrap()
    }

    pub fn request(&self, query: &Query) -> ComputationRequest {
        let grant = self.grant_for(&self.client, &[query], T0 - 10, T0 + 3600);
        ComputationRequest::new(&self.client, query.clone(), grant, T0)
    }

    pub fn verify_env(&self, session: &str, request: ComputationRequest, group: &[&str]) -> Envelope {
        Envelope::from_gateway(
            &self.gateway,
            session,
            Payload::Verify(VerifyBody {
                request,
                group: group.iter().map(|s| s.to_string()).collect(),
            }),
        )
    }

    pub fn start_env(&self, session: &str, peers: &[Arc<PeerDaemon>]) -> Envelope {
        let participants = peers
            .iter()
            .map(|p| Participant {
                peer_id: p.id().to_owned(),
                address: p.settings().address.clone(),
                certificate: p.identity().certificate().clone(),
            })
            .collect();
        let skeleton = SessionSkeleton::new(session, "sum", participants).unwrap();
        Envelope::from_gateway(&self.gateway, session, Payload::Start(skeleton))
    }
}

pub fn kitchen_query() -> Query {
    Query::new(
        parse_predicate("roomtype = kitchen").unwrap(),
        Preselector::LastValue,
        Preprocessor::Sum,
        "sum",
        "power_consumption",
    )
    .unwrap()
}

pub fn fixed(s: &str) -> Fixed {
    s.parse().unwrap()
}
