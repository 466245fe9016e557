#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use smcgate_core::api::GatewayApi;
use smcgate_core::checks::RequestTrust;
use smcgate_core::label::labels;
use smcgate_core::smc::backend_by_name;
use smcgate_core::{
    parse_predicate, Clock, Fixed, Identity, ManualClock,
    Preprocessor, Preselector, Query, TrustStore, Validity,
};
use smcgate_client::{Client, ClientTrust, GrantStore};
use smcgate_gateway::{AccessPolicy, AccessRule, Gateway, GatewaySettings, GatewayTrust, LocalGateway};
use smcgate_peer::{InProcessNetwork, PeerDaemon, PeerSettings, PeerTrust, ReadingStore};

pub const T0: u64 = 1_700_000_000;

pub fn validity() -> Validity {
    Validity::new(T0 - 86_400, T0 + 365 * 86_400).unwrap()
}

pub fn query(predicate: &str) -> Query {
    Query::new(
        parse_predicate(predicate).unwrap(),
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

pub struct PeerSpec {
    pub id: String,
    pub labels: Vec<(&'static str, &'static str)>,
    pub inputs: Vec<&'static str>,
    pub value: Fixed,
}

impl PeerSpec {
    pub fn new(id: impl Into<String>, room: &'static str, value: &str) -> Self {
        Self {
            id: id.into(),
            labels: vec![("roomtype", room), ("type", "heater")],
            inputs: vec!["power_consumption"],
            value: fixed(value),
        }
    }
}

pub struct Deployment {
    pub ca: Identity,
    pub gateway_id: Identity,
    pub client: Identity,
    pub clock: Arc<ManualClock>,
    pub net: Arc<InProcessNetwork>,
    pub gw: Arc<Gateway>,
    pub api: LocalGateway,
    pub peers: Vec<Arc<PeerDaemon>>,
}

pub fn allow_all() -> AccessPolicy {
    AccessPolicy::new(vec![AccessRule::allow_all()])
}

pub fn settings(queries: &[&Query]) -> GatewaySettings {
    GatewaySettings {
        queries: queries.iter().map(|q| (*q).clone()).collect(),
        peer_timeout: Duration::from_secs(2),
        session_timeout: Duration::from_secs(5),
        workers: 4,
        ..GatewaySettings::default()
    }
}

impl Deployment {
    pub fn new(specs: Vec<PeerSpec>, settings: GatewaySettings, policy: AccessPolicy) -> Self {
        let ca = Identity::self_signed("ca", "", validity());
        let gateway_id = ca.issue("gateway", "", validity());
        let client = ca.issue("client", "energy analytics", validity());
        let clock = Arc::new(ManualClock::new(T0));
        let anchors = TrustStore::new([ca.certificate().clone()]).unwrap();
        let requests = RequestTrust {
            client_anchors: anchors.clone(),
            authority_anchors: anchors.clone(),
            authorities: vec![gateway_id.certificate().clone()],
        };
        let net = InProcessNetwork::new();
        let gw = Gateway::new(
            gateway_id.clone(),
            None,
            settings,
            GatewayTrust {
                requests: requests.clone(),
                peer_anchors: anchors.clone(),
            },
            policy,
            net.connector_for("gateway"),
            clock.clone(),
        );
        let mut peers = Vec::new();
        for spec in specs {
            let mut s = PeerSettings::new(
                &spec.id,
                &format!("inproc://{}", spec.id),
                labels(spec.labels.iter().copied()),
                &spec.inputs,
            );
            s.session_timeout = Duration::from_secs(5);
            let mut store = ReadingStore::in_memory();
            for input in &spec.inputs {
                store.append(input, spec.value, T0 - 30).unwrap();
            }
            let daemon = Arc::new(PeerDaemon::new(
                ca.issue(&spec.id, "", validity()),
                s,
                PeerTrust {
                    requests: requests.clone(),
                    peer_anchors: anchors.clone(),
                    gateway: None,
                },
                store,
                backend_by_name("additive").unwrap(),
                clock.clone(),
                None,
            ));
            net.attach(Arc::clone(&daemon));
            peers.push(daemon);
        }
        let api = LocalGateway::new(Arc::clone(&gw));
        for p in &peers {
            smcgate_peer::register(p, &api, smcgate_peer::Backoff::default()).unwrap();
        }
        Self {
            ca,
            gateway_id,
            client,
            clock,
            net,
            gw,
            api,
            peers,
        }
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn client<G: GatewayApi>(&self, gateway: G) -> Client<G> {
        Client::new(
            self.client.clone(),
            gateway,
            ClientTrust {
                authority_anchors: TrustStore::new([self.ca.certificate().clone()]).unwrap(),
                authorities: vec![self.gateway_id.certificate().clone()],
                peer_anchors: TrustStore::new([self.ca.certificate().clone()]).unwrap(),
            },
            GrantStore::in_memory(),
            self.clock.clone(),
        )
    }
}

pub fn kitchen_office(kitchens: usize, offices: usize) -> Vec<PeerSpec> {
    let mut v = Vec::new();
    for i in 0..kitchens {
        v.push(PeerSpec::new(format!("k{i:02}"), "kitchen", &format!("{}.250", i + 1)));
    }
    for i in 0..offices {
        v.push(PeerSpec::new(format!("o{i:02}"), "office", "9.000"));
    }
    v
}
