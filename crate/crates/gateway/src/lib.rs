//! SMC query gateway.
//!
//! Publishes the queries clients may ask, issues signed grants under a
//! deny-by-default access policy, and turns verified computation requests
//! into SMC sessions among the eligible peers. The gateway only ever
//! handles the reporter's sealed result; it never sees readings or the
//! plaintext aggregate.

pub mod config;
pub mod local;
pub mod policy;
pub mod queue;
pub mod registry;
pub mod server;
pub mod service;

pub use config::{ConfigError, GatewayConfig};
pub use local::LocalGateway;
pub use policy::{AccessPolicy, AccessRule, Context, Selector, TimeWindow};
pub use queue::WorkQueue;
pub use registry::{PeerEntry, Registry};
pub use service::{
    Gateway, GatewaySettings, GatewayTap, GatewayTrust, InformReport, PeerDecision, Prober,
    QueryTemplate,
};
