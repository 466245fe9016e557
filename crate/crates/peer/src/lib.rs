//! The peer daemon: a sensor platform's agent in the query gateway system.
//!
//! A peer stores its own readings, pairs with a gateway by advertising its
//! labels and inputs, and independently re-verifies every computation
//! request the gateway forwards before contributing anything. Accepted
//! sessions are recorded in an append-only, hash-chained accountability log.

pub mod config;
pub mod daemon;
pub mod inproc;
pub mod log;
pub mod policy;
pub mod register;
pub mod server;
pub mod store;

pub use config::PeerConfig;
pub use daemon::{PeerDaemon, PeerSettings, PeerTrust};
pub use inproc::{Fault, InProcessNetwork, WireRecord};
pub use log::{AccountabilityLog, LineStatus, LogRecord};
pub use policy::{verify_computation_request, LocalPolicy, RateLimiter};
pub use register::{register, Backoff, RegisterError};
pub use store::{preprocess, Reading, ReadingStore, StoreError};
