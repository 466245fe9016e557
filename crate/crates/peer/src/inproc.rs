//! An in-memory network of peer daemons.
//!
//! Every call is serialized to JSON and parsed again on the receiving side,
//! just as over HTTP, so the optional transcript holds the exact bytes each
//! party put on the wire. Faults can be injected per address.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use smcgate_core::api::{ApiError, PeerApi, PeerConnector};
use smcgate_core::wire::{Envelope, Health, StartReply, VerifyReply};

use crate::daemon::PeerDaemon;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Calls fail immediately.
    Down,
    /// Calls stall for the given time before being handled.
    Delay(Duration),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireRecord {
    /// Peer id of the sender, or `"gateway"`.
    pub from: String,
    pub to: String,
    /// Call kind (`verify`, `start`, `deliver`, `health`) and direction.
    pub what: String,
    pub bytes: Vec<u8>,
}

#[derive(Default)]
pub struct InProcessNetwork {
    peers: RwLock<HashMap<String, Arc<PeerDaemon>>>,
    faults: RwLock<HashMap<String, Fault>>,
    recording: AtomicBool,
    transcript: Mutex<Vec<WireRecord>>,
}

impl InProcessNetwork {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Adds a daemon under its configured address and wires its connector.
    pub fn attach(self: &Arc<Self>, daemon: Arc<PeerDaemon>) {
        daemon.set_connector(self.connector_for(daemon.id()));
        self.peers
            .write()
            .expect("peers lock")
            .insert(daemon.settings().address.clone(), daemon);
    }

    /// A connector whose traffic is attributed to `from`.
    pub fn connector_for(self: &Arc<Self>, from: &str) -> Arc<dyn PeerConnector> {
        Arc::new(Connector {
            net: Arc::clone(self),
            from: from.to_owned(),
        })
    }

    pub fn daemon(&self, address: &str) -> Option<Arc<PeerDaemon>> {
        self.peers.read().expect("peers lock").get(address).cloned()
    }

    pub fn set_fault(&self, address: &str, fault: Option<Fault>) {
        let mut f = self.faults.write().expect("faults lock");
        match fault {
            Some(x) => f.insert(address.to_owned(), x),
            None => f.remove(address),
        };
    }

    pub fn record(&self, on: bool) {
        self.recording.store(on, Ordering::SeqCst);
    }

    pub fn take_transcript(&self) -> Vec<WireRecord> {
        std::mem::take(&mut *self.transcript.lock().expect("transcript lock"))
    }

    fn log(&self, from: &str, to: &str, what: String, bytes: &[u8]) {
        if self.recording.load(Ordering::Relaxed) {
            self.transcript.lock().expect("transcript lock").push(WireRecord {
                from: from.to_owned(),
                to: to.to_owned(),
                what,
                bytes: bytes.to_vec(),
            });
        }
    }
}

struct Connector {
    net: Arc<InProcessNetwork>,
    from: String,
}

impl PeerConnector for Connector {
    fn connect(&self, address: &str) -> Result<Arc<dyn PeerApi>, ApiError> {
        Ok(Arc::new(Link {
            net: Arc::clone(&self.net),
            from: self.from.clone(),
            address: address.to_owned(),
        }))
    }
}

struct Link {
    net: Arc<InProcessNetwork>,
    from: String,
    address: String,
}

fn reparse<T: Serialize, U: DeserializeOwned>(v: &T) -> Result<(Vec<u8>, U), ApiError> {
    let bytes = serde_json::to_vec(v).expect("message serializes");
    let parsed = serde_json::from_slice(&bytes).map_err(|e| ApiError::malformed(&bytes, &e))?;
    Ok((bytes, parsed))
}

impl Link {
    fn call<Req, Resp>(
        &self,
        what: &str,
        req: &Req,
        f: impl FnOnce(&PeerDaemon, Req) -> Result<Resp, ApiError>,
    ) -> Result<Resp, ApiError>
    where
        Req: Serialize + DeserializeOwned,
        Resp: Serialize + DeserializeOwned,
    {
        let fault = self.net.faults.read().expect("faults lock").get(&self.address).copied();
        match fault {
            Some(Fault::Down) => return Err(ApiError::Transport(format!("{} unreachable", self.address))),
            Some(Fault::Delay(d)) => std::thread::sleep(d),
            None => {}
        }
        let daemon = self
            .net
            .daemon(&self.address)
            .ok_or_else(|| ApiError::Transport(format!("no peer at {}", self.address)))?;
        let (bytes, req) = reparse(req)?;
        self.net.log(&self.from, daemon.id(), format!("{what} request"), &bytes);
        let resp = f(&daemon, req)?;
        let (bytes, resp) = reparse(&resp)?;
        self.net.log(daemon.id(), &self.from, format!("{what} reply"), &bytes);
        Ok(resp)
    }
}

impl PeerApi for Link {
    fn verify(&self, env: &Envelope) -> Result<VerifyReply, ApiError> {
        self.call("verify", env, |d, e| Ok(d.handle_verify(&e)))
    }

    fn start(&self, env: &Envelope) -> Result<StartReply, ApiError> {
        self.call("start", env, |d, e| d.handle_start(&e).map_err(ApiError::Rejected))
    }

    fn deliver(&self, env: &Envelope) -> Result<(), ApiError> {
        self.call("deliver", env, |d, e| d.handle_deliver(&e).map_err(ApiError::Rejected))
    }

    fn health(&self) -> Result<Health, ApiError> {
        self.call("health", &(), |d, ()| Ok(d.health()))
    }
}
