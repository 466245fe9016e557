//! Registered peers and their liveness.

use std::collections::BTreeMap;
use std::sync::RwLock;

use smcgate_core::{PeerProfile, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerEntry {
    pub profile: PeerProfile,
    pub address: String,
    pub last_seen: Timestamp,
}

/// Peer id → profile, address and last successful contact.
#[derive(Debug)]
pub struct Registry {
    peers: RwLock<BTreeMap<String, PeerEntry>>,
    liveness: u64,
}

impl Registry {
    /// A peer counts as live for `liveness` seconds after it was last seen.
    pub fn new(liveness: u64) -> Self {
        Self {
            peers: RwLock::new(BTreeMap::new()),
            liveness,
        }
    }

    /// Inserts or replaces a peer's profile.
    pub fn upsert(&self, profile: PeerProfile, address: String, now: Timestamp) {
        let id = profile.peer_id.clone();
        self.peers.write().expect("registry lock").insert(
            id,
            PeerEntry {
                profile,
                address,
                last_seen: now,
            },
        );
    }

    pub fn mark_seen(&self, peer_id: &str, now: Timestamp) {
        if let Some(e) = self.peers.write().expect("registry lock").get_mut(peer_id) {
            e.last_seen = e.last_seen.max(now);
        }
    }

    pub fn is_live(&self, e: &PeerEntry, now: Timestamp) -> bool {
        now.saturating_sub(e.last_seen) <= self.liveness
    }

    pub fn all(&self) -> Vec<PeerEntry> {
        self.peers.read().expect("registry lock").values().cloned().collect()
    }

    /// Live peers, ordered by peer id.
    pub fn live(&self, now: Timestamp) -> Vec<PeerEntry> {
        self.peers
            .read()
            .expect("registry lock")
            .values()
            .filter(|e| self.is_live(e, now))
            .cloned()
            .collect()
    }

    pub fn live_count(&self, now: Timestamp) -> usize {
        self.peers
            .read()
            .expect("registry lock")
            .values()
            .filter(|e| self.is_live(e, now))
            .count()
    }

    pub fn len(&self) -> usize {
        self.peers.read().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
