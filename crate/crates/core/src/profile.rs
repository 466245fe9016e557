use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::Certificate;
use crate::label::{Label, LabelSet};
use crate::query::Query;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("peer id must be non-empty")]
    EmptyId,
    #[error("peer must advertise at least one label")]
    NoLabels,
    #[error("peer must advertise at least one input")]
    NoInputs,
    #[error("certificate subject {subject:?} does not match peer id {peer_id:?}")]
    SubjectMismatch { peer_id: String, subject: String },
}

/// Metadata a peer advertises when pairing with the gateway.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerProfile {
    pub peer_id: String,
    pub certificate: Certificate,
    pub labels: LabelSet,
    pub inputs: BTreeSet<String>,
    pub protocols: BTreeSet<String>,
}

impl PeerProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.peer_id.is_empty() {
            return Err(ProfileError::EmptyId);
        }
        if self.labels.is_empty() {
            return Err(ProfileError::NoLabels);
        }
        if self.inputs.is_empty() {
            return Err(ProfileError::NoInputs);
        }
        if self.certificate.subject != self.peer_id {
            return Err(ProfileError::SubjectMismatch {
                peer_id: self.peer_id.clone(),
                subject: self.certificate.subject.clone(),
            });
        }
        Ok(())
    }

    /// Labels satisfy the predicate and the peer can supply input and protocol.
    pub fn eligible_for(&self, query: &Query) -> bool {
        query.predicate.eval(&self.labels)
            && self.inputs.contains(&query.input)
            && self.protocols.contains(&query.protocol)
    }
}

/// Union of all peers' label sets.
pub fn build_label_superset<'a>(peers: impl IntoIterator<Item = &'a PeerProfile>) -> BTreeSet<Label> {
    peers
        .into_iter()
        .flat_map(|p| p.labels.iter().cloned())
        .collect()
}
