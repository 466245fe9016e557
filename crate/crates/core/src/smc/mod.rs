//! Pluggable secure-computation backends.
//!
//! A backend creates one [`Party`] per participant. Parties are message-driven
//! state machines; the same code runs inside peer daemons (messages travel
//! over the network) and in [`run_local`] (messages travel through an
//! in-memory queue with a recorded transcript).
//!
//! Two backends ship: [`AdditiveBackend`], additive secret sharing of the
//! sum over a 61-bit prime field, and [`MockBackend`], which sends
//! contributions to the reporter in plaintext and exists only for
//! evaluation runs.

mod additive;
pub mod field;
mod mock;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use additive::AdditiveBackend;
pub use field::FieldElement;
pub use mock::MockBackend;

use crate::crypto::{encrypt_for, Certificate, Ciphertext, CryptoError, Identity, Signature};
use crate::fixed::Fixed;
use crate::messages::{ResultPayload, SignedResult};

/// The only protocol the shipped backends implement.
pub const SUM: &str = "sum";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmcError {
    #[error("unsupported protocol {0:?}")]
    UnsupportedProtocol(String),
    #[error("session needs at least {needed} participants, got {got}")]
    TooFewParticipants { needed: usize, got: usize },
    #[error("{0:?} is not a participant of this session")]
    NotAParticipant(String),
    #[error("duplicate participant {0:?}")]
    DuplicateParticipant(String),
    #[error("contribution of {peer:?} outside the field range")]
    Range { peer: String },
    #[error("missing contribution for {0:?}")]
    MissingContribution(String),
    #[error("unexpected message from {from:?}: {why}")]
    Protocol { from: String, why: String },
    #[error("participant {peer:?} failed")]
    ParticipantFailed { peer: String },
    #[error("session did not produce a result")]
    NoResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Participant {
    pub peer_id: String,
    pub address: String,
    pub certificate: Certificate,
}

/// Group, protocol and session id: everything but the private inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSkeleton {
    pub session_id: String,
    pub protocol: String,
    /// Sorted by peer id.
    pub participants: Vec<Participant>,
}

impl SessionSkeleton {
    pub fn new(
        session_id: impl Into<String>,
        protocol: impl Into<String>,
        mut participants: Vec<Participant>,
    ) -> Result<Self, SmcError> {
        if participants.is_empty() {
            return Err(SmcError::TooFewParticipants { needed: 1, got: 0 });
        }
        participants.sort_by(|a, b| a.peer_id.cmp(&b.peer_id));
        for w in participants.windows(2) {
            if w[0].peer_id == w[1].peer_id {
                return Err(SmcError::DuplicateParticipant(w[0].peer_id.clone()));
            }
        }
        Ok(Self {
            session_id: session_id.into(),
            protocol: protocol.into(),
            participants,
        })
    }

    /// The lexicographically smallest peer id reports the result.
    pub fn reporter(&self) -> &Participant {
        &self.participants[0]
    }

    pub fn peer_ids(&self) -> impl Iterator<Item = &str> {
        self.participants.iter().map(|p| p.peer_id.as_str())
    }

    pub fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.peer_id == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.participants.iter().position(|p| p.peer_id == id)
    }

    /// Largest contribution magnitude (in thousandths) whose n-fold sum
    /// still decodes unambiguously.
    pub fn contribution_bound(&self) -> u64 {
        field::HALF / self.participants.len() as u64
    }

    fn check_contribution(&self, me: &str, v: Fixed) -> Result<(), SmcError> {
        if v.milli().unsigned_abs() > self.contribution_bound() {
            return Err(SmcError::Range {
                peer: me.to_owned(),
            });
        }
        Ok(())
    }
}

/// A skeleton plus every participant's preprocessed contribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionPlan {
    pub skeleton: SessionSkeleton,
    pub contributions: BTreeMap<String, Fixed>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Round {
    /// Additive share of the sender's input.
    Share,
    /// Sender's sum of received shares, sent to the reporter.
    Partial,
    /// Plaintext contribution (mock backend only).
    Contribution,
}

/// A backend message between two participants of one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmcMessage {
    pub from: String,
    pub to: String,
    pub round: Round,
    pub share: FieldElement,
}

pub trait Party: Send {
    /// Emits this party's first-round messages. Fails before sending
    /// anything if the input is out of range.
    fn start(&mut self) -> Result<Vec<SmcMessage>, SmcError>;

    /// Handles one message; may arrive before [`Party::start`].
    fn receive(&mut self, msg: SmcMessage) -> Result<Vec<SmcMessage>, SmcError>;

    /// The reconstructed result, available at the reporter once complete.
    fn output(&self) -> Option<Fixed>;
}

pub trait SmcBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn supports(&self, protocol: &str) -> bool {
        protocol == SUM
    }

    fn party(
        &self,
        skeleton: &SessionSkeleton,
        me: &str,
        contribution: Fixed,
    ) -> Result<Box<dyn Party>, SmcError>;
}

/// Looks up a shipped backend by name (`"additive"` or `"mock"`).
pub fn backend_by_name(name: &str) -> Option<Box<dyn SmcBackend>> {
    match name {
        "additive" => Some(Box::new(AdditiveBackend)),
        "mock" => Some(Box::new(MockBackend)),
        _ => None,
    }
}

/// Outcome of an in-memory session run.
#[derive(Debug, Clone)]
pub struct LocalRun {
    pub value: Fixed,
    /// Every message in delivery order.
    pub transcript: Vec<SmcMessage>,
}

/// Runs every party of `plan` in memory.
pub fn run_local(backend: &dyn SmcBackend, plan: &SessionPlan) -> Result<LocalRun, SmcError> {
    run_local_with_faults(backend, plan, &BTreeSet::new())
}

/// Like [`run_local`], but participants in `unreachable` never receive or
/// send anything; the first message addressed to one fails the session.
pub fn run_local_with_faults(
    backend: &dyn SmcBackend,
    plan: &SessionPlan,
    unreachable: &BTreeSet<String>,
) -> Result<LocalRun, SmcError> {
    let skeleton = &plan.skeleton;
    if !backend.supports(&skeleton.protocol) {
        return Err(SmcError::UnsupportedProtocol(skeleton.protocol.clone()));
    }
    // All parties are constructed (and range-checked) before any message exists.
    let mut parties: BTreeMap<String, Box<dyn Party>> = BTreeMap::new();
    for id in skeleton.peer_ids() {
        let v = *plan
            .contributions
            .get(id)
            .ok_or_else(|| SmcError::MissingContribution(id.to_owned()))?;
        parties.insert(id.to_owned(), backend.party(skeleton, id, v)?);
    }
    let mut queue = VecDeque::new();
    for (id, party) in parties.iter_mut() {
        if unreachable.contains(id) {
            continue;
        }
        queue.extend(party.start()?);
    }
    let mut transcript = Vec::new();
    while let Some(msg) = queue.pop_front() {
        if unreachable.contains(&msg.to) {
            return Err(SmcError::ParticipantFailed { peer: msg.to });
        }
        let target = parties
            .get_mut(&msg.to)
            .ok_or_else(|| SmcError::NotAParticipant(msg.to.clone()))?;
        transcript.push(msg.clone());
        queue.extend(target.receive(msg)?);
    }
    let reporter = &skeleton.reporter().peer_id;
    if unreachable.contains(reporter) {
        return Err(SmcError::ParticipantFailed {
            peer: reporter.clone(),
        });
    }
    let value = parties[reporter].output().ok_or(SmcError::NoResult)?;
    Ok(LocalRun { value, transcript })
}

/// Plaintext sum through the mock backend.
pub fn compute(plan: &SessionPlan) -> Result<LocalRun, SmcError> {
    run_local(&MockBackend, plan)
}

/// Sum through additive secret sharing.
pub fn additive_share_sum(plan: &SessionPlan) -> Result<LocalRun, SmcError> {
    run_local(&AdditiveBackend, plan)
}

/// A result as produced by the reporting peer: signed, then sealed to the client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputationResult {
    pub value: Fixed,
    pub session_id: String,
    pub sig_peer: Signature,
    pub ciphertext: Ciphertext,
}

impl ComputationResult {
    pub fn seal(
        value: Fixed,
        session_id: &str,
        reporter: &Identity,
        client: &Certificate,
    ) -> Result<Self, CryptoError> {
        let signed = SignedResult::new(reporter, session_id, value);
        let payload = ResultPayload {
            result: signed.clone(),
            reporter: reporter.certificate().clone(),
        };
        let bytes = crate::canonical::to_canonical_bytes(&payload)?;
        let ciphertext = encrypt_for(client, &bytes)?;
        Ok(Self {
            value,
            session_id: session_id.to_owned(),
            sig_peer: signed.sig_peer,
            ciphertext,
        })
    }

    pub fn signed(&self) -> SignedResult {
        SignedResult {
            session_id: self.session_id.clone(),
            value: self.value,
            sig_peer: self.sig_peer.clone(),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn mock_sums_contributions() {
        assert_eq!(compute(&plan(&[1, 2, 3])).unwrap().value, Fixed::from_int(6).unwrap());
        assert_eq!(compute(&plan(&[7])).unwrap().value, Fixed::from_int(7).unwrap());
    }

    #[test]
    fn additive_matches_mock() {
        let p = plan(&[5, 9]);
        assert_eq!(additive_share_sum(&p).unwrap().value, Fixed::from_int(14).unwrap());
        assert_eq!(compute(&p).unwrap().value, Fixed::from_int(14).unwrap());
        assert_eq!(additive_share_sum(&plan(&[0, 0, 0])).unwrap().value, Fixed::ZERO);
    }

    #[test]
    fn negative_values_sum() {
        let p = plan(&[-5, 2, -1]);
        assert_eq!(additive_share_sum(&p).unwrap().value, Fixed::from_int(-4).unwrap());
    }

    #[test]
    fn unsupported_protocol() {
        let mut p = plan(&[1, 2, 3]);
        p.skeleton.protocol = "median".into();
        assert_eq!(
            compute(&p).unwrap_err(),
            SmcError::UnsupportedProtocol("median".into())
        );
        assert!(matches!(
            additive_share_sum(&p),
            Err(SmcError::UnsupportedProtocol(_))
        ));
    }

    #[test]
    fn additive_needs_two_parties() {
        assert!(matches!(
            additive_share_sum(&plan(&[7])),
            Err(SmcError::TooFewParticipants { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn range_error_before_any_message() {
        let mut p = plan(&[1, 2]);
        let big = Fixed::from_milli((p.skeleton.contribution_bound() + 1) as i64);
        p.contributions.insert("peer-01".into(), big);
        assert_eq!(
            additive_share_sum(&p).unwrap_err(),
            SmcError::Range {
                peer: "peer-01".into()
            }
        );
        assert!(matches!(compute(&p), Err(SmcError::Range { .. })));
    }

    #[test]
    fn unreachable_participant_is_named() {
        let p = plan(&[1, 2, 3]);
        let down: BTreeSet<String> = ["peer-02".to_owned()].into();
        assert_eq!(
            run_local_with_faults(&AdditiveBackend, &p, &down).unwrap_err(),
            SmcError::ParticipantFailed {
                peer: "peer-02".into()
            }
        );
    }

    #[test]
    fn sealed_result_opens_for_client_only() {
        let v = crate::crypto::Validity::new(0, 1 << 40).unwrap();
        let ca = Identity::self_signed("ca", "", v);
        let reporter = ca.issue("peer-00", "", v);
        let client = ca.issue("client", "p", v);
        let r = ComputationResult::seal(Fixed::from_int(42).unwrap(), "s", &reporter, client.certificate())
            .unwrap();
        let plain = client.decrypt(&r.ciphertext).unwrap();
        let payload: ResultPayload = serde_json::from_slice(&plain).unwrap();
        assert_eq!(payload.result, r.signed());
        assert!(payload.result.verify(&payload.reporter));
        assert!(reporter.decrypt(&r.ciphertext).is_err());
    }

    #[test]
    fn skeleton_rejects_duplicates_and_sorts() {
        let s = skeleton(3);
        let mut ps = s.participants.clone();
        ps.reverse();
        let sorted = SessionSkeleton::new("x", SUM, ps.clone()).unwrap();
        assert_eq!(sorted.reporter().peer_id, "peer-00");
        ps.push(ps[0].clone());
        assert!(matches!(
            SessionSkeleton::new("x", SUM, ps),
            Err(SmcError::DuplicateParticipant(_))
        ));
    }
}
