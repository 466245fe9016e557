//! Plaintext summation at the reporter. For evaluation runs only: every
//! contribution is revealed to the reporting peer.

use std::collections::BTreeMap;

use super::field::FieldElement;
use super::{Party, Round, SessionSkeleton, SmcBackend, SmcError, SmcMessage};
use crate::fixed::Fixed;

#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl SmcBackend for MockBackend {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn party(
        &self,
        skeleton: &SessionSkeleton,
        me: &str,
        contribution: Fixed,
    ) -> Result<Box<dyn Party>, SmcError> {
        if !self.supports(&skeleton.protocol) {
            return Err(SmcError::UnsupportedProtocol(skeleton.protocol.clone()));
        }
        if skeleton.index_of(me).is_none() {
            return Err(SmcError::NotAParticipant(me.to_owned()));
        }
        skeleton.check_contribution(me, contribution)?;
        Ok(Box::new(MockParty {
            me: me.to_owned(),
            peers: skeleton.peer_ids().map(str::to_owned).collect(),
            reporter: skeleton.reporter().peer_id.clone(),
            input: FieldElement::embed(contribution),
            received: BTreeMap::new(),
            output: None,
        }))
    }
}

struct MockParty {
    me: String,
    peers: Vec<String>,
    reporter: String,
    input: FieldElement,
    received: BTreeMap<String, FieldElement>,
    output: Option<Fixed>,
}

impl MockParty {
    fn finish(&mut self) {
        if self.me == self.reporter && self.received.len() == self.peers.len() {
            let total: FieldElement = self.received.values().copied().sum();
            self.output = Some(total.decode());
        }
    }
}

impl Party for MockParty {
    fn start(&mut self) -> Result<Vec<SmcMessage>, SmcError> {
        if self.me == self.reporter {
            self.received.insert(self.me.clone(), self.input);
            self.finish();
            return Ok(Vec::new());
        }
        Ok(vec![SmcMessage {
            from: self.me.clone(),
            to: self.reporter.clone(),
            round: Round::Contribution,
            share: self.input,
        }])
    }

    fn receive(&mut self, msg: SmcMessage) -> Result<Vec<SmcMessage>, SmcError> {
        let err = |why: &str| SmcError::Protocol {
            from: msg.from.clone(),
            why: why.to_owned(),
        };
        if self.me != self.reporter || msg.to != self.me || msg.round != Round::Contribution {
            return Err(err("unexpected message"));
        }
        if msg.from == self.me || !self.peers.contains(&msg.from) {
            return Err(err("sender is not a participant"));
        }
        if self.received.insert(msg.from.clone(), msg.share).is_some() {
            return Err(err("duplicate contribution"));
        }
        self.finish();
        Ok(Vec::new())
    }

    fn output(&self) -> Option<Fixed> {
        self.output
    }
}
