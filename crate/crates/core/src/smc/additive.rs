//! Additive secret sharing of a sum.
//!
//! Each party splits its input into n uniformly random shares summing to
//! the input, keeps one and sends one to every other party. Each party then
//! adds the shares it holds and sends that partial sum to the reporter, who
//! adds the partials. No party ever sees another party's raw input.

use std::collections::BTreeMap;

use super::field::FieldElement;
use super::{Party, Round, SessionSkeleton, SmcBackend, SmcError, SmcMessage};
use crate::fixed::Fixed;

#[derive(Debug, Clone, Copy, Default)]
pub struct AdditiveBackend;

impl SmcBackend for AdditiveBackend {
    fn name(&self) -> &'static str {
        "additive"
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
        let n = skeleton.participants.len();
        if n < 2 {
            return Err(SmcError::TooFewParticipants { needed: 2, got: n });
        }
        if skeleton.index_of(me).is_none() {
            return Err(SmcError::NotAParticipant(me.to_owned()));
        }
        skeleton.check_contribution(me, contribution)?;
        Ok(Box::new(AdditiveParty {
            me: me.to_owned(),
            peers: skeleton.peer_ids().map(str::to_owned).collect(),
            reporter: skeleton.reporter().peer_id.clone(),
            input: FieldElement::embed(contribution),
            own_share: None,
            shares: BTreeMap::new(),
            partials: BTreeMap::new(),
            partial_sent: false,
            output: None,
        }))
    }
}

struct AdditiveParty {
    me: String,
    peers: Vec<String>,
    reporter: String,
    input: FieldElement,
    own_share: Option<FieldElement>,
    shares: BTreeMap<String, FieldElement>,
    partials: BTreeMap<String, FieldElement>,
    partial_sent: bool,
    output: Option<Fixed>,
}

/// Splits `x` into `n` shares that sum to `x`.
pub(crate) fn split(x: FieldElement, n: usize) -> Vec<FieldElement> {
    let mut rng = rand::thread_rng();
    let mut shares: Vec<FieldElement> = (1..n).map(|_| FieldElement::random(&mut rng)).collect();
    let rest: FieldElement = shares.iter().copied().sum();
    shares.push(x - rest);
    shares
}

impl AdditiveParty {
    fn is_peer(&self, id: &str) -> bool {
        id != self.me && self.peers.iter().any(|p| p == id)
    }

    fn protocol_err(&self, from: &str, why: &str) -> SmcError {
        SmcError::Protocol {
            from: from.to_owned(),
            why: why.to_owned(),
        }
    }

    /// Once every share is in, emit (or record) this party's partial sum.
    fn advance(&mut self) -> Vec<SmcMessage> {
        let Some(own) = self.own_share else {
            return Vec::new();
        };
        if self.partial_sent || self.shares.len() + 1 < self.peers.len() {
            return Vec::new();
        }
        self.partial_sent = true;
        let partial = own + self.shares.values().copied().sum();
        if self.me == self.reporter {
            self.partials.insert(self.me.clone(), partial);
            self.finish();
            Vec::new()
        } else {
            vec![SmcMessage {
                from: self.me.clone(),
                to: self.reporter.clone(),
                round: Round::Partial,
                share: partial,
            }]
        }
    }

    fn finish(&mut self) {
        if self.partials.len() == self.peers.len() {
            let total: FieldElement = self.partials.values().copied().sum();
            self.output = Some(total.decode());
        }
    }
}

impl Party for AdditiveParty {
    fn start(&mut self) -> Result<Vec<SmcMessage>, SmcError> {
        if self.own_share.is_some() {
            return Err(self.protocol_err(&self.me, "started twice"));
        }
        let shares = split(self.input, self.peers.len());
        let mut out = Vec::with_capacity(self.peers.len());
        for (peer, share) in self.peers.iter().zip(shares) {
            if *peer == self.me {
                self.own_share = Some(share);
            } else {
                out.push(SmcMessage {
                    from: self.me.clone(),
                    to: peer.clone(),
                    round: Round::Share,
                    share,
                });
            }
        }
        out.extend(self.advance());
        Ok(out)
    }

    fn receive(&mut self, msg: SmcMessage) -> Result<Vec<SmcMessage>, SmcError> {
        if msg.to != self.me {
            return Err(self.protocol_err(&msg.from, "addressed to another party"));
        }
        if !self.is_peer(&msg.from) {
            return Err(self.protocol_err(&msg.from, "sender is not a participant"));
        }
        match msg.round {
            Round::Share => {
                if self.shares.insert(msg.from.clone(), msg.share).is_some() {
                    return Err(self.protocol_err(&msg.from, "duplicate share"));
                }
                Ok(self.advance())
            }
            Round::Partial if self.me == self.reporter => {
                if self.partials.insert(msg.from.clone(), msg.share).is_some() {
                    return Err(self.protocol_err(&msg.from, "duplicate partial sum"));
                }
                self.finish();
                Ok(Vec::new())
            }
            Round::Partial => Err(self.protocol_err(&msg.from, "partial sum sent to non-reporter")),
            Round::Contribution => {
                Err(self.protocol_err(&msg.from, "plaintext contribution in additive session"))
            }
        }
    }

    fn output(&self) -> Option<Fixed> {
        self.output
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::plan;
    use super::super::{field, run_local};
    use super::*;

    #[test]
    fn split_sums_to_input() {
        let x = FieldElement::embed(Fixed::from_int(-17).unwrap());
        for n in [1, 2, 5, 30] {
            let s = split(x, n);
            assert_eq!(s.len(), n);
            assert_eq!(s.iter().copied().sum::<FieldElement>(), x);
        }
    }

    // Chi-squared goodness of fit, 16 equal buckets, 15 degrees of freedom.
    // 37.697 is the 0.999 quantile of chi2(15).
    #[test]
    fn shares_are_uniform() {
        const TRIALS: usize = 10_000;
        const BUCKETS: usize = 16;
        const CRITICAL: f64 = 37.697;
        let x = FieldElement::embed(Fixed::from_int(12_345).unwrap());
        let n = 3;
        let mut counts = vec![[0usize; BUCKETS]; n];
        for _ in 0..TRIALS {
            for (i, s) in split(x, n).into_iter().enumerate() {
                let b = (s.value() as u128 * BUCKETS as u128 / field::MODULUS as u128) as usize;
                counts[i][b] += 1;
            }
        }
        let expected = TRIALS as f64 / BUCKETS as f64;
        for (i, c) in counts.iter().enumerate() {
            let chi2: f64 = c
                .iter()
                .map(|&o| (o as f64 - expected).powi(2) / expected)
                .sum();
            assert!(chi2 < CRITICAL, "share {i}: chi2 {chi2:.2} >= {CRITICAL}");
        }
    }

    #[test]
    fn transcript_never_carries_raw_inputs() {
        let values = [3, 1_000, -42, 7, 0];
        let p = plan(&values);
        let run = run_local(&AdditiveBackend, &p).unwrap();
        assert_eq!(run.value, Fixed::from_int(968).unwrap());
        // n(n-1) shares plus n-1 partials.
        assert_eq!(run.transcript.len(), 5 * 4 + 4);
        for m in &run.transcript {
            assert_ne!(m.round, Round::Contribution);
            if m.round == Round::Share {
                let raw = FieldElement::embed(p.contributions[&m.from]);
                // Probability of a false alarm is 1/p per message.
                if raw != FieldElement::ZERO {
                    assert_ne!(m.share, raw);
                }
            }
        }
    }

    #[test]
    fn out_of_order_delivery() {
        let p = plan(&[1, 2, 3]);
        let ids: Vec<String> = p.skeleton.peer_ids().map(str::to_owned).collect();
        let mut parties: Vec<_> = ids
            .iter()
            .map(|id| AdditiveBackend.party(&p.skeleton, id, p.contributions[id]).unwrap())
            .collect();
        // Party 2 starts first; its shares reach 0 and 1 before they start.
        let mut queue = parties[2].start().unwrap();
        queue.extend(parties[1].start().unwrap());
        queue.extend(parties[0].start().unwrap());
        while let Some(m) = queue.pop() {
            let i = ids.iter().position(|id| *id == m.to).unwrap();
            queue.extend(parties[i].receive(m).unwrap());
        }
        assert_eq!(parties[0].output(), Some(Fixed::from_int(6).unwrap()));
        assert_eq!(parties[1].output(), None);
    }

    #[test]
    fn rejects_duplicates_and_strangers() {
        let p = plan(&[1, 2, 3]);
        let mut party = AdditiveBackend.party(&p.skeleton, "peer-01", p.contributions["peer-01"]).unwrap();
        let m = SmcMessage {
            from: "peer-02".into(),
            to: "peer-01".into(),
            round: Round::Share,
            share: FieldElement::new(9),
        };
        party.receive(m.clone()).unwrap();
        assert!(party.receive(m.clone()).is_err());
        let stranger = SmcMessage {
            from: "mallory".into(),
            ..m
        };
        assert!(party.receive(stranger).is_err());
    }
}
