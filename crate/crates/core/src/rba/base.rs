//! Base-case agreement for small committees: every member broadcasts its
//! input through a signature-chain protocol, all instances run in parallel,
//! and each party decides by majority over the per-instance outcomes.
//!
//! An attestation set for `(origin, value)` with at least `r` distinct
//! member signatures (one of them the origin's) is accepted when it arrives
//! by the end of round `r`. A party relays each newly accepted value once,
//! adding its own signature; at most two values are tracked per origin since
//! a second one already proves origin equivocation. The schedule runs one
//! initial multicast plus `f+1` relay rounds for `f = floor((s-1)/2)`, so
//! `rounds(s) = floor((s-1)/2) + 2`.

use crate::crypto::{self, Keystore, SignedMessage};
use crate::digest;
use crate::msg::{Delivery, Outgoing, Payload};
use crate::types::{CommitteeId, PartyId, Round, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

/// Total synchronous rounds for a committee of `s`.
pub fn base_rounds(s: u32) -> Round {
    (s.saturating_sub(1)) / 2 + 2
}

pub struct BaseInstance {
    w: CommitteeId,
    me: PartyId,
    members: Arc<Vec<PartyId>>,
    input: Value,
    ks: Arc<Keystore>,
    /// Per origin: accepted values and the largest signature set seen.
    accepted: BTreeMap<PartyId, BTreeMap<Value, Arc<Vec<SignedMessage>>>>,
    next_round: Round,
    decision: Option<Value>,
    dropped: u64,
}

impl BaseInstance {
    pub fn new(
        w: CommitteeId,
        members: Arc<Vec<PartyId>>,
        me: PartyId,
        input: Value,
        ks: Arc<Keystore>,
    ) -> Self {
        debug_assert!(members.contains(&me));
        BaseInstance {
            w,
            me,
            members,
            input,
            ks,
            accepted: BTreeMap::new(),
            next_round: 1,
            decision: None,
            dropped: 0,
        }
    }

    pub fn rounds(&self) -> Round {
        base_rounds(self.members.len() as u32)
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    fn is_member(&self, p: PartyId) -> bool {
        self.members.binary_search(&p).is_ok()
    }

    /// Validates an attestation set against the acceptance threshold and
    /// returns its distinct signers.
    fn validate(
        &self,
        origin: PartyId,
        value: Value,
        sigs: &[SignedMessage],
        threshold: u32,
    ) -> Option<BTreeSet<PartyId>> {
        if !self.is_member(origin) {
            return None;
        }
        let expect = digest::base_digest(self.w, origin, value);
        let mut signers = BTreeSet::new();
        for s in sigs {
            if s.digest != expect || !self.is_member(s.signer) || !crypto::verify(s, &self.ks) {
                return None;
            }
            signers.insert(s.signer);
        }
        if signers.contains(&origin) && signers.len() as u32 >= threshold {
            Some(signers)
        } else {
            None
        }
    }

    /// Absorbs deliveries that arrived at the end of round `threshold` and
    /// queues relays for anything newly accepted.
    fn absorb(&mut self, inbox: &[Delivery], threshold: u32, relay: bool) -> Vec<Outgoing> {
        let mut out = Vec::new();
        for d in inbox {
            let Payload::BaseSet { w, origin, value, sigs } = &d.payload else {
                continue;
            };
            if *w != self.w {
                continue;
            }
            let Some(signers) = self.validate(*origin, *value, sigs, threshold) else {
                self.dropped += 1;
                continue;
            };
            let per_origin = self.accepted.entry(*origin).or_default();
            if per_origin.contains_key(value) || per_origin.len() >= 2 {
                continue;
            }
            per_origin.insert(*value, sigs.clone());
            if relay && !signers.contains(&self.me) {
                let mut extended = sigs.as_ref().clone();
                extended.push(
                    crypto::sign_digest(self.me, digest::base_digest(self.w, *origin, *value), &self.ks)
                        .expect("member key exists"),
                );
                out.push(Outgoing {
                    recipients: self.members.as_ref().clone(),
                    payload: Payload::BaseSet {
                        w: self.w,
                        origin: *origin,
                        value: *value,
                        sigs: Arc::new(extended),
                    },
                });
            }
        }
        out
    }

    pub fn round(&mut self, round: Round, inbox: &[Delivery]) -> Vec<Outgoing> {
        debug_assert_eq!(round, self.next_round);
        self.next_round += 1;
        if round == 1 {
            let sig = crypto::sign_digest(
                self.me,
                digest::base_digest(self.w, self.me, self.input),
                &self.ks,
            )
            .expect("member key exists");
            return vec![Outgoing {
                recipients: self.members.as_ref().clone(),
                payload: Payload::BaseSet {
                    w: self.w,
                    origin: self.me,
                    value: self.input,
                    sigs: Arc::new(vec![sig]),
                },
            }];
        }
        self.absorb(inbox, round - 1, true)
    }

    /// Consumes the final round's deliveries and decides.
    pub fn finish(&mut self, inbox: &[Delivery]) -> Value {
        let last = self.rounds();
        debug_assert_eq!(self.next_round, last + 1);
        self.absorb(inbox, last, false);

        // Instance outcome: the unique accepted value, if any.
        let outcomes: Vec<Option<Value>> = self
            .members
            .iter()
            .map(|origin| {
                let per_origin = self.accepted.get(origin);
                match per_origin {
                    Some(m) if m.len() == 1 => m.keys().next().copied(),
                    _ => None,
                }
            })
            .collect();

        let mut counts: BTreeMap<Value, u32> = BTreeMap::new();
        for v in outcomes.iter().flatten() {
            *counts.entry(*v).or_default() += 1;
        }
        let majority = counts
            .iter()
            .find(|(_, &c)| c as usize * 2 > self.members.len())
            .map(|(v, _)| *v);
        let decision = majority
            .or_else(|| counts.keys().next().copied())
            .unwrap_or(Value(0));
        self.decision = Some(decision);
        decision
    }

    pub fn decision(&self) -> Option<Value> {
        self.decision
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_count_formula() {
        assert_eq!(base_rounds(1), 2);
        assert_eq!(base_rounds(2), 2);
        assert_eq!(base_rounds(3), 3);
        assert_eq!(base_rounds(4), 3);
        assert_eq!(base_rounds(5), 4);
    }

    #[test]
    fn single_party_decides_own_input() {
        let ks = Arc::new(Keystore::new(3, 1));
        let members = Arc::new(vec![PartyId(0)]);
        let mut inst = BaseInstance::new(1, members, PartyId(0), Value(1), ks);
        let out = inst.round(1, &[]);
        assert_eq!(out.len(), 1);
        // Loop the self-delivery back, as the network would.
        let d = Delivery {
            sender: PartyId(0),
            payload: out[0].payload.clone(),
        };
        assert!(inst.round(2, &[d]).is_empty());
        assert_eq!(inst.finish(&[]), Value(1));
    }
}
