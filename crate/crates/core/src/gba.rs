//! Graded Byzantine agreement, in two flavors sharing one round skeleton.
//!
//! Both variants echo values, forward an echo certificate for a value with
//! quorum support, vote for it if no conflicting certificate was seen by the
//! end of the forwarding round, and then assemble vote certificates that
//! drive the final (value, grade) output:
//!
//! * The aggregating variant (4 rounds) condenses every certificate into a
//!   unit-sized threshold signature and multicasts it.
//! * The gossip variant (5 rounds) keeps certificates as explicit signature
//!   sets, sends them only to expander-graph neighbors, and adds a final
//!   vote round whose `f+1` threshold proves certificate existence to
//!   everyone.
//!
//! A party's output value defaults to its input and its grade to 0; the
//! grade, once raised, is never lowered within an instance.

use crate::crypto::{self, Keystore, SignedMessage};
use crate::digest;
use crate::expander::ExpanderGraph;
use crate::msg::{CertKind, Certificate, Delivery, Evidence, Outgoing, Payload};
use crate::types::{CommitteeId, PartyId, Round, Slot, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GbaVariant {
    /// Threshold-signature certificates, multicast.
    Ts,
    /// Explicit-signature certificates, sent to expander neighbors.
    Exp,
}

impl GbaVariant {
    pub fn rounds(self) -> Round {
        match self {
            GbaVariant::Ts => 4,
            GbaVariant::Exp => 5,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GbaError {
    #[error("party {0} is not in the committee")]
    NotInCommittee(PartyId),
    #[error("gossip variant requires an expander graph over the committee")]
    MissingGraph,
    #[error("round {got} out of order, expected {expected}")]
    OutOfOrderRound { expected: Round, got: Round },
    #[error("protocol not finished")]
    NotFinished,
}

/// Static per-instance context shared by every member.
#[derive(Debug, Clone)]
pub struct GbaConfig {
    pub w: CommitteeId,
    pub slot: Slot,
    pub variant: GbaVariant,
    pub members: Arc<Vec<PartyId>>,
    pub f: u32,
    pub quorum: u32,
    pub graph: Option<Arc<ExpanderGraph>>,
}

type SigPool = BTreeMap<Value, BTreeMap<PartyId, SignedMessage>>;

fn quorum_values(pool: &SigPool, quorum: u32) -> Vec<Value> {
    pool.iter()
        .filter(|(_, signers)| signers.len() as u32 >= quorum)
        .map(|(v, _)| *v)
        .collect()
}

/// One party's state for one graded-agreement instance.
#[derive(Debug)]
pub struct GbaInstance {
    cfg: GbaConfig,
    ks: Arc<Keystore>,
    me: PartyId,
    v: Value,
    grade: bool,
    echo_pool: SigPool,
    vote_pools: [SigPool; 3],
    /// Values for which an echo certificate has been formed or received.
    echo_certs: BTreeSet<Value>,
    /// Values for which a vote-1 certificate has been formed or received.
    c1_certs: BTreeSet<Value>,
    /// Values backed by a quorum of vote-2 messages.
    c2_certs: BTreeSet<Value>,
    forwarded: Option<Value>,
    conflict: bool,
    next_round: Round,
    finished: bool,
    dropped: u64,
}

impl GbaInstance {
    pub fn new(
        cfg: GbaConfig,
        ks: Arc<Keystore>,
        me: PartyId,
        input: Value,
    ) -> Result<Self, GbaError> {
        if !cfg.members.contains(&me) {
            return Err(GbaError::NotInCommittee(me));
        }
        match cfg.variant {
            GbaVariant::Exp => match &cfg.graph {
                Some(g) if g.n as usize == cfg.members.len() => {}
                _ => return Err(GbaError::MissingGraph),
            },
            GbaVariant::Ts => {}
        }
        Ok(GbaInstance {
            cfg,
            ks,
            me,
            v: input,
            grade: false,
            echo_pool: SigPool::new(),
            vote_pools: Default::default(),
            echo_certs: BTreeSet::new(),
            c1_certs: BTreeSet::new(),
            c2_certs: BTreeSet::new(),
            forwarded: None,
            conflict: false,
            next_round: 1,
            finished: false,
            dropped: 0,
        })
    }

    pub fn rounds(&self) -> Round {
        self.cfg.variant.rounds()
    }

    /// True once two certificates of the same kind named different values,
    /// which is unreachable while faults stay within the design bound.
    pub fn saw_conflict(&self) -> bool {
        self.conflict
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    fn mine(&self, w: CommitteeId, slot: Slot) -> bool {
        w == self.cfg.w && slot == self.cfg.slot
    }

    fn is_member(&self, p: PartyId) -> bool {
        self.cfg.members.binary_search(&p).is_ok()
    }

    fn absorb(&mut self, inbox: &[Delivery]) {
        for d in inbox {
            match &d.payload {
                Payload::Echo { w, slot, value, sig } if self.mine(*w, *slot) => {
                    let expect = digest::echo_digest(*w, *slot, *value);
                    if sig.digest == expect && self.is_member(sig.signer) && crypto::verify(sig, &self.ks)
                    {
                        self.echo_pool.entry(*value).or_default().entry(sig.signer).or_insert(*sig);
                    } else {
                        self.dropped += 1;
                    }
                }
                Payload::Vote { stage, w, slot, value, sig }
                    if self.mine(*w, *slot) && (1..=3).contains(stage) =>
                {
                    let expect = digest::vote_digest(*stage, *w, *slot, *value);
                    if sig.digest == expect && self.is_member(sig.signer) && crypto::verify(sig, &self.ks)
                    {
                        self.vote_pools[*stage as usize - 1]
                            .entry(*value)
                            .or_default()
                            .entry(sig.signer)
                            .or_insert(*sig);
                    } else {
                        self.dropped += 1;
                    }
                }
                Payload::Cert(cert) if self.mine(cert.w, cert.slot) => {
                    if self.cert_valid(cert) {
                        match cert.kind {
                            CertKind::Echo => {
                                self.echo_certs.insert(cert.value);
                            }
                            CertKind::Vote1 => {
                                self.c1_certs.insert(cert.value);
                            }
                            CertKind::Vote2 => {
                                self.c2_certs.insert(cert.value);
                            }
                        }
                    } else {
                        self.dropped += 1;
                    }
                }
                _ => {}
            }
        }
        self.refresh();
    }

    /// Quorums assembled from individually received messages also count as
    /// received certificates.
    fn refresh(&mut self) {
        for v in quorum_values(&self.echo_pool, self.cfg.quorum) {
            self.echo_certs.insert(v);
        }
        for v in quorum_values(&self.vote_pools[0], self.cfg.quorum) {
            self.c1_certs.insert(v);
        }
        for v in quorum_values(&self.vote_pools[1], self.cfg.quorum) {
            self.c2_certs.insert(v);
        }
        if self.echo_certs.len() > 1 || self.c1_certs.len() > 1 {
            self.conflict = true;
        }
    }

    fn cert_valid(&self, cert: &Certificate) -> bool {
        let share_digest = cert.share_digest();
        match &cert.evidence {
            Evidence::Threshold(ts) => {
                ts.group == cert.w && crypto::verify_aggregate_digest(ts, share_digest, &self.ks)
            }
            Evidence::Shares(sigs) => {
                let mut signers = BTreeSet::new();
                for s in sigs.iter() {
                    if s.digest != share_digest || !self.is_member(s.signer) || !crypto::verify(s, &self.ks)
                    {
                        return false;
                    }
                    signers.insert(s.signer);
                }
                signers.len() as u32 >= self.cfg.quorum
            }
        }
    }

    fn multicast(&self, payload: Payload) -> Outgoing {
        Outgoing {
            recipients: self.cfg.members.as_ref().clone(),
            payload,
        }
    }

    fn propagate(&self, payload: Payload) -> Option<Outgoing> {
        let graph = self.cfg.graph.as_ref().expect("gossip variant has a graph");
        let lo = self.cfg.members[0].0;
        let my_idx = self.me.0 - lo;
        let recipients: Vec<PartyId> = graph
            .neighbors(my_idx)
            .iter()
            .map(|&i| self.cfg.members[i as usize])
            .collect();
        if recipients.is_empty() {
            None
        } else {
            Some(Outgoing { recipients, payload })
        }
    }

    fn sign(&self, payload_digest: u64) -> SignedMessage {
        crypto::sign_digest(self.me, payload_digest, &self.ks).expect("member key exists")
    }

    fn make_cert(&self, kind: CertKind, value: Value, pool: &SigPool) -> Certificate {
        let sigs: Vec<SignedMessage> = pool[&value]
            .values()
            .take(self.cfg.quorum as usize)
            .copied()
            .collect();
        let evidence = match self.cfg.variant {
            GbaVariant::Ts => {
                let ts = crypto::aggregate(&sigs, self.cfg.quorum, self.cfg.w, &self.ks)
                    .expect("quorum of verified same-digest shares aggregates");
                Evidence::Threshold(ts)
            }
            GbaVariant::Exp => Evidence::Shares(Arc::new(sigs)),
        };
        Certificate {
            kind,
            w: self.cfg.w,
            slot: self.cfg.slot,
            value,
            evidence,
        }
    }

    fn vote(&self, stage: u8, value: Value) -> Payload {
        Payload::Vote {
            stage,
            w: self.cfg.w,
            slot: self.cfg.slot,
            value,
            sig: self.sign(digest::vote_digest(stage, self.cfg.w, self.cfg.slot, value)),
        }
    }

    /// Runs one protocol round. `inbox` holds the deliveries from the end of
    /// the previous round; unverifiable messages are dropped, not fatal.
    pub fn round(&mut self, round: Round, inbox: &[Delivery]) -> Result<Vec<Outgoing>, GbaError> {
        if round != self.next_round || round > self.rounds() {
            return Err(GbaError::OutOfOrderRound {
                expected: self.next_round,
                got: round,
            });
        }
        self.next_round += 1;
        self.absorb(inbox);
        let mut out = Vec::new();
        match round {
            1 => {
                let value = self.v;
                out.push(self.multicast(Payload::Echo {
                    w: self.cfg.w,
                    slot: self.cfg.slot,
                    value,
                    sig: self.sign(digest::echo_digest(self.cfg.w, self.cfg.slot, value)),
                }));
            }
            2 => {
                let winners = quorum_values(&self.echo_pool, self.cfg.quorum);
                if let Some(&value) = winners.first() {
                    self.forwarded = Some(value);
                    let cert = Payload::Cert(self.make_cert(CertKind::Echo, value, &self.echo_pool));
                    match self.cfg.variant {
                        GbaVariant::Ts => out.push(self.multicast(cert)),
                        GbaVariant::Exp => out.extend(self.propagate(cert)),
                    }
                }
            }
            3 => {
                if let Some(v) = self.forwarded {
                    let clean = self.echo_certs.iter().all(|&x| x == v);
                    if clean {
                        out.push(self.multicast(self.vote(1, v)));
                    }
                }
            }
            4 => {
                let winners = quorum_values(&self.vote_pools[0], self.cfg.quorum);
                if let Some(&value) = winners.first() {
                    let cert =
                        Payload::Cert(self.make_cert(CertKind::Vote1, value, &self.vote_pools[0]));
                    match self.cfg.variant {
                        GbaVariant::Ts => out.push(self.multicast(cert)),
                        GbaVariant::Exp => out.extend(self.propagate(cert)),
                    }
                    out.push(self.multicast(self.vote(2, value)));
                }
            }
            5 => {
                // Gossip variant only: anyone holding a vote-1 certificate by
                // the end of round 4 says so to everyone.
                if let Some(&value) = self.c1_certs.iter().next() {
                    out.push(self.multicast(self.vote(3, value)));
                }
            }
            _ => unreachable!(),
        }
        Ok(out)
    }

    /// Consumes the deliveries from the end of the last round and fixes the
    /// graded output.
    pub fn finish(&mut self, inbox: &[Delivery]) -> Result<(Value, bool), GbaError> {
        if self.next_round != self.rounds() + 1 || self.finished {
            return Err(GbaError::OutOfOrderRound {
                expected: self.next_round,
                got: self.rounds() + 1,
            });
        }
        self.absorb(inbox);
        match self.cfg.variant {
            GbaVariant::Ts => {
                if let Some(&v) = self.c1_certs.iter().next() {
                    self.v = v;
                }
            }
            GbaVariant::Exp => {
                let threshold = self.cfg.f + 1;
                let backed = quorum_values(&self.vote_pools[2], threshold);
                if backed.len() > 1 {
                    self.conflict = true;
                }
                if let Some(&v) = backed.first() {
                    self.v = v;
                }
            }
        }
        self.grade = self.c2_certs.contains(&self.v);
        self.finished = true;
        Ok((self.v, self.grade))
    }

    /// Final `(value, grade)` tuple; an error until all rounds have run.
    pub fn output(&self) -> Result<(Value, bool), GbaError> {
        if self.finished {
            Ok((self.v, self.grade))
        } else {
            Err(GbaError::NotFinished)
        }
    }
}

/// Scans deliveries for quorum support of `kind` within one instance and
/// assembles the certificate if any value has it. When two values qualify
/// the lexicographically smallest wins and the conflict flag is raised.
pub fn collect_certificate(
    inbox: &[Delivery],
    kind: CertKind,
    cfg: &GbaConfig,
    ks: &Keystore,
) -> (Option<Certificate>, bool) {
    let mut pool = SigPool::new();
    for d in inbox {
        let (value, sig) = match (&d.payload, kind) {
            (Payload::Echo { w, slot, value, sig }, CertKind::Echo)
                if *w == cfg.w && *slot == cfg.slot =>
            {
                (*value, *sig)
            }
            (Payload::Vote { stage, w, slot, value, sig }, k)
                if *w == cfg.w && *slot == cfg.slot && *stage == k.vote_stage() =>
            {
                (*value, *sig)
            }
            _ => continue,
        };
        let expect = match kind {
            CertKind::Echo => digest::echo_digest(cfg.w, cfg.slot, value),
            k => digest::vote_digest(k.vote_stage(), cfg.w, cfg.slot, value),
        };
        if sig.digest == expect
            && cfg.members.binary_search(&sig.signer).is_ok()
            && crypto::verify(&sig, ks)
        {
            pool.entry(value).or_default().entry(sig.signer).or_insert(sig);
        }
    }
    let winners = quorum_values(&pool, cfg.quorum);
    let conflict = winners.len() > 1;
    let cert = winners.first().map(|&value| {
        let sigs: Vec<SignedMessage> = pool[&value]
            .values()
            .take(cfg.quorum as usize)
            .copied()
            .collect();
        let evidence = match cfg.variant {
            GbaVariant::Ts => Evidence::Threshold(
                crypto::aggregate(&sigs, cfg.quorum, cfg.w, ks)
                    .expect("verified quorum aggregates"),
            ),
            GbaVariant::Exp => Evidence::Shares(Arc::new(sigs)),
        };
        Certificate {
            kind,
            w: cfg.w,
            slot: cfg.slot,
            value,
            evidence,
        }
    });
    (cert, conflict)
}
