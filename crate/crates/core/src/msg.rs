//! Wire payloads exchanged by the protocols, plus kappa accounting.
//!
//! Kappa units follow signature counting: a single signature, aggregate, or
//! bare value is one unit; a certificate carried as an explicit signature set
//! costs one unit per embedded signature. Unsigned control fields (round
//! numbers, committee labels, slot tags) are free.

use crate::crypto::{SignedMessage, ThresholdSignature};
use crate::digest::{self, Digest};
use crate::types::{CommitteeId, PartyId, Slot, Value};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Certificate flavor, by the vote stage that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CertKind {
    /// Quorum of echoes.
    Echo,
    /// Quorum of first-stage votes.
    Vote1,
    /// Quorum of second-stage votes; assembled locally, never transmitted.
    Vote2,
}

impl CertKind {
    pub fn vote_stage(self) -> u8 {
        match self {
            CertKind::Echo => 0,
            CertKind::Vote1 => 1,
            CertKind::Vote2 => 2,
        }
    }
}

/// Quorum evidence: either the explicit signature set or its aggregate.
#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    Shares(Arc<Vec<SignedMessage>>),
    Threshold(ThresholdSignature),
}

/// Quorum evidence that a committee backed `value` at some vote stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub kind: CertKind,
    pub w: CommitteeId,
    pub slot: Slot,
    pub value: Value,
    pub evidence: Evidence,
}

impl Certificate {
    /// Digest every piece of evidence must be signed over.
    pub fn share_digest(&self) -> u64 {
        match self.kind {
            CertKind::Echo => digest::echo_digest(self.w, self.slot, self.value),
            CertKind::Vote1 => digest::vote_digest(1, self.w, self.slot, self.value),
            CertKind::Vote2 => digest::vote_digest(2, self.w, self.slot, self.value),
        }
    }

    pub fn kappa_units(&self) -> u32 {
        match &self.evidence {
            Evidence::Shares(sigs) => (sigs.len() as u32).max(1),
            Evidence::Threshold(ts) => ts.kappa_units(),
        }
    }
}

/// Everything a party can put in an envelope.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Signed first-round announcement of the sender's current value.
    Echo {
        w: CommitteeId,
        slot: Slot,
        value: Value,
        sig: SignedMessage,
    },
    /// Signed vote; `stage` is 1, 2 or 3.
    Vote {
        stage: u8,
        w: CommitteeId,
        slot: Slot,
        value: Value,
        sig: SignedMessage,
    },
    /// A forwarded or propagated certificate.
    Cert(Certificate),
    /// A recursion participant reporting its sub-instance decision to the
    /// enclosing committee.
    Report {
        child_w: CommitteeId,
        value: Value,
        sig: SignedMessage,
    },
    /// Base-case broadcast attestation: a set of distinct signatures over
    /// `(w, origin, value)`, the first belonging to the value's origin.
    BaseSet {
        w: CommitteeId,
        origin: PartyId,
        value: Value,
        sigs: Arc<Vec<SignedMessage>>,
    },
}

impl Payload {
    /// Communication size in kappa units for one copy of this payload.
    pub fn kappa_units(&self) -> u32 {
        match self {
            Payload::Echo { sig, .. } => sig.kappa_units(),
            Payload::Vote { sig, .. } => sig.kappa_units(),
            Payload::Cert(cert) => cert.kappa_units(),
            Payload::Report { sig, .. } => sig.kappa_units(),
            Payload::BaseSet { sigs, .. } => (sigs.len() as u32).max(1),
        }
    }

    /// Stable label used in transcript records.
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Echo { .. } => "echo",
            Payload::Vote { stage: 1, .. } => "vote-1",
            Payload::Vote { stage: 2, .. } => "vote-2",
            Payload::Vote { stage: 3, .. } => "vote-3",
            Payload::Vote { .. } => "vote-?",
            Payload::Cert(c) => match c.kind {
                CertKind::Echo => "echo-cert",
                CertKind::Vote1 => "vote-1-cert",
                CertKind::Vote2 => "vote-2-cert",
            },
            Payload::Report { .. } => "report",
            Payload::BaseSet { .. } => "ba-set",
        }
    }

    /// The value this payload is about.
    pub fn value(&self) -> Value {
        match self {
            Payload::Echo { value, .. }
            | Payload::Vote { value, .. }
            | Payload::Report { value, .. }
            | Payload::BaseSet { value, .. } => *value,
            Payload::Cert(c) => c.value,
        }
    }

    /// Committee the payload belongs to (the parent committee for reports).
    pub fn committee(&self) -> CommitteeId {
        match self {
            Payload::Echo { w, .. } | Payload::Vote { w, .. } | Payload::BaseSet { w, .. } => *w,
            Payload::Cert(c) => c.w,
            Payload::Report { child_w, .. } => child_w / 2,
        }
    }

    /// Discriminating digest used to normalize inbox ordering. Not a
    /// signature payload; collisions only perturb sort order.
    pub fn sort_digest(&self) -> u64 {
        match self {
            Payload::Echo { w, slot, value, sig } => Digest::new("s-echo")
                .u64(*w)
                .u8(slot.as_u8())
                .u32(value.0)
                .u32(sig.signer.0)
                .finish(),
            Payload::Vote {
                stage,
                w,
                slot,
                value,
                sig,
            } => Digest::new("s-vote")
                .u8(*stage)
                .u64(*w)
                .u8(slot.as_u8())
                .u32(value.0)
                .u32(sig.signer.0)
                .finish(),
            Payload::Cert(c) => {
                let mut d = Digest::new("s-cert")
                    .u8(c.kind.vote_stage())
                    .u64(c.w)
                    .u8(c.slot.as_u8())
                    .u32(c.value.0);
                match &c.evidence {
                    Evidence::Shares(sigs) => {
                        for s in sigs.iter() {
                            d = d.u32(s.signer.0);
                        }
                    }
                    Evidence::Threshold(ts) => {
                        d = d.u64(ts.group).u32(ts.threshold);
                    }
                }
                d.finish()
            }
            Payload::Report { child_w, value, sig } => Digest::new("s-report")
                .u64(*child_w)
                .u32(value.0)
                .u32(sig.signer.0)
                .finish(),
            Payload::BaseSet { w, origin, value, sigs } => {
                let mut d = Digest::new("s-base").u64(*w).u32(origin.0).u32(value.0);
                for s in sigs.iter() {
                    d = d.u32(s.signer.0);
                }
                d.finish()
            }
        }
    }
}

/// A payload with its intended recipients, before the network stamps the
/// sender and round onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub recipients: Vec<PartyId>,
    pub payload: Payload,
}

/// A payload as seen in a recipient's inbox.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub sender: PartyId,
    pub payload: Payload,
}
