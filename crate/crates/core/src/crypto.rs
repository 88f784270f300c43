//! Ideal signature and threshold-signature layer.
//!
//! Signatures are simulated, not computed: a message tag is derived from a
//! per-party secret held by the keystore, so verification is exact rather
//! than computational. A tag can only be produced by `sign` (or by the
//! simulator's adversary interface on behalf of a corrupted party), which
//! makes unforgeability hold by construction.
//!
//! A threshold group condenses a quorum of individual signatures over one
//! payload into a single unit-sized aggregate, verifiable against the group
//! data installed by the trusted setup that runs before round 1.

use crate::digest::{fnv1a, mix, splitmix};
use crate::types::PartyId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// One signature (or aggregate, or bare value) occupies one kappa unit.
pub const KAPPA_UNIT: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("unknown signer {0}")]
    UnknownSigner(PartyId),
    #[error("unknown threshold group {0}")]
    UnknownGroup(u64),
    #[error("insufficient shares: have {have}, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("duplicate signers: {distinct} distinct of {need} required")]
    DuplicateSigners { distinct: usize, need: usize },
    #[error("share payloads differ")]
    PayloadMismatch,
    #[error("share from {0} does not verify or is outside the group")]
    InvalidShare(PartyId),
    #[error("requested threshold {requested} does not match group threshold {group}")]
    ThresholdMismatch { requested: usize, group: usize },
}

/// A message digest signed by one party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignedMessage {
    pub signer: PartyId,
    pub digest: u64,
    tag: u64,
}

impl SignedMessage {
    /// Kappa units this signature occupies on the wire.
    pub fn kappa_units(&self) -> u32 {
        KAPPA_UNIT
    }
}

/// A constant-size aggregate of at least `threshold` distinct-signer shares
/// over one payload, bound to a named committee group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ThresholdSignature {
    pub group: u64,
    pub threshold: u32,
    pub digest: u64,
    tag: u64,
}

impl ThresholdSignature {
    pub fn kappa_units(&self) -> u32 {
        KAPPA_UNIT
    }
}

struct Group {
    members: BTreeSet<PartyId>,
    threshold: u32,
    secret: u64,
}

/// Per-party signing secrets plus per-committee group verification data.
/// Read-only once setup is complete.
pub struct Keystore {
    secrets: Vec<u64>,
    groups: BTreeMap<u64, Group>,
}

impl std::fmt::Debug for Keystore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Keystore")
            .field("parties", &self.secrets.len())
            .field("groups", &self.groups.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Keystore {
    /// Trusted setup: derives signing material for `n` parties from a seed.
    pub fn new(setup_seed: u64, n: u32) -> Self {
        let secrets = (0..n)
            .map(|i| splitmix(mix(setup_seed, 0x05ec_2e75 ^ (i as u64 + 1))))
            .collect();
        Keystore {
            secrets,
            groups: BTreeMap::new(),
        }
    }

    /// Installs threshold-group data for a committee. Only meaningful when
    /// the aggregating protocol variant is configured.
    pub fn add_group(&mut self, id: u64, members: impl IntoIterator<Item = PartyId>, threshold: u32) {
        let secret = splitmix(mix(self.base_secret(), 0x0009_2090 ^ id));
        self.groups.insert(
            id,
            Group {
                members: members.into_iter().collect(),
                threshold,
                secret,
            },
        );
    }

    pub fn has_group(&self, id: u64) -> bool {
        self.groups.contains_key(&id)
    }

    pub fn group_threshold(&self, id: u64) -> Option<u32> {
        self.groups.get(&id).map(|g| g.threshold)
    }

    pub fn parties(&self) -> u32 {
        self.secrets.len() as u32
    }

    fn base_secret(&self) -> u64 {
        self.secrets.first().copied().unwrap_or(0x17)
    }

    fn secret(&self, p: PartyId) -> Result<u64, CryptoError> {
        self.secrets
            .get(p.idx())
            .copied()
            .ok_or(CryptoError::UnknownSigner(p))
    }
}

fn sig_tag(secret: u64, digest: u64) -> u64 {
    splitmix(secret ^ digest.rotate_left(17))
}

/// Signs raw payload bytes. Deterministic in `(signer, payload)`.
pub fn sign(signer: PartyId, payload: &[u8], ks: &Keystore) -> Result<SignedMessage, CryptoError> {
    sign_digest(signer, fnv1a(payload), ks)
}

/// Signs an already-computed payload digest.
pub fn sign_digest(signer: PartyId, digest: u64, ks: &Keystore) -> Result<SignedMessage, CryptoError> {
    let secret = ks.secret(signer)?;
    Ok(SignedMessage {
        signer,
        digest,
        tag: sig_tag(secret, digest),
    })
}

/// True iff the message was legitimately produced for `(signer, digest)`.
/// Malformed or tampered messages return false rather than an error.
pub fn verify(m: &SignedMessage, ks: &Keystore) -> bool {
    match ks.secret(m.signer) {
        Ok(secret) => m.tag == sig_tag(secret, m.digest),
        Err(_) => false,
    }
}

/// Verifies a signature against an expected payload.
pub fn verify_payload(m: &SignedMessage, payload: &[u8], ks: &Keystore) -> bool {
    m.digest == fnv1a(payload) && verify(m, ks)
}

/// Combines at least `threshold` distinct-signer shares over one payload into
/// a unit-sized aggregate for the named group.
///
/// `threshold` must equal the group's configured threshold; shares from
/// outside the group or failing verification are rejected.
pub fn aggregate(
    shares: &[SignedMessage],
    threshold: u32,
    group_id: u64,
    ks: &Keystore,
) -> Result<ThresholdSignature, CryptoError> {
    let group = ks.groups.get(&group_id).ok_or(CryptoError::UnknownGroup(group_id))?;
    if threshold != group.threshold {
        return Err(CryptoError::ThresholdMismatch {
            requested: threshold as usize,
            group: group.threshold as usize,
        });
    }
    let need = threshold as usize;
    if shares.len() < need {
        return Err(CryptoError::InsufficientShares {
            have: shares.len(),
            need,
        });
    }
    let digest = shares[0].digest;
    let mut signers = BTreeSet::new();
    for s in shares {
        if s.digest != digest {
            return Err(CryptoError::PayloadMismatch);
        }
        if !group.members.contains(&s.signer) || !verify(s, ks) {
            return Err(CryptoError::InvalidShare(s.signer));
        }
        signers.insert(s.signer);
    }
    if signers.len() < need {
        return Err(CryptoError::DuplicateSigners {
            distinct: signers.len(),
            need,
        });
    }
    Ok(ThresholdSignature {
        group: group_id,
        threshold,
        digest,
        tag: sig_tag(group.secret, digest),
    })
}

/// True iff `aggregate` produced `ts` for this digest within the named group.
pub fn verify_aggregate_digest(ts: &ThresholdSignature, digest: u64, ks: &Keystore) -> bool {
    match ks.groups.get(&ts.group) {
        Some(g) => {
            ts.threshold == g.threshold && ts.digest == digest && ts.tag == sig_tag(g.secret, digest)
        }
        None => false,
    }
}

/// Byte-payload form of [`verify_aggregate_digest`].
pub fn verify_aggregate(ts: &ThresholdSignature, payload: &[u8], ks: &Keystore) -> bool {
    verify_aggregate_digest(ts, fnv1a(payload), ks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keystore(n: u32) -> Keystore {
        Keystore::new(0xfeed, n)
    }

    #[test]
    fn sign_verify_round_trip() {
        let ks = keystore(4);
        let m = sign(PartyId(3), b"echo|v1", &ks).unwrap();
        assert_eq!(m.signer, PartyId(3));
        assert!(verify(&m, &ks));
        assert!(verify_payload(&m, b"echo|v1", &ks));
    }

    #[test]
    fn signing_is_deterministic() {
        let ks = keystore(2);
        assert_eq!(
            sign(PartyId(0), b"b", &ks).unwrap(),
            sign(PartyId(0), b"b", &ks).unwrap()
        );
    }

    #[test]
    fn mutated_payload_fails_verification() {
        let ks = keystore(2);
        let mut m = sign(PartyId(0), b"payload", &ks).unwrap();
        m.digest ^= 1;
        assert!(!verify(&m, &ks));
    }

    #[test]
    fn forged_tag_fails_verification() {
        let ks = keystore(2);
        let forged = SignedMessage {
            signer: PartyId(1),
            digest: fnv1a(b"anything"),
            tag: 0xdead_beef,
        };
        assert!(!verify(&forged, &ks));
    }

    #[test]
    fn unknown_signer_is_an_error() {
        let ks = keystore(2);
        assert_eq!(
            sign(PartyId(9), b"x", &ks).unwrap_err(),
            CryptoError::UnknownSigner(PartyId(9))
        );
    }

    #[test]
    fn aggregate_round_trip() {
        let mut ks = keystore(4);
        ks.add_group(7, (0..3).map(PartyId), 3);
        let shares: Vec<_> = (0..3)
            .map(|i| sign(PartyId(i), b"x", &ks).unwrap())
            .collect();
        let ts = aggregate(&shares, 3, 7, &ks).unwrap();
        assert_eq!(ts.kappa_units(), 1);
        assert!(verify_aggregate(&ts, b"x", &ks));
        assert!(!verify_aggregate(&ts, b"y", &ks));
    }

    #[test]
    fn aggregate_rejects_insufficient_shares() {
        let mut ks = keystore(4);
        ks.add_group(7, (0..4).map(PartyId), 3);
        let shares: Vec<_> = (0..2)
            .map(|i| sign(PartyId(i), b"x", &ks).unwrap())
            .collect();
        assert_eq!(
            aggregate(&shares, 3, 7, &ks).unwrap_err(),
            CryptoError::InsufficientShares { have: 2, need: 3 }
        );
    }

    #[test]
    fn aggregate_rejects_duplicate_signers_below_threshold() {
        let mut ks = keystore(4);
        ks.add_group(7, (0..4).map(PartyId), 3);
        let s0 = sign(PartyId(0), b"x", &ks).unwrap();
        let s1 = sign(PartyId(1), b"x", &ks).unwrap();
        assert_eq!(
            aggregate(&[s0, s1, s0], 3, 7, &ks).unwrap_err(),
            CryptoError::DuplicateSigners { distinct: 2, need: 3 }
        );
    }

    #[test]
    fn aggregate_rejects_payload_mismatch() {
        let mut ks = keystore(4);
        ks.add_group(7, (0..4).map(PartyId), 2);
        let s0 = sign(PartyId(0), b"x", &ks).unwrap();
        let s1 = sign(PartyId(1), b"y", &ks).unwrap();
        assert_eq!(
            aggregate(&[s0, s1], 2, 7, &ks).unwrap_err(),
            CryptoError::PayloadMismatch
        );
    }

    #[test]
    fn quorum_aggregate_is_unit_sized() {
        // n = 7, f = 3: threshold n - f = 4.
        let mut ks = keystore(7);
        ks.add_group(1, (0..7).map(PartyId), 4);
        let shares: Vec<_> = (0..4)
            .map(|i| sign(PartyId(i), b"x", &ks).unwrap())
            .collect();
        let ts = aggregate(&shares, 4, 1, &ks).unwrap();
        assert_eq!(ts.kappa_units(), 1);
    }

    #[test]
    fn cross_committee_aggregate_does_not_verify() {
        let mut ks = keystore(6);
        ks.add_group(2, (0..3).map(PartyId), 2);
        ks.add_group(3, (3..6).map(PartyId), 2);
        let shares: Vec<_> = (0..2)
            .map(|i| sign(PartyId(i), b"x", &ks).unwrap())
            .collect();
        let ts = aggregate(&shares, 2, 2, &ks).unwrap();
        let cross = ThresholdSignature { group: 3, ..ts };
        assert!(verify_aggregate(&ts, b"x", &ks));
        assert!(!verify_aggregate(&cross, b"x", &ks));
    }

    #[test]
    fn aggregate_rejects_outside_signer() {
        let mut ks = keystore(6);
        ks.add_group(2, (0..3).map(PartyId), 2);
        let inside = sign(PartyId(0), b"x", &ks).unwrap();
        let outside = sign(PartyId(5), b"x", &ks).unwrap();
        assert_eq!(
            aggregate(&[inside, outside], 2, 2, &ks).unwrap_err(),
            CryptoError::InvalidShare(PartyId(5))
        );
    }
}
