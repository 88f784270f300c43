//! Stable 64-bit hashing for message payloads and key derivation.
//!
//! Everything that feeds a signature or a deterministic seed goes through
//! these functions so that transcripts are bit-identical across platforms.
//! The std hasher is deliberately not used here: its output is not a
//! cross-version contract.

use crate::types::{CommitteeId, PartyId, Slot, Value};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over a byte slice.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// SplitMix64 finalizer; used to stretch seeds and derive keys.
pub fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes two words into a fresh derived seed.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix(a ^ splitmix(b))
}

/// Incremental canonical encoder feeding FNV-1a.
#[derive(Clone, Copy)]
pub struct Digest(u64);

impl Digest {
    pub fn new(tag: &str) -> Self {
        Digest(fnv1a(tag.as_bytes()))
    }

    pub fn u64(mut self, v: u64) -> Self {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
        self
    }

    pub fn u32(self, v: u32) -> Self {
        self.u64(v as u64)
    }

    pub fn u8(self, v: u8) -> Self {
        self.u64(v as u64)
    }

    pub fn finish(self) -> u64 {
        splitmix(self.0)
    }
}

/// Payload digest of an echo message for `(committee, slot, value)`.
pub fn echo_digest(w: CommitteeId, slot: Slot, value: Value) -> u64 {
    Digest::new("echo").u64(w).u8(slot.as_u8()).u32(value.0).finish()
}

/// Payload digest of a vote message; `kind` is 1, 2 or 3.
pub fn vote_digest(kind: u8, w: CommitteeId, slot: Slot, value: Value) -> u64 {
    Digest::new("vote")
        .u8(kind)
        .u64(w)
        .u8(slot.as_u8())
        .u32(value.0)
        .finish()
}

/// Payload digest of a recursion-output report from committee `child_w`.
pub fn report_digest(child_w: CommitteeId, value: Value) -> u64 {
    Digest::new("report").u64(child_w).u32(value.0).finish()
}

/// Payload digest of a broadcast attestation in the base-case protocol:
/// "value from origin's instance inside committee w".
pub fn base_digest(w: CommitteeId, origin: PartyId, value: Value) -> u64 {
    Digest::new("base").u64(w).u32(origin.0).u32(value.0).finish()
}
