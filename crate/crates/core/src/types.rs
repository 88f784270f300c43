//! Shared domain primitives: party identifiers, protocol values, committee
//! labels and the GBA slot tag used to separate the two per-level instances.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Index of a party in `[0, n)`. Stable for the whole run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct PartyId(pub u32);

impl PartyId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// An input/decision value drawn from a small configured domain.
///
/// Values fit in a single signature-sized unit, so a bare value always
/// accounts for one kappa unit on the wire.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct Value(pub u32);

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 < 26 {
            write!(f, "{}", (b'A' + self.0 as u8) as char)
        } else {
            write!(f, "v{}", self.0)
        }
    }
}

/// Committee label following the halving scheme: committee 1 is everyone,
/// committee `2w` is the first half of `w`, committee `2w+1` the second half.
pub type CommitteeId = u64;

/// Synchronous round counter, 1-based.
pub type Round = u32;

/// What happens to a victim's already-fixed outbox when it is corrupted
/// mid-round. The default lets the outbox stand; the stricter mode retracts
/// it, for sensitivity analysis of the corruption-timing semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionMode {
    #[default]
    OutboxStands,
    RetractOutbox,
}

/// Which of the two graded-agreement instances inside one recursion level a
/// message belongs to (the instance before the first half's recursive call,
/// or the one before the second half's).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Slot {
    A,
    B,
}

impl Slot {
    pub fn as_u8(self) -> u8 {
        match self {
            Slot::A => 0,
            Slot::B => 1,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::A => write!(f, "A"),
            Slot::B => write!(f, "B"),
        }
    }
}
