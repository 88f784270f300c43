//! Library and deterministic synchronous-network simulator for two
//! quadratic-communication Byzantine agreement protocols: a recursive
//! agreement framework instantiated with a threshold-signature graded
//! agreement (minority faults) and with an expander-gossip graded agreement
//! (minority minus an epsilon fraction, no trusted setup).
//!
//! The crate is organized around the run pipeline:
//!
//! * [`crypto`] — ideal signatures, threshold groups, kappa accounting.
//! * [`expander`] — constant-degree gossip graphs from random matchings.
//! * [`gba`] — the two graded-agreement round machines.
//! * [`rba`] — committee layout, round schedule, base-case agreement and
//!   the per-party orchestrator.
//! * [`simnet`] — the lock-step network, adversary contract, transcript
//!   recording and the agreement/certificate checkers.

pub mod crypto;
pub mod digest;
pub mod expander;
pub mod gba;
pub mod msg;
pub mod rba;
pub mod simnet;
pub mod types;

pub use rba::{Params, ProtocolKind, RunPlan};
pub use simnet::{run, Adversary, Transcript};
pub use types::{CorruptionMode, PartyId, Round, Slot, Value};
