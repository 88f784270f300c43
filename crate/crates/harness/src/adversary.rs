//! Adversary strategy library.
//!
//! Each strategy targets a specific proof obstacle of the protocols:
//!
//! * `passive` — never corrupts; the baseline.
//! * `crash` — corrupts listed parties at a round and stays silent.
//! * `echo-equivocator` — corrupted parties echo one value to half of each
//!   committee and another to the rest.
//! * `half-corruptor` — grabs as much of the first (or second) half as the
//!   budget allows at round 1; the victims babble seeded random protocol
//!   messages and occasional garbage for the rest of the run.
//! * `cert-suppressor` — victims run the honest protocol via replicas but
//!   never forward or propagate certificates.
//! * `rushing-splitter` — after seeing a round's honest messages, completes
//!   quorums with its own votes for a single target party only.
//! * `grade-splitter` — steers some honest parties to grade 1 and others to
//!   grade 0 on the same value, which the graded-agreement contract allows.
//!
//! The strategy space makes no claim of exhausting the adversary space; it
//! covers the cases the safety arguments have to survive.

use crate::config::{AdversarySpec, ConfigError};
use basim_core::digest;
use basim_core::msg::Payload;
use basim_core::rba::{Action, Params};
use basim_core::simnet::{AdvCtx, Adversary, Passive, SimError};
use basim_core::types::{PartyId, Round, Slot, Value};
use rand_core::RngCore;
use std::collections::BTreeMap;

/// Builds a strategy from its spec. Unknown names or parameters are
/// configuration errors, caught before any simulation starts.
pub fn build_adversary(
    spec: &AdversarySpec,
    params: &Params,
) -> Result<Box<dyn Adversary + Send>, ConfigError> {
    let get_u32 = |key: &str, default: u32| -> Result<u32, ConfigError> {
        match spec.params.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError::BadAdversaryParam(format!("{key}={v}"))),
        }
    };
    let known = |keys: &[&str]| -> Result<(), ConfigError> {
        for k in spec.params.keys() {
            if !keys.contains(&k.as_str()) {
                return Err(ConfigError::BadAdversaryParam(k.clone()));
            }
        }
        Ok(())
    };
    match spec.name.as_str() {
        "passive" => {
            known(&[])?;
            Ok(Box::new(Passive))
        }
        "crash" => {
            known(&["round", "count"])?;
            let round = get_u32("round", 1)?;
            let count = get_u32("count", params.f)?.min(params.f);
            Ok(Box::new(Crash {
                round,
                victims: (0..count).map(PartyId).collect(),
            }))
        }
        "echo-equivocator" => {
            known(&["count"])?;
            let count = get_u32("count", params.f)?.min(params.f);
            Ok(Box::new(EchoEquivocator {
                victims: (0..count).map(PartyId).collect(),
            }))
        }
        "half-corruptor" => {
            known(&["half"])?;
            let half = match spec.params.get("half").map(String::as_str) {
                None | Some("first") => 2,
                Some("second") => 3,
                Some(other) => {
                    return Err(ConfigError::BadAdversaryParam(format!("half={other}")))
                }
            };
            Ok(Box::new(HalfCorruptor { half_w: half }))
        }
        "cert-suppressor" => {
            known(&[])?;
            Ok(Box::new(CertSuppressor {
                replicas: BTreeMap::new(),
            }))
        }
        "rushing-splitter" => {
            known(&[])?;
            Ok(Box::new(QuorumSplitter::rushing()))
        }
        "grade-splitter" => {
            known(&[])?;
            Ok(Box::new(QuorumSplitter::grade()))
        }
        other => Err(ConfigError::UnknownAdversary(other.to_string())),
    }
}

struct Crash {
    round: Round,
    victims: Vec<PartyId>,
}

impl Adversary for Crash {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        if ctx.round() == self.round {
            for &p in &self.victims {
                ctx.corrupt(p)?;
            }
        }
        Ok(())
    }
}

/// Active graded-agreement instances whose echo/vote rounds fall on the
/// current global round.
fn gba_rounds_now(ctx: &AdvCtx<'_>) -> Vec<(u64, Slot, Round)> {
    ctx.plan()
        .schedule
        .at(ctx.round())
        .iter()
        .filter_map(|a| match a {
            Action::GbaRound { w, slot, local } => Some((*w, *slot, *local)),
            _ => None,
        })
        .collect()
}

struct EchoEquivocator {
    victims: Vec<PartyId>,
}

impl Adversary for EchoEquivocator {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        if ctx.round() == 1 {
            for &p in &self.victims {
                ctx.corrupt(p)?;
            }
        }
        for (w, slot, local) in gba_rounds_now(ctx) {
            if local != 1 {
                continue;
            }
            let members = ctx.plan().committee(w).members.as_ref().clone();
            let mid = members.len().div_ceil(2);
            let (first, second) = members.split_at(mid);
            let (first, second) = (first.to_vec(), second.to_vec());
            for &p in &self.victims.clone() {
                if !members.contains(&p) {
                    continue;
                }
                for (value, recipients) in [(Value(0), &first), (Value(1), &second)] {
                    if recipients.is_empty() {
                        continue;
                    }
                    let sig = ctx.sign_as(p, digest::echo_digest(w, slot, value))?;
                    ctx.send(
                        p,
                        recipients.clone(),
                        Payload::Echo { w, slot, value, sig },
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Corrupts one recursion half wholesale and babbles from it.
struct HalfCorruptor {
    half_w: u64,
}

impl Adversary for HalfCorruptor {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        if ctx.round() == 1 {
            let members: Vec<PartyId> = if ctx.plan().committees.contains_key(&self.half_w) {
                ctx.plan().committee(self.half_w).members.as_ref().clone()
            } else {
                ctx.plan().committee(1).members.as_ref().clone()
            };
            let budget = ctx.budget_left() as usize;
            for &p in members.iter().take(budget) {
                ctx.corrupt(p)?;
            }
        }

        let committees: Vec<u64> = ctx
            .plan()
            .committees
            .iter()
            .filter(|(_, info)| !info.is_base)
            .map(|(w, _)| *w)
            .collect();
        let domain = ctx.plan().params.domain;
        for p in ctx.corrupted().into_iter().collect::<Vec<_>>() {
            if ctx.rng().next_u64() % 2 != 0 {
                continue;
            }
            let value = Value((ctx.rng().next_u64() % domain as u64) as u32);
            // Pick an instance this victim belongs to, if any.
            let mine: Vec<u64> = committees
                .iter()
                .copied()
                .filter(|w| ctx.plan().committee(*w).members.binary_search(&p).is_ok())
                .collect();
            if mine.is_empty() {
                continue;
            }
            let w = mine[(ctx.rng().next_u64() % mine.len() as u64) as usize];
            let slot = if ctx.rng().next_u64() % 2 == 0 { Slot::A } else { Slot::B };
            let members = ctx.plan().committee(w).members.as_ref().clone();
            let mut recipients = Vec::new();
            for &m in &members {
                if ctx.rng().next_u64() % 2 == 0 {
                    recipients.push(m);
                }
            }
            if recipients.is_empty() {
                recipients.push(members[(ctx.rng().next_u64() % members.len() as u64) as usize]);
            }
            let kind = ctx.rng().next_u64() % 5;
            let payload = match kind {
                0 => {
                    let sig = ctx.sign_as(p, digest::echo_digest(w, slot, value))?;
                    Payload::Echo { w, slot, value, sig }
                }
                1..=3 => {
                    let stage = kind as u8;
                    let sig = ctx.sign_as(p, digest::vote_digest(stage, w, slot, value))?;
                    Payload::Vote { stage, w, slot, value, sig }
                }
                _ => {
                    // Garbage: the signature does not match the payload and
                    // recipients must drop it.
                    let sig = ctx.sign_as(p, digest::echo_digest(w, slot, Value(value.0 ^ 1)))?;
                    Payload::Echo { w, slot, value, sig }
                }
            };
            ctx.send(p, recipients, payload)?;
        }
        Ok(())
    }
}

/// Runs honest replicas for its victims and filters certificate traffic out
/// of their outboxes.
struct CertSuppressor {
    replicas: BTreeMap<PartyId, basim_core::rba::ProtocolParty>,
}

impl Adversary for CertSuppressor {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        let round = ctx.round();
        if round == 1 {
            for i in 0..ctx.plan().params.f {
                let p = PartyId(i);
                ctx.corrupt(p)?;
                let replica = ctx.replica(p, ctx.inputs()[p.idx()])?;
                self.replicas.insert(p, replica);
            }
            // Round 1 was already sent honestly before corruption took
            // effect; advance the replicas without emitting.
            for replica in self.replicas.values_mut() {
                let _ = replica.step(1, &[]);
            }
            return Ok(());
        }
        for (&p, replica) in self.replicas.iter_mut() {
            let inbox = ctx.inbox_of(p, round - 1);
            for out in replica.step(round, &inbox) {
                if matches!(out.payload, Payload::Cert(_)) {
                    continue;
                }
                ctx.send(p, out.recipients, out.payload)?;
            }
        }
        Ok(())
    }
}

/// Completes quorums selectively so that only a chosen slice of the honest
/// parties crosses each certificate threshold.
///
/// In rushing mode the slice is a single party; in grade mode the echo,
/// vote-1 and vote-2 target slices shrink progressively so that everyone
/// learns the vote-1 certificate but only a few assemble the vote-2 quorum,
/// splitting the grade bits over one value.
struct QuorumSplitter {
    single_target: bool,
    send_vote2: bool,
    chosen: BTreeMap<(u64, Slot), Value>,
}

impl QuorumSplitter {
    fn rushing() -> Self {
        QuorumSplitter {
            single_target: true,
            send_vote2: false,
            chosen: BTreeMap::new(),
        }
    }

    fn grade() -> Self {
        QuorumSplitter {
            single_target: false,
            send_vote2: true,
            chosen: BTreeMap::new(),
        }
    }

    /// Honest value counts for a message kind of one instance, read off the
    /// rushing view.
    fn honest_counts(
        ctx: &AdvCtx<'_>,
        w: u64,
        slot: Slot,
        want_stage: Option<u8>,
    ) -> BTreeMap<Value, u32> {
        let mut counts = BTreeMap::new();
        for e in ctx.honest_sends() {
            let value = match (&e.payload, want_stage) {
                (Payload::Echo { w: ew, slot: es, value, .. }, None)
                    if *ew == w && *es == slot =>
                {
                    *value
                }
                (Payload::Vote { stage, w: vw, slot: vs, value, .. }, Some(want))
                    if *vw == w && *vs == slot && *stage == want =>
                {
                    *value
                }
                _ => continue,
            };
            *counts.entry(value).or_insert(0) += 1;
        }
        counts
    }

    fn pick_value(counts: &BTreeMap<Value, u32>) -> Option<Value> {
        counts
            .iter()
            .max_by_key(|(v, c)| (**c, std::cmp::Reverse(**v)))
            .map(|(v, _)| *v)
    }
}

impl Adversary for QuorumSplitter {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        if ctx.round() == 1 {
            let n = ctx.plan().params.n;
            for i in 0..ctx.plan().params.f {
                ctx.corrupt(PartyId(n - 1 - i))?;
            }
        }
        let corrupted = ctx.corrupted();
        for (w, slot, local) in gba_rounds_now(ctx) {
            let info = ctx.plan().committee(w);
            let members = info.members.as_ref().clone();
            let quorum = info.quorum;
            let mine: Vec<PartyId> = members
                .iter()
                .copied()
                .filter(|p| corrupted.contains(p))
                .collect();
            let honest: Vec<PartyId> = members
                .iter()
                .copied()
                .filter(|p| !corrupted.contains(p))
                .collect();
            if mine.is_empty() || honest.is_empty() {
                continue;
            }
            let have = mine.len() as u32;
            match local {
                1 => {
                    // Give just enough honest parties an echo quorum that a
                    // vote-1 certificate stays reachable with our help.
                    let counts = Self::honest_counts(ctx, w, slot, None);
                    let Some(value) = Self::pick_value(&counts) else { continue };
                    self.chosen.insert((w, slot), value);
                    let need = quorum.saturating_sub(have).max(1) as usize;
                    let targets: Vec<PartyId> =
                        honest.iter().copied().take(need.min(honest.len())).collect();
                    for &p in &mine {
                        let sig = ctx.sign_as(p, digest::echo_digest(w, slot, value))?;
                        ctx.send(p, targets.clone(), Payload::Echo { w, slot, value, sig })?;
                    }
                }
                3 => {
                    let counts = Self::honest_counts(ctx, w, slot, Some(1));
                    let value = match Self::pick_value(&counts) {
                        Some(v) => v,
                        None => match self.chosen.get(&(w, slot)) {
                            Some(v) => *v,
                            None => continue,
                        },
                    };
                    let targets: Vec<PartyId> = if self.single_target {
                        vec![honest[0]]
                    } else {
                        honest.iter().copied().take((honest.len() / 2).max(1)).collect()
                    };
                    for &p in &mine {
                        let sig = ctx.sign_as(p, digest::vote_digest(1, w, slot, value))?;
                        ctx.send(
                            p,
                            targets.clone(),
                            Payload::Vote { stage: 1, w, slot, value, sig },
                        )?;
                    }
                }
                4 if self.send_vote2 => {
                    let Some(&value) = self.chosen.get(&(w, slot)) else { continue };
                    let targets: Vec<PartyId> =
                        honest.iter().copied().take((honest.len() / 4).max(1)).collect();
                    for &p in &mine {
                        let sig = ctx.sign_as(p, digest::vote_digest(2, w, slot, value))?;
                        ctx.send(
                            p,
                            targets.clone(),
                            Payload::Vote { stage: 2, w, slot, value, sig },
                        )?;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Scripted per-round, per-recipient equivocation in the base-case
/// protocol's broadcast instances, used to enumerate small-case adversary
/// grids exhaustively.
pub struct BaseGrid {
    /// The corrupted origin whose instance is scripted.
    pub origin: PartyId,
    /// `choices[r][h]`: what the origin sends to honest party `h` while
    /// processing round `r + 1` (`None` = silence).
    pub choices: Vec<Vec<Option<Value>>>,
}

impl Adversary for BaseGrid {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        let round = ctx.round();
        if round == 1 {
            ctx.corrupt(self.origin)?;
        }
        let Some(row) = self.choices.get(round as usize - 1) else {
            return Ok(());
        };
        let row = row.clone();
        for (h, choice) in row.into_iter().enumerate() {
            let Some(value) = choice else { continue };
            let target = PartyId(h as u32);
            if target == self.origin {
                continue;
            }
            if round == 1 {
                let sig = ctx.sign_as(self.origin, digest::base_digest(1, self.origin, value))?;
                ctx.send(
                    self.origin,
                    vec![target],
                    Payload::BaseSet {
                        w: 1,
                        origin: self.origin,
                        value,
                        sigs: std::sync::Arc::new(vec![sig]),
                    },
                )?;
            } else {
                // Later rounds can only extend what honest parties already
                // attested: forward the first sufficiently long honest set
                // for this value, if one exists in the rushing view.
                let found = ctx.honest_sends().iter().find_map(|e| match &e.payload {
                    Payload::BaseSet { w: 1, origin, value: v, sigs }
                        if *origin == self.origin
                            && *v == value
                            && sigs.len() as u32 >= round =>
                    {
                        Some(sigs.clone())
                    }
                    _ => None,
                });
                if let Some(sigs) = found {
                    ctx.send(
                        self.origin,
                        vec![target],
                        Payload::BaseSet {
                            w: 1,
                            origin: self.origin,
                            value,
                            sigs,
                        },
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// True when the named strategy exists; used to validate configs early.
pub fn adversary_names() -> &'static [&'static str] {
    &[
        "passive",
        "crash",
        "echo-equivocator",
        "half-corruptor",
        "cert-suppressor",
        "rushing-splitter",
        "grade-splitter",
    ]
}
