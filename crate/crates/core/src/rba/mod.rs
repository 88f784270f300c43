//! The recursive agreement orchestrator and everything parties need to run
//! it: committee layout, the per-run plan (keys, gossip graphs, schedule),
//! and the party state machine that dispatches rounds to embedded
//! graded-agreement, recursive and base-case instances.
//!
//! Each recursion level runs graded agreement, lets its first half recurse
//! and report, adopts the majority report unless the grade bit is set,
//! repeats the same with the second half, and outputs the surviving value.

mod base;
mod schedule;

pub use base::{base_rounds, BaseInstance};
pub use schedule::{total_rounds, Action, Schedule};

use crate::crypto::{self, Keystore};
use crate::digest::{self, mix};
use crate::expander::{self, ExpanderGraph, Verification};
use crate::gba::{GbaConfig, GbaInstance, GbaVariant};
use crate::msg::{Delivery, Outgoing, Payload};
use crate::types::{CommitteeId, CorruptionMode, PartyId, Round, Slot, Value};
use schedule::ScheduleBuilder;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    /// Recursive agreement over the aggregating graded-agreement variant.
    RbaTs,
    /// Recursive agreement over the gossip graded-agreement variant.
    RbaExp,
    /// A single aggregating graded-agreement instance.
    GbaTs,
    /// A single gossip graded-agreement instance.
    GbaExp,
    /// The base-case agreement on its own.
    BaseBa,
}

impl ProtocolKind {
    pub fn variant(self) -> Option<GbaVariant> {
        match self {
            ProtocolKind::RbaTs | ProtocolKind::GbaTs => Some(GbaVariant::Ts),
            ProtocolKind::RbaExp | ProtocolKind::GbaExp => Some(GbaVariant::Exp),
            ProtocolKind::BaseBa => None,
        }
    }

    pub fn is_recursive(self) -> bool {
        matches!(self, ProtocolKind::RbaTs | ProtocolKind::RbaExp)
    }

    pub fn is_standalone_gba(self) -> bool {
        matches!(self, ProtocolKind::GbaTs | ProtocolKind::GbaExp)
    }

    pub fn label(self) -> &'static str {
        match self {
            ProtocolKind::RbaTs => "rba-ts",
            ProtocolKind::RbaExp => "rba-exp",
            ProtocolKind::GbaTs => "gba-ts",
            ProtocolKind::GbaExp => "gba-exp",
            ProtocolKind::BaseBa => "base-ba",
        }
    }
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Static run parameters. `f` is the adversary's corruption budget; the
/// per-committee fault tolerance each instance is engineered for follows
/// from the variant and committee size alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub protocol: ProtocolKind,
    pub n: u32,
    pub f: u32,
    pub epsilon: Option<f64>,
    pub m: u32,
    pub domain: u32,
    pub corruption_mode: CorruptionMode,
}

#[derive(Debug, Error, PartialEq)]
pub enum RbaError {
    #[error("committee label must be positive")]
    BadLabel,
    #[error("committee {0} is empty (label addresses below a leaf)")]
    EmptyCommittee(CommitteeId),
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("need at least one party")]
    NoParties,
    #[error("value domain must have at least two values")]
    BadDomain,
    #[error("base-case threshold must be at least 1")]
    BadBaseThreshold,
    #[error("corruption budget f={f} must be below n={n}")]
    FaultBudget { f: u32, n: u32 },
    #[error("gossip variant requires epsilon")]
    EpsilonRequired,
    #[error("epsilon {0} outside (0, 1/4]")]
    EpsilonOutOfRange(f64),
    #[error("expander construction failed: {0}")]
    Expander(#[from] expander::ExpanderError),
}

/// Members of committee `w` among `n` parties: committee 1 is `[0, n)`,
/// committee `2w` the first `ceil(|w|/2)` members of `w`, committee `2w+1`
/// the rest. Order is inherited from the parent.
pub fn committee_members(w: CommitteeId, n: u32) -> Result<Vec<PartyId>, RbaError> {
    let (lo, len) = committee_span(w, n)?;
    Ok((lo..lo + len).map(PartyId).collect())
}

fn committee_span(w: CommitteeId, n: u32) -> Result<(u32, u32), RbaError> {
    if w == 0 {
        return Err(RbaError::BadLabel);
    }
    let mut lo = 0u32;
    let mut len = n;
    let depth = 63 - w.leading_zeros() as u64;
    for i in (0..depth).rev() {
        if len == 0 {
            return Err(RbaError::EmptyCommittee(w));
        }
        let first = len.div_ceil(2);
        if (w >> i) & 1 == 0 {
            len = first;
        } else {
            lo += first;
            len -= first;
        }
    }
    if len == 0 {
        return Err(RbaError::EmptyCommittee(w));
    }
    Ok((lo, len))
}

/// A value reported by more than half of `half`'s members, if one exists.
/// Duplicate reports per signer must already be collapsed (the tally keeps
/// the first verified report per sender).
pub fn majority_value(
    reports: &BTreeMap<PartyId, Value>,
    half: &[PartyId],
) -> Option<Value> {
    let mut counts: BTreeMap<Value, usize> = BTreeMap::new();
    for (p, v) in reports {
        if half.binary_search(p).is_ok() {
            *counts.entry(*v).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .find(|(_, c)| c * 2 > half.len())
        .map(|(v, _)| v)
}

/// Per-committee derived facts.
#[derive(Debug, Clone)]
pub struct CommitteeInfo {
    pub members: Arc<Vec<PartyId>>,
    /// Faults this committee's instances are engineered to tolerate.
    pub f: u32,
    pub quorum: u32,
    pub is_base: bool,
}

impl CommitteeInfo {
    pub fn size(&self) -> u32 {
        self.members.len() as u32
    }
}

/// How a committee gossip graph was built and checked.
#[derive(Debug, Clone, Serialize)]
pub struct ExpanderBuild {
    pub w: CommitteeId,
    pub n: u32,
    pub degree: u32,
    pub retries: u32,
    pub verified: Verification,
}

/// A party's record of one embedded graded-agreement outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GbaOutcome {
    pub w: CommitteeId,
    pub slot: Slot,
    pub party: PartyId,
    pub value: Value,
    pub grade: bool,
}

/// Everything derived from the parameters and seed before round 1: committee
/// tree, trusted-setup keys and groups, predetermined gossip graphs, and the
/// static schedule. Shared read-only by all parties.
#[derive(Debug)]
pub struct RunPlan {
    pub params: Params,
    pub seed: u64,
    pub committees: BTreeMap<CommitteeId, CommitteeInfo>,
    pub schedule: Arc<Schedule>,
    pub graphs: BTreeMap<CommitteeId, Arc<ExpanderGraph>>,
    pub expander_builds: Vec<ExpanderBuild>,
    /// Nominal gossip fan-out bound for the configured epsilon.
    pub degree_bound: Option<u32>,
    pub(crate) keystore: Arc<Keystore>,
}

fn committee_fault_bound(kind: ProtocolKind, size: u32, epsilon: Option<f64>) -> u32 {
    match kind.variant() {
        Some(GbaVariant::Exp) => {
            let eps = epsilon.expect("validated");
            ((0.5 - eps) * size as f64).floor() as u32
        }
        _ => size.saturating_sub(1) / 2,
    }
}

impl RunPlan {
    pub fn new(params: Params, seed: u64) -> Result<Arc<Self>, PlanError> {
        if params.n == 0 {
            return Err(PlanError::NoParties);
        }
        if params.domain < 2 {
            return Err(PlanError::BadDomain);
        }
        if params.m == 0 {
            return Err(PlanError::BadBaseThreshold);
        }
        if params.f >= params.n {
            return Err(PlanError::FaultBudget { f: params.f, n: params.n });
        }
        let variant = params.protocol.variant();
        if variant == Some(GbaVariant::Exp) {
            match params.epsilon {
                None => return Err(PlanError::EpsilonRequired),
                Some(e) if !(e > 0.0 && e <= 0.25) => {
                    return Err(PlanError::EpsilonOutOfRange(e))
                }
                _ => {}
            }
        }

        let mut committees = BTreeMap::new();
        collect_committees(&params, 1, &mut committees).map_err(|_| PlanError::NoParties)?;

        let mut keystore = Keystore::new(mix(seed, 0x5e7), params.n);
        if variant == Some(GbaVariant::Ts) {
            for (w, info) in &committees {
                if !info.is_base {
                    keystore.add_group(*w, info.members.iter().copied(), info.quorum);
                }
            }
        }

        let mut graphs = BTreeMap::new();
        let mut expander_builds = Vec::new();
        if variant == Some(GbaVariant::Exp) {
            let eps = params.epsilon.expect("validated");
            for (w, info) in &committees {
                if !info.is_base {
                    let out = expander::build(info.size(), eps, mix(seed, 0x9a11 ^ w))?;
                    expander_builds.push(ExpanderBuild {
                        w: *w,
                        n: info.size(),
                        degree: out.graph.degree,
                        retries: out.retries,
                        verified: out.verified,
                    });
                    graphs.insert(*w, Arc::new(out.graph));
                }
            }
        }

        let degree_bound = match variant {
            Some(GbaVariant::Exp) => Some(expander::min_degree(params.epsilon.expect("validated"))?),
            _ => None,
        };

        let g = variant.map(GbaVariant::rounds).unwrap_or(0);
        let schedule = build_schedule(&params, g);

        Ok(Arc::new(RunPlan {
            params,
            seed,
            committees,
            schedule: Arc::new(schedule),
            graphs,
            expander_builds,
            degree_bound,
            keystore: Arc::new(keystore),
        }))
    }

    pub fn committee(&self, w: CommitteeId) -> &CommitteeInfo {
        &self.committees[&w]
    }

    pub fn total_rounds(&self) -> Round {
        self.schedule.total_rounds
    }

    pub(crate) fn make_party(self: &Arc<Self>, me: PartyId, input: Value) -> ProtocolParty {
        ProtocolParty {
            me,
            plan: Arc::clone(self),
            input,
            nodes: BTreeMap::new(),
            gbas: BTreeMap::new(),
            bases: BTreeMap::new(),
            child_out: BTreeMap::new(),
            decision: None,
            events: Vec::new(),
            dropped: 0,
        }
    }
}

fn collect_committees(
    params: &Params,
    w: CommitteeId,
    out: &mut BTreeMap<CommitteeId, CommitteeInfo>,
) -> Result<(), RbaError> {
    let members = Arc::new(committee_members(w, params.n)?);
    let size = members.len() as u32;
    let is_base = match params.protocol {
        ProtocolKind::BaseBa => true,
        ProtocolKind::GbaTs | ProtocolKind::GbaExp => false,
        _ => size <= params.m,
    };
    let f = committee_fault_bound(params.protocol, size, params.epsilon);
    out.insert(
        w,
        CommitteeInfo {
            members,
            f,
            quorum: size - f,
            is_base,
        },
    );
    if params.protocol.is_recursive() && !is_base {
        collect_committees(params, 2 * w, out)?;
        collect_committees(params, 2 * w + 1, out)?;
    }
    Ok(())
}

fn build_schedule(params: &Params, g: Round) -> Schedule {
    match params.protocol {
        ProtocolKind::RbaTs | ProtocolKind::RbaExp => {
            let mut builder = ScheduleBuilder {
                m: params.m,
                g,
                actions: Vec::new(),
            };
            let len = builder.layout(1, params.n, 0);
            let finish = if params.n <= params.m {
                vec![Action::BaseFinish { w: 1 }]
            } else {
                vec![Action::RbaFinish { w: 1 }]
            };
            debug_assert_eq!(len as u32, total_rounds(params.n, params.m, g));
            Schedule {
                total_rounds: len as Round,
                actions: builder.actions,
                finish_actions: finish,
            }
        }
        ProtocolKind::GbaTs | ProtocolKind::GbaExp => {
            let actions = (1..=g)
                .map(|local| vec![Action::GbaRound { w: 1, slot: Slot::A, local }])
                .collect();
            Schedule {
                total_rounds: g,
                actions,
                finish_actions: vec![Action::GbaFinish { w: 1, slot: Slot::A }],
            }
        }
        ProtocolKind::BaseBa => {
            let rounds = base_rounds(params.n);
            let actions = (1..=rounds)
                .map(|local| vec![Action::BaseRound { w: 1, local }])
                .collect();
            Schedule {
                total_rounds: rounds,
                actions,
                finish_actions: vec![Action::BaseFinish { w: 1 }],
            }
        }
    }
}

struct NodeState {
    v: Value,
    g: bool,
}

/// One party's full protocol state: the recursion node values and grade
/// bits, plus every embedded instance it participates in.
pub struct ProtocolParty {
    me: PartyId,
    plan: Arc<RunPlan>,
    input: Value,
    nodes: BTreeMap<CommitteeId, NodeState>,
    gbas: BTreeMap<(CommitteeId, Slot), GbaInstance>,
    bases: BTreeMap<CommitteeId, BaseInstance>,
    child_out: BTreeMap<CommitteeId, Value>,
    decision: Option<Value>,
    events: Vec<GbaOutcome>,
    dropped: u64,
}

impl ProtocolParty {
    pub fn me(&self) -> PartyId {
        self.me
    }

    pub fn input(&self) -> Value {
        self.input
    }

    pub fn decision(&self) -> Option<Value> {
        self.decision
    }

    /// Messages dropped for failing verification, across all instances.
    pub fn dropped(&self) -> u64 {
        self.dropped
            + self.gbas.values().map(GbaInstance::dropped).sum::<u64>()
            + self.bases.values().map(BaseInstance::dropped).sum::<u64>()
    }

    pub fn drain_events(&mut self) -> Vec<GbaOutcome> {
        std::mem::take(&mut self.events)
    }

    fn member_of(&self, w: CommitteeId) -> bool {
        self.plan.committee(w).members.binary_search(&self.me).is_ok()
    }

    fn ensure_node(&mut self, w: CommitteeId) {
        if !self.nodes.contains_key(&w) {
            let v = if w == 1 {
                self.input
            } else {
                self.nodes[&(w / 2)].v
            };
            self.nodes.insert(w, NodeState { v, g: false });
        }
    }

    /// Runs one global round. `inbox` holds everything delivered at the end
    /// of the previous round.
    pub fn step(&mut self, round: Round, inbox: &[Delivery]) -> Vec<Outgoing> {
        let schedule = Arc::clone(&self.plan.schedule);
        let mut out = Vec::new();
        for action in schedule.at(round) {
            self.run_action(*action, inbox, &mut out);
        }
        out
    }

    /// Consumes the final round's deliveries and fixes the decision.
    pub fn finish(&mut self, inbox: &[Delivery]) {
        let schedule = Arc::clone(&self.plan.schedule);
        let mut out = Vec::new();
        for action in &schedule.finish_actions {
            self.run_action(*action, inbox, &mut out);
        }
        debug_assert!(out.is_empty(), "finish actions never send");
    }

    fn run_action(&mut self, action: Action, inbox: &[Delivery], out: &mut Vec<Outgoing>) {
        match action {
            Action::GbaRound { w, slot, local } => {
                if !self.member_of(w) {
                    return;
                }
                if local == 1 {
                    self.ensure_node(w);
                    let info = self.plan.committee(w);
                    let cfg = GbaConfig {
                        w,
                        slot,
                        variant: self.plan.params.protocol.variant().expect("gba protocol"),
                        members: Arc::clone(&info.members),
                        f: info.f,
                        quorum: info.quorum,
                        graph: self.plan.graphs.get(&w).cloned(),
                    };
                    let inst =
                        GbaInstance::new(cfg, Arc::clone(&self.plan.keystore), self.me, self.nodes[&w].v)
                            .expect("member with matching graph");
                    self.gbas.insert((w, slot), inst);
                }
                let inst = self.gbas.get_mut(&(w, slot)).expect("instance created at round 1");
                out.extend(inst.round(local, inbox).expect("schedule keeps rounds ordered"));
            }
            Action::GbaFinish { w, slot } => {
                if !self.member_of(w) {
                    return;
                }
                let inst = self.gbas.get_mut(&(w, slot)).expect("instance exists");
                let (v, g) = inst.finish(inbox).expect("all rounds consumed");
                let node = self.nodes.get_mut(&w).expect("node exists");
                node.v = v;
                node.g = g;
                self.events.push(GbaOutcome {
                    w,
                    slot,
                    party: self.me,
                    value: v,
                    grade: g,
                });
                if self.plan.params.protocol.is_standalone_gba() && w == 1 {
                    self.decision = Some(v);
                }
            }
            Action::BaseRound { w, local } => {
                if !self.member_of(w) {
                    return;
                }
                if local == 1 {
                    let input = if w == 1 {
                        self.input
                    } else {
                        self.nodes[&(w / 2)].v
                    };
                    let inst = BaseInstance::new(
                        w,
                        Arc::clone(&self.plan.committee(w).members),
                        self.me,
                        input,
                        Arc::clone(&self.plan.keystore),
                    );
                    self.bases.insert(w, inst);
                }
                let inst = self.bases.get_mut(&w).expect("instance created at round 1");
                out.extend(inst.round(local, inbox));
            }
            Action::BaseFinish { w } => {
                if !self.member_of(w) {
                    return;
                }
                let inst = self.bases.get_mut(&w).expect("instance exists");
                let dec = inst.finish(inbox);
                if w == 1 {
                    self.decision = Some(dec);
                } else {
                    self.child_out.insert(w, dec);
                }
            }
            Action::RbaFinish { w } => {
                if !self.member_of(w) {
                    return;
                }
                self.adopt(w, 2 * w + 1, inbox);
                let dec = self.nodes[&w].v;
                if w == 1 {
                    self.decision = Some(dec);
                } else {
                    self.child_out.insert(w, dec);
                }
            }
            Action::AdoptFirst { w } => {
                if !self.member_of(w) {
                    return;
                }
                self.adopt(w, 2 * w, inbox);
            }
            Action::Report { child_w } => {
                if !self.member_of(child_w) {
                    return;
                }
                let value = self.child_out[&child_w];
                let sig = crypto::sign_digest(
                    self.me,
                    digest::report_digest(child_w, value),
                    &self.plan.keystore,
                )
                .expect("member key exists");
                let parent = self.plan.committee(child_w / 2);
                out.push(Outgoing {
                    recipients: parent.members.as_ref().clone(),
                    payload: Payload::Report {
                        child_w,
                        value,
                        sig,
                    },
                });
            }
        }
    }

    /// Sets the node value to the half's majority report unless this party
    /// already carries a raised grade bit from the preceding instance.
    fn adopt(&mut self, w: CommitteeId, child_w: CommitteeId, inbox: &[Delivery]) {
        let reports = self.tally_reports(child_w, inbox);
        let half = self.plan.committee(child_w);
        let majority = majority_value(&reports, &half.members);
        let node = self.nodes.get_mut(&w).expect("node exists");
        if let Some(v) = majority {
            if !node.g {
                node.v = v;
            }
        }
    }

    /// First verified report per signer wins; later duplicates are ignored.
    fn tally_reports(&mut self, child_w: CommitteeId, inbox: &[Delivery]) -> BTreeMap<PartyId, Value> {
        let members = Arc::clone(&self.plan.committee(child_w).members);
        let mut reports = BTreeMap::new();
        for d in inbox {
            let Payload::Report { child_w: cw, value, sig } = &d.payload else {
                continue;
            };
            if *cw != child_w {
                continue;
            }
            let valid = sig.digest == digest::report_digest(*cw, *value)
                && members.binary_search(&sig.signer).is_ok()
                && crypto::verify(sig, &self.plan.keystore);
            if valid {
                reports.entry(sig.signer).or_insert(*value);
            } else {
                self.dropped += 1;
            }
        }
        reports
    }
}
