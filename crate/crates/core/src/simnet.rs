//! Deterministic lock-step synchronous network.
//!
//! Every round proceeds as: honest parties fix their outboxes, then the
//! adversary sees those outboxes (rushing) and may corrupt parties within
//! its budget and send as already-corrupted ones, then everything sent in
//! the round lands in the recipients' inboxes for the next round. Inboxes
//! are sorted by `(sender, payload digest)` so protocol logic cannot depend
//! on arrival order, and the whole run is a pure function of the seed.
//!
//! The transcript records every envelope, corruption and decision, carries
//! kappa accounting, and serializes to versioned JSON lines.

use crate::crypto::{self, CryptoError, SignedMessage, ThresholdSignature};
use crate::digest::mix;
use crate::msg::{CertKind, Delivery, Evidence, Payload};
use crate::rba::{GbaOutcome, ProtocolParty, RunPlan};
use crate::types::{CommitteeId, CorruptionMode, PartyId, Round, Slot, Value};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use thiserror::Error;

pub const TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("adversary contract violation: {0}")]
    ContractViolation(String),
    #[error("bad inputs: {0}")]
    BadInputs(String),
}

/// A message in flight: sender, recipients, round, payload and per-copy
/// kappa size. `byz` marks envelopes emitted by the adversary.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub sender: PartyId,
    pub recipients: Vec<PartyId>,
    pub round: Round,
    pub payload: Payload,
    pub kappa: u32,
    pub byz: bool,
}

impl Envelope {
    /// Total cost of this envelope: one per-copy size per recipient, since a
    /// multicast is as many point-to-point sends as it has recipients.
    pub fn cost(&self) -> u64 {
        self.recipients.len() as u64 * self.kappa as u64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub version: u32,
    pub protocol: String,
    pub n: u32,
    pub f: u32,
    pub epsilon: Option<f64>,
    pub m: u32,
    pub domain: u32,
    pub seed: u64,
    pub adversary: String,
    pub inputs: Vec<Value>,
}

/// Complete record of a run. Identical seeds reproduce identical
/// transcripts, byte for byte.
#[derive(Debug, Clone)]
pub struct Transcript {
    pub header: Header,
    pub envelopes: Vec<Envelope>,
    pub corruptions: Vec<(PartyId, Round)>,
    pub gba_outputs: Vec<GbaOutcome>,
    pub decisions: Vec<Option<Value>>,
    pub decision_round: Round,
    pub total_rounds: Round,
    pub dropped: u64,
}

impl Transcript {
    pub fn corrupted(&self) -> BTreeSet<PartyId> {
        self.corruptions.iter().map(|&(p, _)| p).collect()
    }

    /// Parties that stayed honest for the whole run.
    pub fn honest(&self) -> Vec<PartyId> {
        let bad = self.corrupted();
        (0..self.header.n)
            .map(PartyId)
            .filter(|p| !bad.contains(p))
            .collect()
    }
}

#[derive(Serialize)]
struct EnvelopeRecord<'a> {
    #[serde(rename = "type")]
    ty: &'static str,
    round: Round,
    sender: PartyId,
    recipients: &'a [PartyId],
    kind: &'static str,
    w: CommitteeId,
    value: Value,
    kappa: u32,
    byz: bool,
}

#[derive(Serialize)]
struct SummaryRecord {
    #[serde(rename = "type")]
    ty: &'static str,
    honest_kappa: u64,
    envelopes: usize,
    corruptions: usize,
    dropped: u64,
    rounds: Round,
}

impl Transcript {
    /// Stable JSON-lines form: header record, one record per envelope,
    /// corruption/output/decision records, then a summary record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |v: String| {
            out.push_str(&v);
            out.push('\n');
        };
        push(format!(
            "{{\"type\":\"header\",{}}}",
            serde_json::to_string(&self.header)
                .expect("header serializes")
                .trim_start_matches('{')
                .trim_end_matches('}')
        ));
        for e in &self.envelopes {
            push(
                serde_json::to_string(&EnvelopeRecord {
                    ty: "env",
                    round: e.round,
                    sender: e.sender,
                    recipients: &e.recipients,
                    kind: e.payload.kind(),
                    w: e.payload.committee(),
                    value: e.payload.value(),
                    kappa: e.kappa,
                    byz: e.byz,
                })
                .expect("record serializes"),
            );
        }
        for &(p, r) in &self.corruptions {
            push(format!("{{\"type\":\"corrupt\",\"round\":{},\"party\":{}}}", r, p.0));
        }
        for o in &self.gba_outputs {
            push(format!(
                "{{\"type\":\"gba\",\"w\":{},\"slot\":\"{}\",\"party\":{},\"value\":{},\"grade\":{}}}",
                o.w,
                o.slot,
                o.party.0,
                o.value.0,
                u8::from(o.grade)
            ));
        }
        for (i, d) in self.decisions.iter().enumerate() {
            if let Some(v) = d {
                push(format!(
                    "{{\"type\":\"decide\",\"party\":{},\"value\":{},\"round\":{}}}",
                    i, v.0, self.decision_round
                ));
            }
        }
        push(
            serde_json::to_string(&SummaryRecord {
                ty: "summary",
                honest_kappa: comm_cost(self),
                envelopes: self.envelopes.len(),
                corruptions: self.corruptions.len(),
                dropped: self.dropped,
                rounds: self.total_rounds,
            })
            .expect("summary serializes"),
        );
        out
    }
}

/// Total kappa units sent by parties that were honest at send time;
/// adversary traffic is excluded.
pub fn comm_cost(t: &Transcript) -> u64 {
    t.envelopes.iter().filter(|e| !e.byz).map(Envelope::cost).sum()
}

/// The adversary's per-round interface. Called after the round's honest
/// outboxes are fixed, so it sees them before choosing its own messages.
pub trait Adversary {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError>;
}

/// Rushing view of one round plus buffered adversary actions. All requests
/// are validated as they are made; violations abort the run.
pub struct AdvCtx<'a> {
    round: Round,
    plan: &'a Arc<RunPlan>,
    inputs: &'a [Value],
    honest: &'a [Envelope],
    history: &'a Transcript,
    corrupted: &'a BTreeSet<PartyId>,
    rng: &'a mut ChaCha8Rng,
    pending_corrupt: Vec<PartyId>,
    pending_sends: Vec<Envelope>,
}

impl<'a> AdvCtx<'a> {
    pub fn round(&self) -> Round {
        self.round
    }

    pub fn plan(&self) -> &RunPlan {
        self.plan
    }

    pub fn inputs(&self) -> &[Value] {
        self.inputs
    }

    /// Honest envelopes already fixed for this round.
    pub fn honest_sends(&self) -> &[Envelope] {
        self.honest
    }

    /// Everything from previous rounds.
    pub fn history(&self) -> &Transcript {
        self.history
    }

    pub fn corrupted(&self) -> BTreeSet<PartyId> {
        let mut all = self.corrupted.clone();
        all.extend(self.pending_corrupt.iter().copied());
        all
    }

    pub fn budget_left(&self) -> u32 {
        self.plan.params.f - (self.corrupted.len() + self.pending_corrupt.len()) as u32
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    fn is_corrupted(&self, p: PartyId) -> bool {
        self.corrupted.contains(&p) || self.pending_corrupt.contains(&p)
    }

    /// Requests adaptive corruption of `p`, effective this round.
    pub fn corrupt(&mut self, p: PartyId) -> Result<(), SimError> {
        if p.0 >= self.plan.params.n {
            return Err(SimError::ContractViolation(format!("no such party {p}")));
        }
        if self.is_corrupted(p) {
            return Ok(());
        }
        if (self.corrupted.len() + self.pending_corrupt.len()) as u32 >= self.plan.params.f {
            return Err(SimError::ContractViolation(format!(
                "corruption budget {} exhausted",
                self.plan.params.f
            )));
        }
        self.pending_corrupt.push(p);
        Ok(())
    }

    /// Signs a payload digest as a corrupted party.
    pub fn sign_as(&self, p: PartyId, payload_digest: u64) -> Result<SignedMessage, SimError> {
        if !self.is_corrupted(p) {
            return Err(SimError::ContractViolation(format!(
                "cannot sign as honest party {p}"
            )));
        }
        crypto::sign_digest(p, payload_digest, &self.plan.keystore)
            .map_err(|e| SimError::ContractViolation(e.to_string()))
    }

    /// Aggregation is permissionless: it only succeeds over a verified
    /// quorum of shares the caller actually holds.
    pub fn aggregate(
        &self,
        shares: &[SignedMessage],
        threshold: u32,
        group: CommitteeId,
    ) -> Result<ThresholdSignature, CryptoError> {
        crypto::aggregate(shares, threshold, group, &self.plan.keystore)
    }

    /// Sends as a corrupted party this round.
    pub fn send(
        &mut self,
        sender: PartyId,
        recipients: Vec<PartyId>,
        payload: Payload,
    ) -> Result<(), SimError> {
        if !self.is_corrupted(sender) {
            return Err(SimError::ContractViolation(format!(
                "cannot send as honest party {sender}"
            )));
        }
        let mut recipients: Vec<PartyId> = recipients
            .into_iter()
            .filter(|p| p.0 < self.plan.params.n)
            .collect();
        recipients.sort_unstable();
        recipients.dedup();
        if recipients.is_empty() {
            return Err(SimError::ContractViolation("empty recipient set".into()));
        }
        let kappa = payload.kappa_units();
        self.pending_sends.push(Envelope {
            sender,
            recipients,
            round: self.round,
            payload,
            kappa,
            byz: true,
        });
        Ok(())
    }

    /// A fresh state machine for a corrupted party, for adversaries that
    /// want to mostly follow the protocol and filter what leaves it.
    pub fn replica(&self, p: PartyId, input: Value) -> Result<ProtocolParty, SimError> {
        if !self.is_corrupted(p) {
            return Err(SimError::ContractViolation(format!(
                "no replica for honest party {p}"
            )));
        }
        Ok(self.plan.make_party(p, input))
    }

    /// Deliveries party `p` received at the end of `round`, reconstructed
    /// from history with the same normalization the network applies.
    pub fn inbox_of(&self, p: PartyId, round: Round) -> Vec<Delivery> {
        let mut inbox: Vec<Delivery> = self
            .history
            .envelopes
            .iter()
            .filter(|e| e.round == round && e.recipients.binary_search(&p).is_ok())
            .map(|e| Delivery {
                sender: e.sender,
                payload: e.payload.clone(),
            })
            .collect();
        sort_inbox(&mut inbox);
        inbox
    }
}

fn sort_inbox(inbox: &mut [Delivery]) {
    inbox.sort_by_key(|d| (d.sender, d.payload.sort_digest()));
}

/// Runs the protocol to completion under the given adversary.
///
/// Aborts with a contract violation if the adversary over-corrupts or sends
/// as an honest party; Byzantine payloads that merely fail verification are
/// dropped by recipients instead.
pub fn run(
    plan: &Arc<RunPlan>,
    inputs: &[Value],
    adversary: &mut dyn Adversary,
    adv_label: &str,
) -> Result<Transcript, SimError> {
    let n = plan.params.n;
    if inputs.len() != n as usize {
        return Err(SimError::BadInputs(format!(
            "{} inputs for {} parties",
            inputs.len(),
            n
        )));
    }
    if let Some(v) = inputs.iter().find(|v| v.0 >= plan.params.domain) {
        return Err(SimError::BadInputs(format!("input {v:?} outside domain")));
    }

    let mut transcript = Transcript {
        header: Header {
            version: TRANSCRIPT_VERSION,
            protocol: plan.params.protocol.label().to_string(),
            n,
            f: plan.params.f,
            epsilon: plan.params.epsilon,
            m: plan.params.m,
            domain: plan.params.domain,
            seed: plan.seed,
            adversary: adv_label.to_string(),
            inputs: inputs.to_vec(),
        },
        envelopes: Vec::new(),
        corruptions: Vec::new(),
        gba_outputs: Vec::new(),
        decisions: vec![None; n as usize],
        decision_round: 0,
        total_rounds: plan.total_rounds(),
        dropped: 0,
    };

    let mut parties: Vec<Option<ProtocolParty>> = (0..n)
        .map(|i| Some(plan.make_party(PartyId(i), inputs[i as usize])))
        .collect();
    let mut corrupted: BTreeSet<PartyId> = BTreeSet::new();
    let mut inboxes: Vec<Vec<Delivery>> = vec![Vec::new(); n as usize];
    let mut adv_rng = ChaCha8Rng::seed_from_u64(mix(plan.seed, 0x00ad_fea7));

    for round in 1..=plan.total_rounds() {
        let mut round_envs: Vec<Envelope> = Vec::new();
        for id in 0..n {
            let p = PartyId(id);
            if corrupted.contains(&p) {
                continue;
            }
            let party = parties[id as usize].as_mut().expect("honest party present");
            for o in party.step(round, &inboxes[id as usize]) {
                debug_assert!(!o.recipients.is_empty());
                let mut recipients = o.recipients;
                recipients.sort_unstable();
                recipients.dedup();
                let kappa = o.payload.kappa_units();
                round_envs.push(Envelope {
                    sender: p,
                    recipients,
                    round,
                    payload: o.payload,
                    kappa,
                    byz: false,
                });
            }
        }

        let (new_corruptions, adv_envs) = {
            let mut ctx = AdvCtx {
                round,
                plan,
                inputs,
                honest: &round_envs,
                history: &transcript,
                corrupted: &corrupted,
                rng: &mut adv_rng,
                pending_corrupt: Vec::new(),
                pending_sends: Vec::new(),
            };
            adversary.on_round(&mut ctx)?;
            (ctx.pending_corrupt, ctx.pending_sends)
        };

        for p in new_corruptions {
            corrupted.insert(p);
            transcript.corruptions.push((p, round));
            if let Some(mut machine) = parties[p.idx()].take() {
                transcript.gba_outputs.extend(machine.drain_events());
                transcript.dropped += machine.dropped();
            }
            if plan.params.corruption_mode == CorruptionMode::RetractOutbox {
                round_envs.retain(|e| e.sender != p);
            }
        }
        round_envs.extend(adv_envs);

        let mut next: Vec<Vec<Delivery>> = vec![Vec::new(); n as usize];
        for e in &round_envs {
            for r in &e.recipients {
                next[r.idx()].push(Delivery {
                    sender: e.sender,
                    payload: e.payload.clone(),
                });
            }
        }
        for inbox in &mut next {
            sort_inbox(inbox);
        }
        inboxes = next;

        for machine in parties.iter_mut().flatten() {
            transcript.gba_outputs.extend(machine.drain_events());
        }
        transcript.envelopes.append(&mut round_envs);
    }

    for id in 0..n as usize {
        if let Some(machine) = parties[id].as_mut() {
            machine.finish(&inboxes[id]);
            transcript.gba_outputs.extend(machine.drain_events());
            transcript.decisions[id] = machine.decision();
            transcript.dropped += machine.dropped();
        }
    }
    transcript.decision_round = plan.total_rounds();
    Ok(transcript)
}

/// Decision-level report: do the honest decisions satisfy agreement?
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub consistency: bool,
    pub termination: bool,
    /// Present only when honest inputs were unanimous.
    pub validity: Option<bool>,
}

impl AgreementReport {
    pub fn holds(&self) -> bool {
        self.consistency && self.termination && self.validity.unwrap_or(true)
    }
}

pub fn check_agreement(t: &Transcript) -> AgreementReport {
    let honest = t.honest();
    let decisions: Vec<Option<Value>> = honest.iter().map(|p| t.decisions[p.idx()]).collect();
    let termination = !decisions.is_empty() && decisions.iter().all(Option::is_some);
    let mut decided = decisions.iter().flatten();
    let first = decided.next().copied();
    let consistency = decisions
        .iter()
        .flatten()
        .all(|v| Some(*v) == first);
    let mut honest_inputs = honest.iter().map(|p| t.header.inputs[p.idx()]);
    let unanimous = honest_inputs.next().filter(|v| honest_inputs.all(|x| x == *v));
    let validity = unanimous
        .map(|v| termination && consistency && first == Some(v));
    AgreementReport {
        consistency,
        termination,
        validity,
    }
}

/// A pair of same-kind certificates over different values within one
/// graded-agreement instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertConflict {
    pub w: CommitteeId,
    pub slot: Slot,
    pub kind: &'static str,
    pub values: Vec<Value>,
    /// Corrupted members of the instance's committee at end of run.
    pub faults: u32,
    /// Faults the instance was engineered to tolerate.
    pub bound: u32,
}

/// Certificate-level report over a whole transcript.
///
/// The uniqueness and graded-consistency guarantees are conditional: they
/// hold for an instance only while its own committee's faults stay within
/// the bound that instance was engineered for. A sweep that deliberately
/// drowns one recursion half (or an over-budget run) produces conflicts in
/// the drowned instances without contradicting anything, so those land in
/// the `unprotected` buckets and are reported rather than asserted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    /// Conflicting vote-1 certificates in instances within their fault
    /// bound; any entry breaks the certificate-uniqueness guarantee.
    pub c1_conflicts: Vec<CertConflict>,
    /// Conflicting vote-1 certificates in instances whose committee was
    /// corrupted beyond its tolerance.
    pub c1_conflicts_unprotected: Vec<CertConflict>,
    /// Conflicting echo certificates (diagnostic), same split.
    pub echo_conflicts: Vec<CertConflict>,
    pub echo_conflicts_unprotected: Vec<CertConflict>,
    /// Honest graded outputs that disagree with an honest grade-1 value in
    /// a within-bound instance.
    pub grade_violations: Vec<GbaOutcome>,
    /// The same disagreement inside over-corrupted instances.
    pub grade_violations_unprotected: Vec<GbaOutcome>,
}

impl CertificateReport {
    pub fn clean(&self) -> bool {
        self.c1_conflicts.is_empty() && self.grade_violations.is_empty()
    }
}

/// Scans every envelope for certificates, assembled or implied by a quorum
/// of individual signatures, and flags conflicting pairs per instance. Also
/// checks graded-output consistency among never-corrupted parties.
pub fn check_certificates(t: &Transcript, plan: &RunPlan) -> CertificateReport {
    type Tally = BTreeMap<(CommitteeId, Slot), BTreeMap<Value, BTreeSet<PartyId>>>;
    let mut echo_sigs: Tally = BTreeMap::new();
    let mut vote1_sigs: Tally = BTreeMap::new();
    let mut echo_certs: BTreeMap<(CommitteeId, Slot), BTreeSet<Value>> = BTreeMap::new();
    let mut c1_certs: BTreeMap<(CommitteeId, Slot), BTreeSet<Value>> = BTreeMap::new();

    let ks = &plan.keystore;
    for e in &t.envelopes {
        match &e.payload {
            Payload::Echo { w, slot, value, sig } => {
                if sig.digest == crate::digest::echo_digest(*w, *slot, *value)
                    && crypto::verify(sig, ks)
                {
                    echo_sigs
                        .entry((*w, *slot))
                        .or_default()
                        .entry(*value)
                        .or_default()
                        .insert(sig.signer);
                }
            }
            Payload::Vote { stage: 1, w, slot, value, sig } => {
                if sig.digest == crate::digest::vote_digest(1, *w, *slot, *value)
                    && crypto::verify(sig, ks)
                {
                    vote1_sigs
                        .entry((*w, *slot))
                        .or_default()
                        .entry(*value)
                        .or_default()
                        .insert(sig.signer);
                }
            }
            Payload::Cert(cert) if matches!(cert.kind, CertKind::Echo | CertKind::Vote1) => {
                let valid = match &cert.evidence {
                    Evidence::Threshold(ts) => {
                        ts.group == cert.w
                            && crypto::verify_aggregate_digest(ts, cert.share_digest(), ks)
                    }
                    Evidence::Shares(sigs) => {
                        let quorum = plan
                            .committees
                            .get(&cert.w)
                            .map(|c| c.quorum)
                            .unwrap_or(u32::MAX);
                        let expect = cert.share_digest();
                        let signers: BTreeSet<PartyId> = sigs
                            .iter()
                            .filter(|s| s.digest == expect && crypto::verify(s, ks))
                            .map(|s| s.signer)
                            .collect();
                        signers.len() as u32 >= quorum
                    }
                };
                if valid {
                    let bucket = match cert.kind {
                        CertKind::Echo => &mut echo_certs,
                        _ => &mut c1_certs,
                    };
                    bucket.entry((cert.w, cert.slot)).or_default().insert(cert.value);
                }
            }
            _ => {}
        }
    }

    let fold = |sigs: Tally, certs: &mut BTreeMap<(CommitteeId, Slot), BTreeSet<Value>>| {
        for ((w, slot), by_value) in sigs {
            let quorum = plan.committees.get(&w).map(|c| c.quorum).unwrap_or(u32::MAX);
            for (value, signers) in by_value {
                if signers.len() as u32 >= quorum {
                    certs.entry((w, slot)).or_default().insert(value);
                }
            }
        }
    };
    fold(echo_sigs, &mut echo_certs);
    fold(vote1_sigs, &mut c1_certs);

    let corrupted = t.corrupted();
    let committee_faults = |w: CommitteeId| -> u32 {
        plan.committees
            .get(&w)
            .map(|c| c.members.iter().filter(|p| corrupted.contains(p)).count() as u32)
            .unwrap_or(0)
    };
    let protected = |w: CommitteeId| -> bool {
        plan.committees
            .get(&w)
            .map(|c| committee_faults(w) <= c.f)
            .unwrap_or(true)
    };

    let conflicts = |certs: BTreeMap<(CommitteeId, Slot), BTreeSet<Value>>, kind: &'static str| {
        let mut within = Vec::new();
        let mut beyond = Vec::new();
        for ((w, slot), values) in certs {
            if values.len() < 2 {
                continue;
            }
            let conflict = CertConflict {
                w,
                slot,
                kind,
                values: values.into_iter().collect(),
                faults: committee_faults(w),
                bound: plan.committees.get(&w).map(|c| c.f).unwrap_or(0),
            };
            if protected(w) {
                within.push(conflict);
            } else {
                beyond.push(conflict);
            }
        }
        (within, beyond)
    };

    let honest: BTreeSet<PartyId> = t.honest().into_iter().collect();
    let mut grade_violations = Vec::new();
    let mut grade_violations_unprotected = Vec::new();
    let mut by_instance: BTreeMap<(CommitteeId, Slot), Vec<&GbaOutcome>> = BTreeMap::new();
    for o in &t.gba_outputs {
        if honest.contains(&o.party) {
            by_instance.entry((o.w, o.slot)).or_default().push(o);
        }
    }
    for (&(w, _), outcomes) in &by_instance {
        let bucket = if protected(w) {
            &mut grade_violations
        } else {
            &mut grade_violations_unprotected
        };
        for graded in outcomes.iter().filter(|o| o.grade) {
            for other in outcomes.iter() {
                if other.value != graded.value {
                    bucket.push(**other);
                }
            }
        }
    }
    grade_violations.dedup_by_key(|o| (o.w, o.slot, o.party));
    grade_violations_unprotected.dedup_by_key(|o| (o.w, o.slot, o.party));

    let (c1_conflicts, c1_conflicts_unprotected) = conflicts(c1_certs, "vote-1");
    let (echo_conflicts, echo_conflicts_unprotected) = conflicts(echo_certs, "echo");
    CertificateReport {
        c1_conflicts,
        c1_conflicts_unprotected,
        echo_conflicts,
        echo_conflicts_unprotected,
        grade_violations,
        grade_violations_unprotected,
    }
}

/// Adversary that never acts; baseline for every suite.
pub struct Passive;

impl Adversary for Passive {
    fn on_round(&mut self, _ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        Ok(())
    }
}
