//! End-to-end protocol runs through the lock-step network: happy paths,
//! scripted Byzantine behavior, and the decision/certificate checkers.

use basim_core::crypto::SignedMessage;
use basim_core::digest;
use basim_core::msg::Payload;
use basim_core::rba::{Params, ProtocolKind, RunPlan};
use basim_core::simnet::{
    check_agreement, check_certificates, comm_cost, run, AdvCtx, Adversary, Envelope, Passive,
    SimError, Transcript,
};
use basim_core::types::{CorruptionMode, PartyId, Round, Slot, Value};

const A: Value = Value(0);
const B: Value = Value(1);

fn params(protocol: ProtocolKind, n: u32, f: u32) -> Params {
    Params {
        protocol,
        n,
        f,
        epsilon: match protocol {
            ProtocolKind::RbaExp | ProtocolKind::GbaExp => Some(0.125),
            _ => None,
        },
        m: 4,
        domain: 2,
        corruption_mode: CorruptionMode::OutboxStands,
    }
}

fn run_with(
    p: Params,
    seed: u64,
    inputs: &[Value],
    adversary: &mut dyn Adversary,
    label: &str,
) -> Transcript {
    let plan = RunPlan::new(p, seed).expect("valid params");
    run(&plan, inputs, adversary, label).expect("run completes")
}

fn honest_gba_outputs(t: &Transcript) -> Vec<(PartyId, Value, bool)> {
    let honest = t.honest();
    t.gba_outputs
        .iter()
        .filter(|o| o.w == 1 && honest.contains(&o.party))
        .map(|o| (o.party, o.value, o.grade))
        .collect()
}

#[test]
fn gba_ts_unanimous_forms_aggregated_echo_certificates() {
    let p = params(ProtocolKind::GbaTs, 4, 1);
    let t = run_with(p, 3, &[A; 4], &mut Passive, "passive");

    // Round 2: every party multicasts the aggregated echo certificate.
    let round2: Vec<&Envelope> = t
        .envelopes
        .iter()
        .filter(|e| e.round == 2 && e.payload.kind() == "echo-cert")
        .collect();
    assert_eq!(round2.len(), 4);
    for e in &round2 {
        assert_eq!(e.kappa, 1);
        assert_eq!(e.recipients.len(), 4);
        assert_eq!(e.payload.value(), A);
    }

    for (_, v, g) in honest_gba_outputs(&t) {
        assert_eq!((v, g), (A, true));
    }
    assert!(check_agreement(&t).holds());
}

#[test]
fn gba_exp_certificate_holders_multicast_final_vote() {
    let p = params(ProtocolKind::GbaExp, 8, 3);
    let t = run_with(p, 5, &[B; 8], &mut Passive, "passive");

    let vote3: Vec<&Envelope> = t
        .envelopes
        .iter()
        .filter(|e| e.round == 5 && e.payload.kind() == "vote-3")
        .collect();
    assert_eq!(vote3.len(), 8);
    for e in &vote3 {
        assert_eq!(e.recipients.len(), 8);
        assert_eq!(e.payload.value(), B);
    }
    for (_, v, g) in honest_gba_outputs(&t) {
        assert_eq!((v, g), (B, true));
    }

    // Certificates travel only along gossip edges, never as multicasts.
    let plan = RunPlan::new(p, 5).unwrap();
    let bound = plan.degree_bound.unwrap() as usize;
    for e in t.envelopes.iter().filter(|e| e.payload.kind().ends_with("-cert")) {
        assert!(e.recipients.len() <= bound);
    }
}

/// Silences a fixed set of parties from a given round on.
struct Crash {
    victims: Vec<PartyId>,
    round: Round,
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

#[test]
fn gba_party_without_certificates_keeps_input_at_grade_zero() {
    // With one echo withheld no value reaches the quorum of 3, so no
    // certificate ever forms and every honest party outputs its own input
    // with grade 0.
    let p = params(ProtocolKind::GbaTs, 4, 1);
    let mut adv = Crash {
        victims: vec![PartyId(3)],
        round: 1,
    };
    let inputs = [A, B, A, B];
    let p_retract = Params {
        corruption_mode: CorruptionMode::RetractOutbox,
        ..p
    };
    let t = run_with(p_retract, 11, &inputs, &mut adv, "crash");
    let outs = honest_gba_outputs(&t);
    assert_eq!(outs.len(), 3);
    for (party, v, g) in outs {
        assert_eq!(v, inputs[party.idx()]);
        assert!(!g);
    }
    assert!(t.envelopes.iter().all(|e| e.payload.kind() == "echo"));
}

/// Corrupts the last party and scripts its first-round echoes per recipient.
struct ScriptedEchoes {
    /// One choice per honest recipient id; `None` is silence.
    choices: Vec<Option<Value>>,
}

impl Adversary for ScriptedEchoes {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        if ctx.round() != 1 {
            return Ok(());
        }
        let me = PartyId(ctx.plan().params.n - 1);
        ctx.corrupt(me)?;
        for (h, choice) in self.choices.clone().into_iter().enumerate() {
            if let Some(value) = choice {
                let sig = ctx.sign_as(me, digest::echo_digest(1, Slot::A, value))?;
                ctx.send(
                    me,
                    vec![PartyId(h as u32)],
                    Payload::Echo {
                        w: 1,
                        slot: Slot::A,
                        value,
                        sig,
                    },
                )?;
            }
        }
        Ok(())
    }
}

#[test]
fn gba_ts_exhaustive_small_case_echo_equivocation() {
    // All per-recipient echo strategies of one Byzantine party at n = 4,
    // crossed with all honest input assignments. Nothing may break graded
    // consistency, and honest parties may never back two different echo
    // certificates.
    let p = params(ProtocolKind::GbaTs, 4, 1);
    let choices = [None, Some(A), Some(B)];
    for c0 in choices {
        for c1 in choices {
            for c2 in choices {
                for inputs_bits in 0..8u32 {
                    let inputs: Vec<Value> = (0..4)
                        .map(|h| if h < 3 && (inputs_bits >> h) & 1 == 1 { B } else { A })
                        .collect();
                    let mut adv = ScriptedEchoes {
                        choices: vec![c0, c1, c2],
                    };
                    let t = run_with(p, 17, &inputs, &mut adv, "scripted-echoes");
                    let plan = RunPlan::new(p, 17).unwrap();
                    let certs = check_certificates(&t, &plan);
                    assert!(certs.c1_conflicts.is_empty(), "{c0:?}/{c1:?}/{c2:?}/{inputs:?}");
                    assert!(certs.grade_violations.is_empty());

                    let honest_cert_values: std::collections::BTreeSet<Value> = t
                        .envelopes
                        .iter()
                        .filter(|e| !e.byz && e.payload.kind() == "echo-cert")
                        .map(|e| e.payload.value())
                        .collect();
                    assert!(honest_cert_values.len() <= 1);

                    let honest_inputs: Vec<Value> =
                        (0..3).map(|h| inputs[h as usize]).collect();
                    if honest_inputs.iter().all(|&v| v == honest_inputs[0]) {
                        for (_, v, g) in honest_gba_outputs(&t) {
                            assert_eq!((v, g), (honest_inputs[0], true));
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn base_ba_decides_unanimous_input() {
    let p = params(ProtocolKind::BaseBa, 4, 1);
    let t = run_with(p, 23, &[B; 4], &mut Passive, "passive");
    assert!(check_agreement(&t).holds());
    assert_eq!(t.decisions, vec![Some(B); 4]);
}

#[test]
fn base_ba_single_party_decides_its_input() {
    let p = params(ProtocolKind::BaseBa, 1, 0);
    let t = run_with(p, 1, &[B], &mut Passive, "passive");
    assert_eq!(t.decisions, vec![Some(B)]);
}

#[test]
fn rba_both_variants_satisfy_validity() {
    for kind in [ProtocolKind::RbaTs, ProtocolKind::RbaExp] {
        let p = params(kind, 8, 3);
        let t = run_with(p, 31, &[A; 8], &mut Passive, "passive");
        let report = check_agreement(&t);
        assert_eq!(report.validity, Some(true), "{kind}");
        assert_eq!(t.decisions, vec![Some(A); 8]);
    }
}

#[test]
fn rba_split_inputs_stay_consistent() {
    for kind in [ProtocolKind::RbaTs, ProtocolKind::RbaExp] {
        let p = params(kind, 8, 3);
        let inputs = [A, A, A, A, B, B, B, B];
        let t = run_with(p, 37, &inputs, &mut Passive, "passive");
        let report = check_agreement(&t);
        assert!(report.consistency && report.termination, "{kind}");
        assert_eq!(report.validity, None);
    }
}

#[test]
fn rba_handles_odd_committee_sizes() {
    for kind in [ProtocolKind::RbaTs, ProtocolKind::RbaExp] {
        for n in [6, 7, 13] {
            let f = match kind {
                ProtocolKind::RbaTs => (n - 1) / 2,
                _ => (3 * n) / 8,
            };
            for seed in 0..3 {
                let p = params(kind, n, f);
                let inputs: Vec<Value> = (0..n).map(|i| if i % 3 == 0 { B } else { A }).collect();
                let mut crash = Crash {
                    victims: (0..f).map(PartyId).collect(),
                    round: 2,
                };
                let t = run_with(p, seed, &inputs, &mut crash, "crash");
                let report = check_agreement(&t);
                assert!(report.consistency && report.termination, "{kind} n={n} seed={seed}");
                let plan = RunPlan::new(p, seed).unwrap();
                assert!(check_certificates(&t, &plan).clean());
            }
        }
    }
}

/// Corrupts most of the first half and has it report a chosen value.
struct HalfReporter {
    victims: Vec<PartyId>,
    report: Value,
}

impl Adversary for HalfReporter {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        if ctx.round() == 1 {
            for &p in &self.victims {
                ctx.corrupt(p)?;
            }
        }
        let is_report_round = ctx
            .plan()
            .schedule
            .at(ctx.round())
            .iter()
            .any(|a| matches!(a, basim_core::rba::Action::Report { child_w: 2 }));
        if is_report_round {
            let recipients = ctx.plan().committee(1).members.as_ref().clone();
            for &p in &self.victims.clone() {
                let sig = ctx.sign_as(p, digest::report_digest(2, self.report))?;
                ctx.send(
                    p,
                    recipients.clone(),
                    Payload::Report {
                        child_w: 2,
                        value: self.report,
                        sig,
                    },
                )?;
            }
        }
        Ok(())
    }
}

#[test]
fn raised_grade_bit_resists_a_lying_half() {
    // Unanimous honest input: graded agreement raises everyone's grade, so
    // the majority report of a mostly-corrupted first half must be ignored.
    let p = params(ProtocolKind::RbaTs, 8, 3);
    let mut adv = HalfReporter {
        victims: vec![PartyId(0), PartyId(2), PartyId(3)],
        report: B,
    };
    let t = run_with(p, 41, &[A; 8], &mut adv, "half-reporter");
    for p in t.honest() {
        assert_eq!(t.decisions[p.idx()], Some(A));
    }
}

#[test]
fn zero_grade_adopts_the_majority_report() {
    // Split honest inputs keep every grade at 0, so the same lying half now
    // swings every honest party to its value; consistency must still hold.
    let p = params(ProtocolKind::RbaTs, 8, 3);
    let mut adv = HalfReporter {
        victims: vec![PartyId(0), PartyId(2), PartyId(3)],
        report: B,
    };
    let inputs = [A, A, A, A, B, B, B, B];
    let t = run_with(p, 43, &inputs, &mut adv, "half-reporter");
    for p in t.honest() {
        assert_eq!(t.decisions[p.idx()], Some(B));
    }
    assert!(check_agreement(&t).consistency);
}

#[test]
fn crash_corruption_is_recorded_and_outbox_stands() {
    let p = params(ProtocolKind::RbaTs, 8, 3);
    let mut adv = Crash {
        victims: vec![PartyId(0)],
        round: 3,
    };
    let t = run_with(p, 47, &[A; 8], &mut adv, "crash");
    assert_eq!(t.corruptions, vec![(PartyId(0), 3)]);
    assert!(t
        .envelopes
        .iter()
        .any(|e| e.sender == PartyId(0) && e.round == 3));
    assert!(!t
        .envelopes
        .iter()
        .any(|e| e.sender == PartyId(0) && e.round > 3));
    assert!(check_agreement(&t).holds());
}

#[test]
fn honest_traffic_matches_the_static_schedule() {
    use basim_core::rba::Action;
    for kind in [ProtocolKind::RbaTs, ProtocolKind::RbaExp] {
        let p = params(kind, 16, match kind {
            ProtocolKind::RbaTs => 7,
            _ => 6,
        });
        let plan = RunPlan::new(p, 13).unwrap();
        let t = run(&plan, &[A; 16], &mut Passive, "passive").unwrap();
        for e in t.envelopes.iter().filter(|e| !e.byz) {
            let actions = plan.schedule.at(e.round);
            let matched = actions.iter().any(|a| {
                matches!(
                    (a, e.payload.kind()),
                    (Action::GbaRound { local: 1, .. }, "echo")
                        | (Action::GbaRound { local: 2, .. }, "echo-cert")
                        | (Action::GbaRound { local: 3, .. }, "vote-1")
                        | (Action::GbaRound { local: 4, .. }, "vote-1-cert" | "vote-2")
                        | (Action::GbaRound { local: 5, .. }, "vote-3")
                        | (Action::Report { .. }, "report")
                        | (Action::BaseRound { .. }, "ba-set")
                )
            });
            assert!(
                matched,
                "{kind}: {} at round {} not scheduled; actions {:?}",
                e.payload.kind(),
                e.round,
                actions
            );
        }
    }
}

#[test]
fn retract_mode_withdraws_the_victims_same_round_outbox() {
    let p = params(ProtocolKind::RbaTs, 8, 3);
    let stands = run_with(
        p,
        49,
        &[A; 8],
        &mut Crash { victims: vec![PartyId(0)], round: 3 },
        "crash",
    );
    assert!(stands.envelopes.iter().any(|e| e.sender == PartyId(0) && e.round == 3));

    let p_retract = Params {
        corruption_mode: CorruptionMode::RetractOutbox,
        ..p
    };
    let retracted = run_with(
        p_retract,
        49,
        &[A; 8],
        &mut Crash { victims: vec![PartyId(0)], round: 3 },
        "crash",
    );
    assert!(!retracted
        .envelopes
        .iter()
        .any(|e| e.sender == PartyId(0) && e.round >= 3));
    assert!(check_agreement(&retracted).holds());
}

#[test]
fn comm_cost_charges_per_recipient_and_skips_byzantine() {
    let p = params(ProtocolKind::GbaTs, 8, 3);
    let plan = RunPlan::new(p, 1).unwrap();
    let t = run(&plan, &[A; 8], &mut Passive, "passive").unwrap();

    let mut stripped = t.clone();
    stripped.envelopes.clear();
    assert_eq!(comm_cost(&stripped), 0);

    let mut single = stripped.clone();
    let echo = t
        .envelopes
        .iter()
        .find(|e| e.payload.kind() == "echo")
        .unwrap()
        .clone();
    assert_eq!(echo.recipients.len(), 8);
    single.envelopes.push(echo.clone());
    assert_eq!(comm_cost(&single), 8);

    let mut byz = single.clone();
    let mut copy = echo;
    copy.byz = true;
    byz.envelopes.push(copy);
    assert_eq!(comm_cost(&byz), 8);
}

#[test]
fn agreement_checker_flags_forged_decision() {
    let p = params(ProtocolKind::BaseBa, 4, 1);
    let t = run_with(p, 53, &[A; 4], &mut Passive, "passive");
    assert!(check_agreement(&t).holds());
    let mut forged = t.clone();
    forged.decisions[2] = Some(B);
    let report = check_agreement(&forged);
    assert!(!report.consistency);
    assert_eq!(report.validity, Some(false));
}

#[test]
fn certificate_checker_passes_certificate_free_transcripts() {
    let p = params(ProtocolKind::BaseBa, 4, 1);
    let plan = RunPlan::new(p, 59).unwrap();
    let t = run(&plan, &[A; 4], &mut Passive, "passive").unwrap();
    assert!(check_certificates(&t, &plan).clean());
}

struct OverCorrupter;

impl Adversary for OverCorrupter {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        for i in 0..ctx.plan().params.n {
            ctx.corrupt(PartyId(i))?;
        }
        Ok(())
    }
}

struct HonestImpersonator;

impl Adversary for HonestImpersonator {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        let sig = ctx.sign_as(PartyId(0), 0x1)?;
        let _ = sig;
        Ok(())
    }
}

#[test]
fn contract_violations_abort_the_run() {
    let p = params(ProtocolKind::GbaTs, 4, 1);
    let plan = RunPlan::new(p, 61).unwrap();
    let err = run(&plan, &[A; 4], &mut OverCorrupter, "rogue").unwrap_err();
    assert!(matches!(err, SimError::ContractViolation(_)));

    let err = run(&plan, &[A; 4], &mut HonestImpersonator, "rogue").unwrap_err();
    assert!(matches!(err, SimError::ContractViolation(_)));
}

/// Asserts the rushing order: the round-1 callback must already see every
/// honest echo of that round.
struct RushingWitness {
    seen: usize,
}

impl Adversary for RushingWitness {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        if ctx.round() == 1 {
            self.seen = ctx
                .honest_sends()
                .iter()
                .filter(|e| e.payload.kind() == "echo")
                .count();
        }
        Ok(())
    }
}

#[test]
fn adversary_sees_honest_sends_before_acting() {
    let p = params(ProtocolKind::GbaTs, 4, 1);
    let mut adv = RushingWitness { seen: 0 };
    run_with(p, 67, &[A; 4], &mut adv, "witness");
    assert_eq!(adv.seen, 4);
}

/// The replica API only hands out machines for corrupted parties.
struct ReplicaThief;

impl Adversary for ReplicaThief {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        ctx.replica(PartyId(1), A).map(|_| ())
    }
}

#[test]
fn replicas_require_corruption() {
    let p = params(ProtocolKind::GbaTs, 4, 1);
    let plan = RunPlan::new(p, 71).unwrap();
    let err = run(&plan, &[A; 4], &mut ReplicaThief, "thief").unwrap_err();
    assert!(matches!(err, SimError::ContractViolation(_)));
}

/// Adversary signatures verify like any other once the party is corrupted.
struct CorruptAndEcho;

impl Adversary for CorruptAndEcho {
    fn on_round(&mut self, ctx: &mut AdvCtx<'_>) -> Result<(), SimError> {
        if ctx.round() == 1 {
            ctx.corrupt(PartyId(1))?;
            let sig: SignedMessage = ctx.sign_as(PartyId(1), digest::echo_digest(1, Slot::A, B))?;
            let all: Vec<PartyId> = (0..ctx.plan().params.n).map(PartyId).collect();
            ctx.send(
                PartyId(1),
                all,
                Payload::Echo {
                    w: 1,
                    slot: Slot::A,
                    value: B,
                    sig,
                },
            )?;
        }
        Ok(())
    }
}

#[test]
fn corrupted_party_signatures_verify() {
    let p = params(ProtocolKind::GbaTs, 4, 1);
    let t = run_with(p, 73, &[A; 4], &mut CorruptAndEcho, "echoer");
    // The Byzantine echo is accepted (not dropped) by every recipient: no
    // drops are recorded anywhere in the run.
    assert_eq!(t.dropped, 0);
    assert!(t.envelopes.iter().any(|e| e.byz && e.payload.value() == B));
}
