//! Behavioral tests for the adversary strategy library, including frozen
//! small-case scenarios worked out by hand against the round rules.

use basim_harness::config::{AdversarySpec, InputAssignment};
use basim_harness::runner::{config, execute};
use basim_core::types::{PartyId, Value};
use basim_core::ProtocolKind;

const A: Value = Value(0);

#[test]
fn passive_adversary_never_corrupts() {
    let cfg = config(
        ProtocolKind::RbaTs,
        8,
        3,
        None,
        1,
        AdversarySpec::named("passive"),
        InputAssignment::Unanimous(A),
    );
    let out = execute(&cfg).unwrap();
    assert_eq!(out.record.corruptions, 0);
    assert!(out.record.properties_hold());
}

#[test]
fn half_corruptor_grabs_the_first_half() {
    // n = 16, f = 7: the whole budget lands inside committee 2 (parties 0..8).
    let cfg = config(
        ProtocolKind::RbaTs,
        16,
        7,
        None,
        3,
        AdversarySpec::named("half-corruptor"),
        InputAssignment::Unanimous(A),
    );
    let out = execute(&cfg).unwrap();
    assert_eq!(out.record.corruptions, 7);
    let corrupted = out.transcript.corrupted();
    assert!(corrupted.iter().all(|p| p.0 < 8));
    assert!(out.record.properties_hold());
}

#[test]
fn cert_suppressor_victims_follow_protocol_minus_certificates() {
    let cfg = config(
        ProtocolKind::GbaTs,
        8,
        3,
        None,
        5,
        AdversarySpec::named("cert-suppressor"),
        InputAssignment::Unanimous(A),
    );
    let out = execute(&cfg).unwrap();
    // The victims' round-1 echoes stood from before corruption took effect;
    // from round 2 on their replicas keep voting...
    assert!(out
        .transcript
        .envelopes
        .iter()
        .any(|e| e.byz && e.payload.kind() == "vote-1"));
    assert!(out
        .transcript
        .envelopes
        .iter()
        .any(|e| e.byz && e.payload.kind() == "vote-2"));
    // ...but never forward a certificate.
    assert!(!out
        .transcript
        .envelopes
        .iter()
        .any(|e| e.byz && e.payload.kind().ends_with("-cert")));
    assert!(out.record.properties_hold());
}

#[test]
fn echo_equivocator_sends_both_values() {
    let cfg = config(
        ProtocolKind::GbaTs,
        8,
        3,
        None,
        7,
        AdversarySpec::named("echo-equivocator"),
        InputAssignment::Unanimous(A),
    );
    let out = execute(&cfg).unwrap();
    let byz_echo_values: std::collections::BTreeSet<u32> = out
        .transcript
        .envelopes
        .iter()
        .filter(|e| e.byz && e.payload.kind() == "echo")
        .map(|e| e.payload.value().0)
        .collect();
    assert_eq!(byz_echo_values.into_iter().collect::<Vec<_>>(), vec![0, 1]);
    // Unanimous honest input: validity must survive the equivocation.
    assert_eq!(out.record.validity, Some(true));
}

/// Frozen scenario, derived by stepping the round rules by hand: committee
/// of 8 with the last 3 corrupted and honest inputs A,A,A,A,B.
///
/// The splitter echoes A to parties 0 and 1 (their echo pools reach the
/// quorum of 5), completes their vote-1 quorum in round 3, and completes the
/// vote-2 quorum only at party 0. Everyone receives the multicast vote-1
/// certificate, so all five honest parties output A, with grades 1,0,0,0,0.
#[test]
fn grade_splitter_splits_grades_over_one_value() {
    let cfg = config(
        ProtocolKind::GbaTs,
        8,
        3,
        None,
        1,
        AdversarySpec::named("grade-splitter"),
        InputAssignment::Split,
    );
    let out = execute(&cfg).unwrap();
    let mut outcomes: Vec<(u32, u32, bool)> = out
        .transcript
        .gba_outputs
        .iter()
        .map(|o| (o.party.0, o.value.0, o.grade))
        .collect();
    outcomes.sort();
    assert_eq!(
        outcomes,
        vec![
            (0, 0, true),
            (1, 0, false),
            (2, 0, false),
            (3, 0, false),
            (4, 0, false),
        ]
    );
    // A split grade set over one value satisfies graded consistency.
    assert!(out.record.grade_ok);
    assert!(out.record.consistency);
}

/// Over many seeds the splitter keeps producing mixed grade sets while
/// value consistency never breaks.
#[test]
fn grade_splitter_yields_mixed_grades_across_seeds() {
    let mut mixed = 0;
    for seed in 0..100 {
        let cfg = config(
            ProtocolKind::GbaTs,
            8,
            3,
            None,
            seed,
            AdversarySpec::named("grade-splitter"),
            InputAssignment::Split,
        );
        let out = execute(&cfg).unwrap();
        assert!(out.record.grade_ok && out.record.consistency, "seed {seed}");
        let grades: std::collections::BTreeSet<bool> =
            out.transcript.gba_outputs.iter().map(|o| o.grade).collect();
        if grades.len() == 2 {
            mixed += 1;
        }
    }
    assert!(mixed > 0, "splitter never achieved a mixed grade set");
}

/// The rushing splitter completes quorums for a single target only; the
/// target's forwarded certificate still pulls every honest party to the
/// same value.
#[test]
fn rushing_splitter_pushes_one_party_to_a_certificate() {
    let cfg = config(
        ProtocolKind::GbaTs,
        8,
        3,
        None,
        1,
        AdversarySpec::named("rushing-splitter"),
        InputAssignment::Split,
    );
    let out = execute(&cfg).unwrap();
    // Exactly the single target assembles and multicasts the vote-1
    // certificate.
    let cert_senders: Vec<PartyId> = out
        .transcript
        .envelopes
        .iter()
        .filter(|e| e.payload.kind() == "vote-1-cert")
        .map(|e| e.sender)
        .collect();
    assert_eq!(cert_senders, vec![PartyId(0)]);
    for o in &out.transcript.gba_outputs {
        assert_eq!((o.value, o.grade), (A, false));
    }
    assert!(out.record.properties_hold());
}

#[test]
fn crash_parameters_control_round_and_count() {
    let cfg = config(
        ProtocolKind::RbaTs,
        8,
        3,
        None,
        9,
        AdversarySpec::named("crash").with("round", 2).with("count", 2),
        InputAssignment::Unanimous(A),
    );
    let out = execute(&cfg).unwrap();
    assert_eq!(
        out.transcript.corruptions,
        vec![(PartyId(0), 2), (PartyId(1), 2)]
    );
    assert!(out.record.properties_hold());
}

/// Every library strategy, across both recursive protocols and several
/// seeds, preserves the promised properties within the fault bound.
#[test]
fn all_strategies_preserve_safety_on_small_instances() {
    let strategies = [
        "passive",
        "crash",
        "echo-equivocator",
        "half-corruptor",
        "cert-suppressor",
        "rushing-splitter",
        "grade-splitter",
    ];
    for kind in [ProtocolKind::RbaTs, ProtocolKind::RbaExp] {
        let (n, f, eps) = match kind {
            ProtocolKind::RbaTs => (8, 3, None),
            _ => (8, 3, Some(0.125)),
        };
        for name in strategies {
            for seed in 0..5 {
                for inputs in [InputAssignment::Unanimous(A), InputAssignment::Split] {
                    let cfg = config(
                        kind,
                        n,
                        f,
                        eps,
                        seed,
                        AdversarySpec::named(name),
                        inputs,
                    );
                    let out = execute(&cfg).unwrap();
                    assert!(
                        out.record.properties_hold(),
                        "{kind} {name} seed={seed}: {:?}",
                        out.record
                    );
                }
            }
        }
    }
}
