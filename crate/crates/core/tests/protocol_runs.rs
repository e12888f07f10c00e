use eprqkd_core::adversary::{AttackStrategy, FakePairPolicy};
use eprqkd_core::analysis::{mutual_information, JointDistribution};
use eprqkd_core::protocol::{CheckPolicy, Disposition, Transmission};
use eprqkd_core::quantum::{make_bell_state, Bit, Parity, Qubit};
use eprqkd_core::session::{run_multiparty, run_protocol, run_trial, AbortReason, ProtocolConfig};
use eprqkd_core::{BellLabel, Party};
use proptest::prelude::*;

fn config(pairs: usize, attack: AttackStrategy) -> ProtocolConfig {
    ProtocolConfig {
        pairs,
        attack,
        ..ProtocolConfig::default()
    }
}

fn within_3_sigma(observed: f64, p: f64, n: usize) -> bool {
    (observed - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn clean_run_commits_matching_keys() {
    let (hop, _) = run_protocol(&config(100, AttackStrategy::None), 11).unwrap();
    assert!(hop.committed());
    let keys = hop.keys.as_ref().unwrap();
    assert!(keys.agree());
    assert_eq!(hop.first_check.as_ref().unwrap().sample_size(), 25);
    assert_eq!(hop.second_check.as_ref().unwrap().sample_size(), 19);
    assert_eq!(keys.receiver.len_bits(), 2 * (100 - 25 - 19));
    for (i, label) in keys
        .receiver
        .source_indices()
        .iter()
        .zip(keys.sender.labels())
    {
        assert_eq!(hop.ledger.records()[*i].prepared(), label);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn clean_runs_hold_every_invariant(seed in any::<u64>(), pairs in 1usize..300) {
        let (hop, _) = run_protocol(&config(pairs, AttackStrategy::None), seed).unwrap();
        prop_assert_eq!(hop.tally.total(), pairs);
        if let Some(keys) = &hop.keys {
            prop_assert!(keys.agree());
            prop_assert_eq!(hop.tally.settled(), pairs);
            let idx = keys.receiver.source_indices();
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            for check in [&hop.first_check, &hop.second_check] {
                let check = check.as_ref().unwrap();
                prop_assert_eq!(check.mismatches, 0);
                for i in &check.sample_indices {
                    prop_assert!(idx.binary_search(i).is_err());
                }
            }
        } else {
            // too few pairs left after the first check
            prop_assert_eq!(
                hop.abort,
                Some(AbortReason::EmptyCheckSample { check: eprqkd_core::protocol::CheckId::Second })
            );
        }
    }
}

#[test]
fn measure_resend_signature() {
    let c = ProtocolConfig {
        pairs: 20_000,
        attack: AttackStrategy::measure_resend(),
        second_check: CheckPolicy {
            fraction: 0.75,
            ..CheckPolicy::default()
        },
        ..ProtocolConfig::default()
    };
    let (hop, _) = run_protocol(&c, 5).unwrap();
    let c1 = hop.first_check.as_ref().unwrap();
    let c2 = hop.second_check.as_ref().unwrap();
    assert_eq!(c1.mismatches, 0);
    assert!(c1.passed);
    assert!(c2.sample_size() >= 10_000);
    assert!((c2.error_rate - 0.5).abs() < 0.02, "{}", c2.error_rate);
    assert_eq!(c2.cross_class, 0);
    assert_eq!(hop.abort, Some(AbortReason::SecondCheckFailed));
    // outcomes keep the prepared parity class; only the sign bit is random
    for r in hop.ledger.records() {
        if let Some(seen) = r.outcome() {
            assert_eq!(seen.parity(), r.prepared().parity());
        }
    }
}

#[test]
fn measure_resend_on_psi1_splits_evenly_between_psi1_and_psi2() {
    let labels = vec![BellLabel::Psi1; 10_000];
    let mut ledger = eprqkd_core::protocol::prepare_labels(&labels).unwrap();
    let mut eve = eprqkd_core::adversary::AdversaryChannel::new(
        AttackStrategy::measure_resend(),
        eprqkd_core::RandomSource::new(1, eprqkd_core::StreamId(9)),
    );
    let mut rng = eprqkd_core::RandomSource::new(1, eprqkd_core::StreamId(1));
    eprqkd_core::protocol::transmit_first_sequence(&mut ledger, &mut eve).unwrap();
    let policy = CheckPolicy {
        fraction: 0.01,
        min_sample: 1,
        threshold: 0.02,
    };
    eprqkd_core::protocol::first_check(&mut ledger, &policy, &mut rng.clone(), &mut rng).unwrap();
    eprqkd_core::protocol::transmit_second_sequence(&mut ledger, &mut eve).unwrap();
    eprqkd_core::protocol::decode_pairs(&mut ledger, &mut rng).unwrap();
    let counts = ledger.sender_receiver_counts()[0];
    let n: u64 = counts.iter().sum();
    assert_eq!(counts[2] + counts[3], 0);
    assert!(within_3_sigma(counts[0] as f64 / n as f64, 0.5, n as usize));
}

#[test]
fn fake_pair_mismatch_probability_is_exactly_one_half() {
    // Enumerate: sender's Z bit on the genuine pair and receiver's Z bit on
    // Eve's pair are independent; parity disagreement with the prepared
    // label has probability 1/2 for every fake label.
    for prepared in BellLabel::ALL {
        for fake in BellLabel::ALL {
            let pa = make_bell_state(prepared).z_probabilities(Qubit::First);
            let pb = make_bell_state(fake).z_probabilities(Qubit::Second);
            let mut miss = 0.0;
            for (a, &p) in pa.iter().enumerate() {
                for (b, &q) in pb.iter().enumerate() {
                    let parity = Parity::of(Bit::from(a == 1), Bit::from(b == 1));
                    if parity != prepared.parity() {
                        miss += p * q;
                    }
                }
            }
            assert!((miss - 0.5).abs() < 1e-12);
        }
    }
}

#[test]
fn fake_pair_first_check_rate_is_one_half_for_any_fake_policy() {
    let n_pairs = 8_000;
    for fakes in [
        FakePairPolicy::Fixed(BellLabel::Psi1),
        FakePairPolicy::Fixed(BellLabel::Psi4),
        FakePairPolicy::Uniform,
    ] {
        let c = ProtocolConfig {
            pairs: n_pairs,
            attack: AttackStrategy::FakeEpr { fakes },
            ..ProtocolConfig::default()
        };
        let (hop, _) = run_protocol(&c, 21).unwrap();
        let c1 = hop.first_check.as_ref().unwrap();
        assert!(
            within_3_sigma(c1.error_rate, 0.5, c1.sample_size()),
            "{fakes:?} {}",
            c1.error_rate
        );
        assert_eq!(hop.abort, Some(AbortReason::FirstCheckFailed));
        assert!(hop.second_transmission.is_none());
    }
}

#[test]
fn fake_pair_continuation_exposes_second_check_and_information() {
    let c = ProtocolConfig {
        pairs: 8_000,
        attack: AttackStrategy::fake_epr(),
        continuation_mode: true,
        ..ProtocolConfig::default()
    };
    let (hop, _) = run_protocol(&c, 3).unwrap();
    let c2 = hop.second_check.as_ref().unwrap();
    assert!(
        within_3_sigma(c2.error_rate, 0.75, c2.sample_size()),
        "{}",
        c2.error_rate
    );
    assert_eq!(hop.abort, Some(AbortReason::FirstCheckFailed));
    assert!(hop.keys.is_none());
    let ab = JointDistribution::from_count_table(&hop.sender_receiver).unwrap();
    let ae = JointDistribution::from_count_table(&hop.sender_eve).unwrap();
    assert!(mutual_information(&ab) < 0.02);
    assert!((mutual_information(&ae) - 2.0).abs() < 0.02);
}

#[test]
fn opaque_attack_stalls_the_run() {
    let c = config(1000, AttackStrategy::opaque(0.3));
    let (hop, log) = run_protocol(&c, 8).unwrap();
    assert_eq!(
        hop.abort,
        Some(AbortReason::Stalled {
            sequence: Transmission::First
        })
    );
    assert!(hop.first_check.is_none());
    assert!(hop.second_transmission.is_none());
    assert!(matches!(
        log.events().last().unwrap().kind,
        eprqkd_core::EventKind::Aborted { .. }
    ));

    let everything = config(50, AttackStrategy::opaque(1.0));
    let (hop, _) = run_protocol(&everything, 8).unwrap();
    assert_eq!(hop.first_transmission.unwrap().received, 0);

    let tolerant = ProtocolConfig {
        loss_tolerance: 0.5,
        ..config(10_000, AttackStrategy::opaque(0.3))
    };
    let (hop, _) = run_protocol(&tolerant, 8).unwrap();
    let rx = hop.first_transmission.unwrap();
    assert!(within_3_sigma(rx.fraction(), 0.7, rx.sent));
    // conservation with destroyed pairs
    assert_eq!(hop.tally.total(), 10_000);
    assert_eq!(hop.tally.settled() + hop.tally.decoded, 10_000);
}

#[test]
fn relay_chain_shares_one_key() {
    let c = ProtocolConfig {
        parties: 3,
        ..config(100, AttackStrategy::None)
    };
    let run = run_multiparty(&c, 4).unwrap();
    assert_eq!(run.hops.len(), 2);
    let keys = run.keys.as_ref().unwrap();
    assert_eq!(
        keys.iter().map(|k| k.party).collect::<Vec<_>>(),
        [Party::Alice, Party::Bob, Party::Clare]
    );
    assert_eq!(run.keys_agree(), Some(true));
    // 100 → 75 after 25 checked → 56 after 19 checked; hop 2: 56 → 40 → 24,
    // both hop-2 samples hit the floor of 16.
    assert_eq!(run.hops[1].ledger.len(), 56);
    assert_eq!(keys[0].key.len_bits(), 2 * 24);
    let hop1_key = run.hops[0].keys.as_ref().unwrap();
    for i in keys[0].key.source_indices() {
        assert!(hop1_key.sender.source_indices().contains(i));
    }
}

#[test]
fn relay_chain_attack_on_second_hop_yields_no_key() {
    let c = ProtocolConfig {
        parties: 3,
        attack_hop: Some(2),
        ..config(1000, AttackStrategy::measure_resend())
    };
    let run = run_trial(&c, 4).unwrap();
    assert!(run.hops[0].committed());
    assert_eq!(run.hops[1].abort, Some(AbortReason::SecondCheckFailed));
    assert!(run.keys.is_none());
    assert_eq!(run.aborted(), Some((2, AbortReason::SecondCheckFailed)));
}

#[test]
fn same_seed_replays_identically() {
    for attack in [
        AttackStrategy::None,
        AttackStrategy::measure_resend(),
        AttackStrategy::fake_epr(),
        AttackStrategy::opaque(0.01),
    ] {
        let c = ProtocolConfig {
            parties: 3,
            continuation_mode: true,
            loss_tolerance: 0.1,
            ..config(500, attack)
        };
        let a = run_trial(&c, 99).unwrap();
        let b = run_trial(&c, 99).unwrap();
        assert_eq!(a.transcript, b.transcript);
        assert_eq!(a.keys, b.keys);
        let c2 = run_trial(&c, 100).unwrap();
        assert_ne!(a.transcript, c2.transcript);
    }
}

#[test]
fn transcript_follows_protocol_order() {
    let (_, log) = run_protocol(&config(200, AttackStrategy::measure_resend()), 1).unwrap();
    let steps: Vec<u8> = log.events().iter().map(|e| e.step).collect();
    assert!(steps.windows(2).all(|w| w[0] <= w[1]), "{steps:?}");
    assert_eq!(log.events()[0].actor, Party::Alice);
    assert!(log.events().iter().any(|e| e.actor == Party::Eve));
}

#[test]
fn dispositions_settle_on_commit() {
    let (hop, _) = run_protocol(&config(400, AttackStrategy::None), 2).unwrap();
    for r in hop.ledger.records() {
        assert!(matches!(
            r.disposition(),
            Disposition::Checked1 | Disposition::Checked2 | Disposition::Key
        ));
    }
}
