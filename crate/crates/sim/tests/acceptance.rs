//! Acceptance criteria, one check per criterion. Run with
//! `cargo test -p eprqkd --test acceptance -- --nocapture` to see the
//! pass/fail lines.

use std::time::Instant;

use eprqkd::emit;
use eprqkd::{run, RunConfig, RunReport};
use eprqkd_core::analysis::{efficiency, reference_bb84, EfficiencyInputs};
use eprqkd_core::protocol::CheckPolicy;
use eprqkd_core::quantum::{
    bell_overlap_probabilities, make_bell_state, measure_bell_basis, measure_qubit_z, Bit, Qubit,
    TwoQubitState,
};
use eprqkd_core::{AttackStrategy, BellLabel, ProtocolConfig, RandomSource, StreamId};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn batch(trials: u64, seed: u64, protocol: ProtocolConfig) -> RunReport {
    run(
        &RunConfig {
            trials,
            seed,
            protocol,
        },
        false,
    )
    .unwrap()
    .report
}

fn three_sigma(p: f64, n: f64) -> f64 {
    3.0 * (p * (1.0 - p) / n).sqrt()
}

fn ac1_clean_run() -> Outcome {
    let started = Instant::now();
    let report = batch(
        20,
        1,
        ProtocolConfig {
            pairs: 10_000,
            ..ProtocolConfig::default()
        },
    );
    let elapsed = started.elapsed().as_secs_f64();
    let mut ok = elapsed < 10.0;
    for t in &report.trials {
        let h = &t.hops[0];
        let (c1, c2) = (
            h.first_check.as_ref().unwrap(),
            h.second_check.as_ref().unwrap(),
        );
        let surviving = 10_000 - c1.sample_size - c2.sample_size - h.dispositions.dropped;
        ok &= c1.mismatches == 0 && c2.mismatches == 0;
        ok &= c1.error_rate == 0.0 && c2.error_rate == 0.0;
        ok &= t.keys_agree == Some(true);
        ok &= t.key_bits == 2 * surviving && h.dispositions.key == surviving;
    }
    ok &= report.aggregate.key_agreement_rate == Some(1.0);
    ensure(
        ok,
        format!(
            "20 trials x 1e4 pairs: error rates 0, agreement {:?}, {:.2}s",
            report.aggregate.key_agreement_rate, elapsed
        ),
    )
}

fn ac2_measure_resend() -> Outcome {
    let report = batch(
        1,
        2,
        ProtocolConfig {
            pairs: 20_000,
            attack: AttackStrategy::measure_resend(),
            second_check: CheckPolicy {
                fraction: 0.75,
                ..CheckPolicy::default()
            },
            ..ProtocolConfig::default()
        },
    );
    let h = &report.trials[0].hops[0];
    let (c1, c2) = (
        h.first_check.as_ref().unwrap(),
        h.second_check.as_ref().unwrap(),
    );
    let ok = c2.sample_size >= 10_000
        && (c2.error_rate - 0.5).abs() <= 0.02
        && c1.mismatches == 0
        && c2.cross_class == 0;
    ensure(
        ok,
        format!(
            "second check {:.4} over {}, first check {} mismatches, {} cross-class",
            c2.error_rate, c2.sample_size, c1.mismatches, c2.cross_class
        ),
    )
}

fn ac3_fake_epr() -> Outcome {
    let big = batch(
        1,
        3,
        ProtocolConfig {
            pairs: 40_000,
            attack: AttackStrategy::fake_epr(),
            ..ProtocolConfig::default()
        },
    );
    let c1 = big.trials[0].hops[0].first_check.clone().unwrap();
    let rate_ok = c1.sample_size >= 10_000 && (c1.error_rate - 0.5).abs() <= 0.02;

    let trials = 10_000u64;
    let small = batch(
        trials,
        33,
        ProtocolConfig {
            pairs: 64,
            attack: AttackStrategy::fake_epr(),
            ..ProtocolConfig::default()
        },
    );
    let m_ok = small
        .trials
        .iter()
        .all(|t| t.hops[0].first_check.as_ref().unwrap().sample_size == 16);
    let expected = 1.0 - 0.5f64.powi(16);
    let detected = small.aggregate.first_check_detection_rate;
    let tol = three_sigma(expected, trials as f64);
    ensure(
        rate_ok && m_ok && (detected - expected).abs() <= tol,
        format!(
            "first check {:.4} over {}; detection {detected} vs {expected:.6} (3σ {tol:.2e})",
            c1.error_rate, c1.sample_size
        ),
    )
}

fn ac4_mutual_information() -> Outcome {
    let clean = batch(
        1,
        4,
        ProtocolConfig {
            pairs: 20_000,
            ..ProtocolConfig::default()
        },
    );
    let attacked = batch(
        1,
        4,
        ProtocolConfig {
            pairs: 20_000,
            attack: AttackStrategy::fake_epr(),
            continuation_mode: true,
            ..ProtocolConfig::default()
        },
    );
    let decoded = |r: &RunReport| {
        r.trials[0].hops[0]
            .sender_receiver
            .iter()
            .flatten()
            .sum::<u64>()
    };
    let i_ab = clean.aggregate.i_ab.unwrap();
    let i_ab_attacked = attacked.aggregate.i_ab.unwrap();
    let i_ae = attacked.aggregate.i_ae;
    let ok = decoded(&clean) >= 10_000
        && decoded(&attacked) >= 10_000
        && (i_ab - 2.0).abs() <= 0.02
        && i_ab_attacked.abs() <= 0.02
        && (i_ae - 2.0).abs() <= 0.02;
    ensure(
        ok,
        format!("clean I_AB {i_ab:.4}; attacked I_AB {i_ab_attacked:.4}, I_AE {i_ae:.4}"),
    )
}

fn ac5_bb84_reference() -> Outcome {
    let r = reference_bb84();
    let to3 = |x: f64| (x * 1000.0).round() / 1000.0;
    let ok = to3(r.i_ab_attacked) == 0.046 && to3(r.i_ae) == 0.189 && to3(r.i_ab_clean) == 0.189;
    ensure(
        ok,
        format!(
            "I_AB attacked {:.6}, I_AE {:.6}, I_AB clean {:.6}",
            r.i_ab_attacked, r.i_ae, r.i_ab_clean
        ),
    )
}

fn ac6_efficiency() -> Outcome {
    let eta = |b_s, q_t, b_t| efficiency(&EfficiencyInputs::new(b_s, q_t, b_t).unwrap()).unwrap();
    let (bb84, epr, ours) = (eta(0.5, 1.0, 1.0), eta(1.0, 2.0, 0.0), eta(2.0, 2.0, 0.0));
    // and the per-run accounting of a clean batch
    let report = batch(
        2,
        6,
        ProtocolConfig {
            pairs: 400,
            ..ProtocolConfig::default()
        },
    );
    let measured = report.aggregate.efficiency;
    let ok = bb84 == 0.25 && epr == 0.5 && ours == 1.0 && measured == Some(1.0);
    ensure(
        ok,
        format!("BB84 {bb84}, EPR {epr}, two-step {ours}, simulated {measured:?}"),
    )
}

fn ac7_opaque() -> Outcome {
    let strict = batch(
        100,
        7,
        ProtocolConfig {
            pairs: 1000,
            attack: AttackStrategy::opaque(0.3),
            ..ProtocolConfig::default()
        },
    );
    let tolerant = batch(
        100,
        7,
        ProtocolConfig {
            pairs: 1000,
            attack: AttackStrategy::opaque(0.3),
            loss_tolerance: 0.5,
            ..ProtocolConfig::default()
        },
    );
    let (sent, received) = tolerant.trials.iter().fold((0usize, 0usize), |acc, t| {
        let h = &t.hops[0];
        (acc.0 + h.sent_1.unwrap(), acc.1 + h.received_1.unwrap())
    });
    let fraction = received as f64 / sent as f64;
    let tol = three_sigma(0.7, sent as f64);
    let ok = strict.aggregate.detection_rate == 1.0
        && strict.aggregate.stall_rate == 1.0
        && (fraction - 0.7).abs() <= tol;
    ensure(
        ok,
        format!(
            "abort rate {} at tolerance 0; receipt {fraction:.4} over {sent} (3σ {tol:.4}) at tolerance 0.5",
            strict.aggregate.stall_rate
        ),
    )
}

fn ac8_measurement_oracle() -> Outcome {
    let n = 100_000;
    let mut states: Vec<(String, TwoQubitState)> = BellLabel::ALL
        .iter()
        .map(|&l| (format!("{l:?}"), make_bell_state(l)))
        .collect();
    for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        states.push((
            format!("|{a}{b}>"),
            TwoQubitState::basis(Bit::from(a == 1), Bit::from(b == 1)),
        ));
    }
    let mut rng = RandomSource::new(8, StreamId(0));
    let mut worst: f64 = 0.0;
    for (_, state) in &states {
        let exact = bell_overlap_probabilities(state);
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[measure_bell_basis(state, &mut rng).0.index()] += 1;
        }
        for (c, p) in counts.iter().zip(exact) {
            worst = worst.max((*c as f64 / n as f64 - p).abs());
        }
        for which in [Qubit::First, Qubit::Second] {
            let exact = state.z_probabilities(which);
            let ones = (0..n)
                .filter(|_| measure_qubit_z(state, which, &mut rng).unwrap().0 == Bit::One)
                .count();
            worst = worst.max((ones as f64 / n as f64 - exact[1]).abs());
        }
    }
    let zero = bell_overlap_probabilities(&TwoQubitState::basis(Bit::Zero, Bit::Zero));
    let expansion_ok = (zero[0] - 0.5).abs() < 1e-12
        && (zero[1] - 0.5).abs() < 1e-12
        && zero[2].abs() < 1e-12
        && zero[3].abs() < 1e-12;
    ensure(
        worst <= 0.01 && expansion_ok,
        format!("8 states x 1e5 samples, worst deviation {worst:.4}; |00> -> {zero:?}"),
    )
}

fn ac9_multiparty() -> Outcome {
    let report = batch(
        20,
        9,
        ProtocolConfig {
            pairs: 1000,
            parties: 3,
            ..ProtocolConfig::default()
        },
    );
    let ok = report
        .trials
        .iter()
        .all(|t| t.committed && t.keys_agree == Some(true) && t.key_bits > 0);
    ensure(
        ok,
        format!(
            "{} of 20 chains share a key, mean {} bits",
            report
                .trials
                .iter()
                .filter(|t| t.keys_agree == Some(true))
                .count(),
            report.aggregate.mean_key_bits
        ),
    )
}

fn ac10_determinism() -> Outcome {
    let configs = [
        ProtocolConfig {
            pairs: 500,
            ..ProtocolConfig::default()
        },
        ProtocolConfig {
            pairs: 500,
            attack: AttackStrategy::measure_resend(),
            ..ProtocolConfig::default()
        },
        ProtocolConfig {
            pairs: 500,
            attack: AttackStrategy::fake_epr(),
            continuation_mode: true,
            ..ProtocolConfig::default()
        },
        ProtocolConfig {
            pairs: 500,
            attack: AttackStrategy::opaque(0.05),
            loss_tolerance: 0.2,
            parties: 3,
            ..ProtocolConfig::default()
        },
    ];
    let mut ok = true;
    for protocol in configs {
        let config = RunConfig {
            trials: 8,
            seed: 10,
            protocol,
        };
        let render = || {
            let out = run(&config, true).unwrap();
            (
                emit::structured(&out.report).unwrap(),
                emit::tabular(&out.report).unwrap(),
                emit::transcript_lines(&out.transcripts.unwrap()).unwrap(),
            )
        };
        ok &= render() == render();
    }
    ensure(
        ok,
        "4 configs x 8 trials: reports and transcripts byte-identical".into(),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        ("AC1 clean-run correctness", ac1_clean_run),
        ("AC2 direct-measurement attack", ac2_measure_resend),
        ("AC3 fake-pair attack", ac3_fake_epr),
        (
            "AC4 mutual-information headline values",
            ac4_mutual_information,
        ),
        ("AC5 BB84 reference constants", ac5_bb84_reference),
        ("AC6 efficiency", ac6_efficiency),
        ("AC7 opaque attack", ac7_opaque),
        (
            "AC8 measurement-core oracle equivalence",
            ac8_measurement_oracle,
        ),
        ("AC9 multi-party common key", ac9_multiparty),
        ("AC10 determinism", ac10_determinism),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                println!("FAIL  {name}: {detail}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
