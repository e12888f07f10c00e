//! End-to-end runs: one hop between two parties, or a relay chain in which
//! every hop re-encodes the previous hop's raw key.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::adversary::{eve_counts, AdversaryChannel, AttackStrategy, EveCountTable, EveState};
use crate::error::{ConfigError, ProtocolError};
use crate::protocol::{
    decode_pairs, extract_key, first_check, prepare_labels, prepare_pairs, second_check,
    transmit_first_sequence, transmit_second_sequence, CheckId, CheckPolicy, CheckReport,
    CountTable, DispositionTally, KeyMaterial, PairLedger, Party, RawKeys, Transmission,
    TransmissionReceipt,
};
use crate::quantum::BellLabel;
use crate::rng::RandomSource;
use crate::transcript::{
    attack_name, bit_string, check_completed, code_string, Basis, EventKind, Transcript,
};

/// Parameters of a single trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub pairs: usize,
    pub first_check: CheckPolicy,
    pub second_check: CheckPolicy,
    /// Largest tolerated share of particles lost in one transmission.
    pub loss_tolerance: f64,
    pub attack: AttackStrategy,
    /// Hop the attack applies to; `None` attacks every hop.
    pub attack_hop: Option<u8>,
    /// 2 for Alice→Bob, 3 for Alice→Bob→Clare.
    pub parties: u8,
    /// Keep running after a failed check so later statistics exist.
    pub continuation_mode: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            pairs: 1000,
            first_check: CheckPolicy::default(),
            second_check: CheckPolicy::default(),
            loss_tolerance: 0.0,
            attack: AttackStrategy::None,
            attack_hop: None,
            parties: 2,
            continuation_mode: false,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.pairs == 0 {
            return Err(ConfigError::NoPairs);
        }
        self.first_check.validate("first check")?;
        self.second_check.validate("second check")?;
        if !(0.0..=1.0).contains(&self.loss_tolerance) {
            return Err(ConfigError::Proportion {
                name: "loss tolerance",
                value: self.loss_tolerance,
            });
        }
        self.attack.validate()?;
        if !(2..=3).contains(&self.parties) {
            return Err(ConfigError::Parties(self.parties));
        }
        if let Some(hop) = self.attack_hop {
            if hop == 0 || hop >= self.parties {
                return Err(ConfigError::AttackHop {
                    hop,
                    parties: self.parties,
                });
            }
        }
        Ok(())
    }

    fn attack_on(&self, hop: u8) -> AttackStrategy {
        match self.attack_hop {
            Some(h) if h != hop => AttackStrategy::None,
            _ => self.attack,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AbortReason {
    FirstCheckFailed,
    SecondCheckFailed,
    /// Too few particles arrived in a transmission.
    Stalled {
        sequence: Transmission,
    },
    EmptyCheckSample {
        check: CheckId,
    },
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::FirstCheckFailed => f.write_str("first_check_failed"),
            AbortReason::SecondCheckFailed => f.write_str("second_check_failed"),
            AbortReason::Stalled { sequence } => write!(f, "stalled_{}", sequence.number()),
            AbortReason::EmptyCheckSample { check } => write!(f, "empty_{check}_check"),
        }
    }
}

/// Outcome of one hop.
#[derive(Debug, Clone)]
pub struct HopReport {
    pub hop: u8,
    pub sender: Party,
    pub receiver: Party,
    pub attack: AttackStrategy,
    pub first_transmission: Option<TransmissionReceipt>,
    pub second_transmission: Option<TransmissionReceipt>,
    pub first_check: Option<CheckReport>,
    pub second_check: Option<CheckReport>,
    /// First failure in protocol order. In continuation mode the run goes on
    /// after it, but no key is produced.
    pub abort: Option<AbortReason>,
    pub keys: Option<RawKeys>,
    pub tally: DispositionTally,
    /// Prepared label × receiver's Bell outcome over all decoded pairs.
    pub sender_receiver: CountTable,
    /// Prepared label × Eve's guess symbol.
    pub sender_eve: EveCountTable,
    pub eve: EveState,
    pub ledger: PairLedger,
}

impl HopReport {
    pub fn committed(&self) -> bool {
        self.abort.is_none() && self.keys.is_some()
    }
}

/// A key held by one party of a chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyKey {
    pub party: Party,
    pub key: KeyMaterial,
}

/// One full trial: every hop that ran, plus the keys common to all parties.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub hops: Vec<HopReport>,
    /// Keys in chain order, present only if every hop committed.
    pub keys: Option<Vec<PartyKey>>,
    pub transcript: Transcript,
}

impl TrialRun {
    pub fn aborted(&self) -> Option<(u8, AbortReason)> {
        self.hops
            .iter()
            .find_map(|h| h.abort.map(|reason| (h.hop, reason)))
    }

    /// True when a key exists and every party holds the same one.
    pub fn keys_agree(&self) -> Option<bool> {
        self.keys
            .as_ref()
            .map(|keys| keys.windows(2).all(|w| w[0].key == w[1].key))
    }
}

fn stalled(rx: &TransmissionReceipt, loss_tolerance: f64) -> bool {
    rx.sent > 0 && rx.fraction() < 1.0 - loss_tolerance
}

struct Hop<'a> {
    config: &'a ProtocolConfig,
    hop: u8,
    sender: Party,
    receiver: Party,
    seed: u64,
}

impl Hop<'_> {
    fn run(
        &self,
        labels: Option<&[BellLabel]>,
        log: &mut Transcript,
    ) -> Result<HopReport, ProtocolError> {
        let (hop, sender, receiver) = (self.hop, self.sender, self.receiver);
        let config = self.config;
        let mut sender_rng = RandomSource::for_party(self.seed, hop, sender);
        let mut receiver_rng = RandomSource::for_party(self.seed, hop, receiver);
        let attack = config.attack_on(hop);
        let mut channel =
            AdversaryChannel::new(attack, RandomSource::for_party(self.seed, hop, Party::Eve));

        let mut ledger = match labels {
            None => prepare_pairs(config.pairs, &mut sender_rng)?,
            Some(labels) => prepare_labels(labels)?,
        };
        if config.continuation_mode {
            ledger.enable_continuation();
        }
        log.push(
            hop,
            1,
            sender,
            EventKind::Prepared {
                pairs: ledger.len(),
                codes: code_string(ledger.records().iter().map(|r| r.prepared())),
            },
        );

        let mut report = HopReport {
            hop,
            sender,
            receiver,
            attack,
            first_transmission: None,
            second_transmission: None,
            first_check: None,
            second_check: None,
            abort: None,
            keys: None,
            tally: DispositionTally::default(),
            sender_receiver: [[0; 4]; 4],
            sender_eve: [[0; 6]; 4],
            eve: EveState::default(),
            ledger: ledger.clone(),
        };

        let outcome = self.drive(
            &mut ledger,
            &mut channel,
            &mut sender_rng,
            &mut receiver_rng,
            &mut report,
            log,
        );
        if let Err(reason) = outcome? {
            report.abort.get_or_insert(reason);
        }
        match report.abort {
            Some(reason) => log.push(hop, 7, sender, EventKind::Aborted { reason }),
            None => {
                let keys = extract_key(&ledger)?;
                log.push(
                    hop,
                    7,
                    sender,
                    EventKind::Committed {
                        key_pairs: keys.sender.source_indices().len(),
                        key_bits: keys.sender.len_bits(),
                    },
                );
                report.keys = Some(keys);
            }
        }
        report.tally = ledger.tally();
        report.sender_receiver = ledger.sender_receiver_counts();
        report.eve = channel.into_eve();
        report.sender_eve = eve_counts(&report.eve, &ledger);
        report.ledger = ledger;
        Ok(report)
    }

    /// Steps 2–7. The inner `Err` is a protocol abort; the outer one a real
    /// error.
    fn drive(
        &self,
        ledger: &mut PairLedger,
        channel: &mut AdversaryChannel,
        sender_rng: &mut RandomSource,
        receiver_rng: &mut RandomSource,
        report: &mut HopReport,
        log: &mut Transcript,
    ) -> Result<Result<(), AbortReason>, ProtocolError> {
        let (hop, sender, receiver) = (self.hop, self.sender, self.receiver);
        let config = self.config;

        let rx1 = self.transmit(Transmission::First, ledger, channel, log)?;
        report.first_transmission = Some(rx1);
        if stalled(&rx1, config.loss_tolerance) {
            self.log_stall(&rx1, log);
            return Ok(Err(AbortReason::Stalled {
                sequence: Transmission::First,
            }));
        }

        let c1 = match first_check(ledger, &config.first_check, receiver_rng, sender_rng) {
            Ok(c) => c,
            Err(ProtocolError::EmptySample(check)) => {
                return Ok(Err(AbortReason::EmptyCheckSample { check }))
            }
            Err(e) => return Err(e),
        };
        let bits: Vec<_> = c1
            .sample_indices
            .iter()
            .map(|&i| {
                ledger.records()[i]
                    .check_bits()
                    .expect("sampled pairs are measured")
            })
            .collect();
        log.push(
            hop,
            3,
            receiver,
            EventKind::Measured {
                basis: Basis::Z,
                indices: c1.sample_indices.clone(),
                outcomes: bit_string(bits.iter().map(|b| b.1)),
            },
        );
        log.push(
            hop,
            4,
            receiver,
            EventKind::Announced {
                check: CheckId::First,
                indices: c1.sample_indices.clone(),
            },
        );
        log.push(
            hop,
            4,
            sender,
            EventKind::Measured {
                basis: Basis::Z,
                indices: c1.sample_indices.clone(),
                outcomes: bit_string(bits.iter().map(|b| b.0)),
            },
        );
        log.push(hop, 4, sender, check_completed(&c1));
        let first_passed = c1.passed;
        report.first_check = Some(c1);
        if !first_passed {
            report.abort = Some(AbortReason::FirstCheckFailed);
            if !config.continuation_mode {
                return Ok(Ok(()));
            }
        }

        let rx2 = self.transmit(Transmission::Second, ledger, channel, log)?;
        report.second_transmission = Some(rx2);
        if stalled(&rx2, config.loss_tolerance) {
            self.log_stall(&rx2, log);
            return Ok(Err(AbortReason::Stalled {
                sequence: Transmission::Second,
            }));
        }

        decode_pairs(ledger, receiver_rng)?;
        let (indices, outcomes): (Vec<usize>, Vec<BellLabel>) = ledger
            .records()
            .iter()
            .filter_map(|r| r.outcome().map(|o| (r.index(), o)))
            .unzip();
        log.push(
            hop,
            6,
            receiver,
            EventKind::Measured {
                basis: Basis::Bell,
                indices,
                outcomes: code_string(outcomes),
            },
        );

        let c2 = match second_check(ledger, &config.second_check, sender_rng) {
            Ok(c) => c,
            Err(ProtocolError::EmptySample(check)) => {
                return Ok(Err(AbortReason::EmptyCheckSample { check }))
            }
            Err(e) => return Err(e),
        };
        log.push(
            hop,
            7,
            sender,
            EventKind::Announced {
                check: CheckId::Second,
                indices: c2.sample_indices.clone(),
            },
        );
        log.push(hop, 7, sender, check_completed(&c2));
        let second_passed = c2.passed;
        report.second_check = Some(c2);
        if !second_passed {
            return Ok(Err(AbortReason::SecondCheckFailed));
        }
        Ok(Ok(()))
    }

    fn transmit(
        &self,
        sequence: Transmission,
        ledger: &mut PairLedger,
        channel: &mut AdversaryChannel,
        log: &mut Transcript,
    ) -> Result<TransmissionReceipt, ProtocolError> {
        let step = match sequence {
            Transmission::First => 2,
            Transmission::Second => 5,
        };
        let before = eve_activity(channel.eve());
        let rx = match sequence {
            Transmission::First => transmit_first_sequence(ledger, channel)?,
            Transmission::Second => transmit_second_sequence(ledger, channel)?,
        };
        log.push(
            self.hop,
            step,
            self.sender,
            EventKind::Sent {
                sequence,
                sent: rx.sent,
            },
        );
        if *channel.strategy() != AttackStrategy::None {
            let after = eve_activity(channel.eve());
            log.push(
                self.hop,
                step,
                Party::Eve,
                EventKind::Intercepted {
                    sequence,
                    attack: attack_name(channel.strategy()),
                    captured: after.0 - before.0,
                    measured: after.1 - before.1,
                    destroyed: after.2 - before.2,
                },
            );
        }
        log.push(
            self.hop,
            step,
            self.receiver,
            EventKind::Received {
                sequence,
                received: rx.received,
            },
        );
        Ok(rx)
    }

    fn log_stall(&self, rx: &TransmissionReceipt, log: &mut Transcript) {
        let step = match rx.sequence {
            Transmission::First => 2,
            Transmission::Second => 5,
        };
        log.push(
            self.hop,
            step,
            self.receiver,
            EventKind::Stalled {
                sequence: rx.sequence,
                sent: rx.sent,
                received: rx.received,
                loss_tolerance: self.config.loss_tolerance,
            },
        );
    }
}

fn eve_activity(eve: &EveState) -> (usize, usize, usize) {
    (
        eve.captured_halves.len(),
        eve.measurement_log.len(),
        eve.destroyed,
    )
}

/// Alice→Bob, all seven steps.
pub fn run_protocol(
    config: &ProtocolConfig,
    seed: u64,
) -> Result<(HopReport, Transcript), ProtocolError> {
    config.validate()?;
    let mut log = Transcript::new();
    let hop = Hop {
        config,
        hop: 1,
        sender: Party::Alice,
        receiver: Party::Bob,
        seed,
    };
    let report = hop.run(None, &mut log)?;
    Ok((report, log))
}

/// Alice→Bob, then Bob re-encodes his raw key into fresh pairs and runs the
/// same protocol with Clare. The common key is the set of first-hop ordinals
/// that survive both hops.
pub fn run_multiparty(config: &ProtocolConfig, seed: u64) -> Result<TrialRun, ProtocolError> {
    config.validate()?;
    let mut log = Transcript::new();
    let first = Hop {
        config,
        hop: 1,
        sender: Party::Alice,
        receiver: Party::Bob,
        seed,
    }
    .run(None, &mut log)?;
    let Some(first_keys) = first.keys.clone() else {
        return Ok(TrialRun {
            hops: alloc::vec![first],
            keys: None,
            transcript: log,
        });
    };

    let ordinals = first_keys.receiver.source_indices().to_vec();
    let relayed: Vec<BellLabel> = first_keys.receiver.labels().collect();
    log.push(
        2,
        1,
        Party::Bob,
        EventKind::Relayed {
            ordinals: ordinals.clone(),
        },
    );
    let second = Hop {
        config,
        hop: 2,
        sender: Party::Bob,
        receiver: Party::Clare,
        seed,
    }
    .run(Some(&relayed), &mut log)?;

    let keys = second.keys.as_ref().map(|k| {
        let kept = k.receiver.source_indices();
        let upstream: Vec<usize> = kept.iter().map(|&j| ordinals[j]).collect();
        let alice_labels: Vec<BellLabel> = first_keys.sender.labels().collect();
        let by_position = |labels: &[BellLabel]| {
            KeyMaterial::from_labels(kept.iter().zip(&upstream).map(|(&j, &o)| (o, labels[j])))
        };
        let clare_labels: Vec<BellLabel> = k.receiver.labels().collect();
        let clare = KeyMaterial::from_labels(upstream.iter().copied().zip(clare_labels));
        alloc::vec![
            PartyKey {
                party: Party::Alice,
                key: by_position(&alice_labels)
            },
            PartyKey {
                party: Party::Bob,
                key: by_position(&relayed)
            },
            PartyKey {
                party: Party::Clare,
                key: clare
            },
        ]
    });
    Ok(TrialRun {
        hops: alloc::vec![first, second],
        keys,
        transcript: log,
    })
}

/// Runs one trial with the chain length from `config`.
pub fn run_trial(config: &ProtocolConfig, seed: u64) -> Result<TrialRun, ProtocolError> {
    if config.parties == 3 {
        return run_multiparty(config, seed);
    }
    let (hop, transcript) = run_protocol(config, seed)?;
    let keys = hop.keys.as_ref().map(|k| {
        alloc::vec![
            PartyKey {
                party: Party::Alice,
                key: k.sender.clone()
            },
            PartyKey {
                party: Party::Bob,
                key: k.receiver.clone()
            },
        ]
    });
    Ok(TrialRun {
        hops: alloc::vec![hop],
        keys,
        transcript,
    })
}
