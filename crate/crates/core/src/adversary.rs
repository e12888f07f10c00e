//! Channel interposition: the identity channel and the three attacks.
//!
//! Eve only ever sees the particles in transit (see
//! [`PairLedger::in_transit_mut`]); prepared labels are used afterwards for
//! scoring in [`eve_information`] and never feed back into an attack.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::analysis::JointDistribution;
use crate::error::{ConfigError, ProtocolError};
use crate::protocol::{Holder, PairLedger, Transmission};
use crate::quantum::{make_bell_state, measure_bell_basis, measure_qubit_z, BellLabel, Bit, Qubit};
use crate::rng::RandomSource;

/// Which Bell state Eve prepares for her substitute pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "label")]
pub enum FakePairPolicy {
    Fixed(BellLabel),
    Uniform,
}

impl Default for FakePairPolicy {
    fn default() -> Self {
        FakePairPolicy::Fixed(BellLabel::Psi1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AttackStrategy {
    #[default]
    None,
    /// Z-measure every half of the first sequence and resend it. With
    /// `measure_both` Eve also Z-measures the second sequence.
    MeasureResend { measure_both: bool },
    /// Keep the genuine halves, forward halves of Eve's own pairs, then Bell
    /// measure the genuine pairs once the second sequence arrives.
    FakeEpr { fakes: FakePairPolicy },
    /// Destroy each in-flight half with `destroy_probability`, forward the
    /// rest untouched.
    Opaque { destroy_probability: f64 },
}

impl AttackStrategy {
    pub const fn measure_resend() -> Self {
        AttackStrategy::MeasureResend {
            measure_both: false,
        }
    }

    pub const fn fake_epr() -> Self {
        AttackStrategy::FakeEpr {
            fakes: FakePairPolicy::Fixed(BellLabel::Psi1),
        }
    }

    pub const fn opaque(destroy_probability: f64) -> Self {
        AttackStrategy::Opaque {
            destroy_probability,
        }
    }

    pub const fn name(&self) -> &'static str {
        match self {
            AttackStrategy::None => "none",
            AttackStrategy::MeasureResend { .. } => "measure-resend",
            AttackStrategy::FakeEpr { .. } => "fake-epr",
            AttackStrategy::Opaque { .. } => "opaque",
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let AttackStrategy::Opaque {
            destroy_probability,
        } = *self
        {
            if !(0.0..=1.0).contains(&destroy_probability) {
                return Err(ConfigError::Proportion {
                    name: "destroy probability",
                    value: destroy_probability,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Observation {
    Z(Bit),
    Bell(BellLabel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveRecord {
    pub index: usize,
    pub sequence: Transmission,
    pub observation: Observation,
}

/// Everything Eve holds or has learned.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveState {
    pub captured_halves: Vec<(usize, Qubit)>,
    pub measurement_log: Vec<EveRecord>,
    pub inferred_key: Vec<(usize, BellLabel)>,
    pub destroyed: usize,
}

impl EveState {
    pub fn is_empty(&self) -> bool {
        self.captured_halves.is_empty()
            && self.measurement_log.is_empty()
            && self.inferred_key.is_empty()
            && self.destroyed == 0
    }

    /// Eve's best symbol per ordinal, derived only from her own log: a Bell
    /// result is its 2-bit code, Z bits from both sequences give
    /// `2·first + second`, a lone Z bit gives `4 + bit`. Returned in ordinal
    /// order; see [`EVE_SYMBOLS`].
    pub fn guesses(&self) -> Vec<(usize, u8)> {
        let mut bell: BTreeMap<usize, u8> = BTreeMap::new();
        let mut z: BTreeMap<usize, (Option<Bit>, Option<Bit>)> = BTreeMap::new();
        for rec in &self.measurement_log {
            match rec.observation {
                Observation::Bell(label) => {
                    bell.insert(rec.index, label.code());
                }
                Observation::Z(bit) => {
                    let slot = z.entry(rec.index).or_default();
                    match rec.sequence {
                        Transmission::First => slot.1 = Some(bit),
                        Transmission::Second => slot.0 = Some(bit),
                    }
                }
            }
        }
        for (index, halves) in z {
            let symbol = match halves {
                (Some(f), Some(s)) => 2 * f.value() + s.value(),
                (Some(b), None) | (None, Some(b)) => 4 + b.value(),
                (None, None) => continue,
            };
            bell.entry(index).or_insert(symbol);
        }
        bell.into_iter().collect()
    }
}

/// The channel between sender and receiver, with whoever sits on it.
#[derive(Debug, Clone)]
pub struct AdversaryChannel {
    strategy: AttackStrategy,
    eve: EveState,
    rng: RandomSource,
}

impl AdversaryChannel {
    pub fn new(strategy: AttackStrategy, rng: RandomSource) -> Self {
        AdversaryChannel {
            strategy,
            eve: EveState::default(),
            rng,
        }
    }

    pub fn strategy(&self) -> &AttackStrategy {
        &self.strategy
    }

    pub fn eve(&self) -> &EveState {
        &self.eve
    }

    pub fn into_eve(self) -> EveState {
        self.eve
    }

    pub(crate) fn interpose(
        &mut self,
        sequence: Transmission,
        ledger: &mut PairLedger,
    ) -> Result<(), ProtocolError> {
        interpose(
            &self.strategy,
            sequence,
            ledger,
            &mut self.eve,
            &mut self.rng,
        )
    }
}

/// Applies `strategy` to every particle in flight for `sequence`.
pub fn interpose(
    strategy: &AttackStrategy,
    sequence: Transmission,
    ledger: &mut PairLedger,
    eve: &mut EveState,
    rng: &mut RandomSource,
) -> Result<(), ProtocolError> {
    let half = match sequence {
        Transmission::First => Qubit::Second,
        Transmission::Second => Qubit::First,
    };
    match (*strategy, sequence) {
        (AttackStrategy::None, _) => {}
        (AttackStrategy::MeasureResend { .. }, Transmission::First)
        | (AttackStrategy::MeasureResend { measure_both: true }, Transmission::Second) => {
            for (index, p) in ledger.in_transit_mut(sequence) {
                let (bit, post) = measure_qubit_z(&p.carrier, half, rng)?;
                p.carrier = post;
                eve.measurement_log.push(EveRecord {
                    index,
                    sequence,
                    observation: Observation::Z(bit),
                });
            }
        }
        (
            AttackStrategy::MeasureResend {
                measure_both: false,
            },
            Transmission::Second,
        ) => {}
        (AttackStrategy::FakeEpr { fakes }, Transmission::First) => {
            for (index, p) in ledger.in_transit_mut(sequence) {
                let label = match fakes {
                    FakePairPolicy::Fixed(label) => label,
                    FakePairPolicy::Uniform => BellLabel::ALL[rng.below(4)],
                };
                p.custody.second = Holder::Eve;
                p.substitute = Some(make_bell_state(label));
                eve.captured_halves.push((index, Qubit::Second));
            }
        }
        (AttackStrategy::FakeEpr { .. }, Transmission::Second) => {
            for (index, p) in ledger.in_transit_mut(sequence) {
                p.custody.first = Holder::Eve;
                eve.captured_halves.push((index, Qubit::First));
                if p.custody.second == Holder::Eve {
                    let (label, post) = measure_bell_basis(&p.carrier, rng);
                    p.carrier = post;
                    eve.inferred_key.push((index, label));
                    eve.measurement_log.push(EveRecord {
                        index,
                        sequence,
                        observation: Observation::Bell(label),
                    });
                }
            }
        }
        (
            AttackStrategy::Opaque {
                destroy_probability,
            },
            _,
        ) => {
            for (_, p) in ledger.in_transit_mut(sequence) {
                if rng.chance(destroy_probability) {
                    match half {
                        Qubit::First => p.custody.first = Holder::Destroyed,
                        Qubit::Second => p.custody.second = Holder::Destroyed,
                    }
                    eve.destroyed += 1;
                }
            }
        }
    }
    Ok(())
}

/// Size of Eve's guess alphabet.
pub const EVE_SYMBOLS: usize = 6;

/// Prepared code × Eve's guess symbol.
pub type EveCountTable = [[u64; EVE_SYMBOLS]; 4];

/// Prepared code against Eve's guess symbol for every ordinal she has a
/// guess for.
pub fn eve_counts(eve: &EveState, truth: &PairLedger) -> EveCountTable {
    let mut table = [[0u64; EVE_SYMBOLS]; 4];
    let records = truth.records();
    for (index, symbol) in eve.guesses() {
        if let Some(r) = records.get(index) {
            table[r.prepared().index()][symbol as usize] += 1;
        }
    }
    table
}

/// Empirical joint distribution of (sender's code, Eve's guess), or `None`
/// when Eve learned nothing.
pub fn eve_information(eve: &EveState, truth: &PairLedger) -> Option<JointDistribution> {
    JointDistribution::from_count_table(&eve_counts(eve, truth)).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::mutual_information;
    use crate::protocol::{
        decode_pairs, first_check, prepare_pairs, transmit_first_sequence,
        transmit_second_sequence, CheckPolicy, Disposition,
    };
    use crate::quantum::{bell_overlap_probabilities, Parity, TwoQubitState};
    use crate::rng::StreamId;

    fn rng(stream: u64) -> RandomSource {
        RandomSource::new(77, StreamId(stream))
    }

    fn sent_first(n: usize, strategy: AttackStrategy) -> (PairLedger, AdversaryChannel) {
        let mut ledger = prepare_pairs(n, &mut rng(0)).unwrap();
        let mut ch = AdversaryChannel::new(strategy, rng(3));
        transmit_first_sequence(&mut ledger, &mut ch).unwrap();
        (ledger, ch)
    }

    fn continued(n: usize, strategy: AttackStrategy) -> (PairLedger, AdversaryChannel) {
        let (mut ledger, mut ch) = sent_first(n, strategy);
        ledger.enable_continuation();
        let policy = CheckPolicy {
            fraction: 0.01,
            min_sample: 1,
            threshold: 1.0,
        };
        first_check(&mut ledger, &policy, &mut rng(1), &mut rng(2)).unwrap();
        transmit_second_sequence(&mut ledger, &mut ch).unwrap();
        decode_pairs(&mut ledger, &mut rng(1)).unwrap();
        (ledger, ch)
    }

    #[test]
    fn identity_channel_leaves_everything_alone() {
        let (ledger, ch) = sent_first(32, AttackStrategy::None);
        assert!(ch.eve().is_empty());
        for r in ledger.records() {
            assert_eq!(*r.carrier(), make_bell_state(r.prepared()));
        }
        assert!(eve_information(ch.eve(), &ledger).is_none());
    }

    #[test]
    fn measure_resend_collapses_to_product_states() {
        let (ledger, ch) = sent_first(256, AttackStrategy::measure_resend());
        assert_eq!(ch.eve().measurement_log.len(), 256);
        for (r, rec) in ledger.records().iter().zip(&ch.eve().measurement_log) {
            let Observation::Z(bit) = rec.observation else {
                panic!()
            };
            let first = match r.prepared().parity() {
                Parity::Equal => bit,
                Parity::Opposite => Bit::from(bit == Bit::Zero),
            };
            let overlap = TwoQubitState::basis(first, bit)
                .inner(r.carrier())
                .norm_sqr();
            assert!((overlap - 1.0).abs() < 1e-12);
            assert_eq!(r.custody().second, Holder::Receiver);
        }
    }

    #[test]
    fn collapsed_states_keep_their_parity_class() {
        // Exact: |00⟩,|11⟩ expand over Psi1/Psi2 only; |01⟩,|10⟩ over Psi3/Psi4.
        for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let s = TwoQubitState::basis(Bit::from(a == 1), Bit::from(b == 1));
            let p = bell_overlap_probabilities(&s);
            let (same, other) = if a == b {
                ([0, 1], [2, 3])
            } else {
                ([2, 3], [0, 1])
            };
            for i in same {
                assert!((p[i] - 0.5).abs() < 1e-12);
            }
            for i in other {
                assert!(p[i].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fake_epr_gives_eve_every_label() {
        let (ledger, ch) = continued(2000, AttackStrategy::fake_epr());
        let eve = ch.eve();
        let decoded = ledger
            .records()
            .iter()
            .filter(|r| r.disposition() == Disposition::Decoded)
            .count();
        assert_eq!(eve.inferred_key.len(), decoded);
        for &(i, label) in &eve.inferred_key {
            assert_eq!(label, ledger.records()[i].prepared());
        }
        let joint = eve_information(eve, &ledger).unwrap();
        assert!((mutual_information(&joint) - 2.0).abs() < 0.02);
        // receiver decodes Eve's own Psi1 pairs
        for r in ledger.records() {
            if let Some(seen) = r.outcome() {
                assert_eq!(seen, BellLabel::Psi1);
            }
        }
    }

    #[test]
    fn measure_resend_bit_carries_no_label_information() {
        let (ledger, ch) = sent_first(10_000, AttackStrategy::measure_resend());
        let joint = eve_information(ch.eve(), &ledger).unwrap();
        assert!(mutual_information(&joint) < 0.05);
    }

    #[test]
    fn measure_both_leaks_exactly_the_parity_bit() {
        let (ledger, ch) = continued(10_000, AttackStrategy::MeasureResend { measure_both: true });
        let joint = eve_information(ch.eve(), &ledger).unwrap();
        let i = mutual_information(&joint);
        assert!((i - 1.0).abs() < 0.02, "{i}");
    }

    #[test]
    fn opaque_receipt_fraction() {
        // 3σ for p = 0.7, n = 1e4 is 0.0137.
        let (ledger, _) = sent_first(10_000, AttackStrategy::opaque(0.3));
        let kept = ledger
            .records()
            .iter()
            .filter(|r| r.disposition() != Disposition::Dropped)
            .count();
        assert!((kept as f64 / 1e4 - 0.7).abs() < 0.0138);
        let (all_gone, _) = sent_first(50, AttackStrategy::opaque(1.0));
        assert!(all_gone
            .records()
            .iter()
            .all(|r| r.custody().second == Holder::Destroyed));
    }

    #[test]
    fn eve_never_reads_prepared_labels() {
        // Same particles, different secret labels: Eve's data must not move.
        for strategy in [
            AttackStrategy::measure_resend(),
            AttackStrategy::fake_epr(),
            AttackStrategy::opaque(0.4),
        ] {
            let mut a = prepare_pairs(64, &mut rng(0)).unwrap();
            let mut b = a.clone();
            for r in b.records_mut() {
                r.prepared = BellLabel::ALL[(r.prepared.index() + 1) % 4];
            }
            let mut ch_a = AdversaryChannel::new(strategy, rng(3));
            let mut ch_b = AdversaryChannel::new(strategy, rng(3));
            transmit_first_sequence(&mut a, &mut ch_a).unwrap();
            transmit_first_sequence(&mut b, &mut ch_b).unwrap();
            assert_eq!(ch_a.eve(), ch_b.eve());
        }
    }

    #[test]
    fn eve_replays_from_her_own_stream() {
        let ledger = prepare_pairs(128, &mut rng(0)).unwrap();
        let run = || {
            let mut l = ledger.clone();
            let mut ch = AdversaryChannel::new(AttackStrategy::measure_resend(), rng(3));
            transmit_first_sequence(&mut l, &mut ch).unwrap();
            ch.into_eve()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_destroy_probability() {
        assert!(AttackStrategy::opaque(1.5).validate().is_err());
        assert!(AttackStrategy::opaque(-0.1).validate().is_err());
        assert!(AttackStrategy::opaque(0.3).validate().is_ok());
    }

    #[test]
    fn guesses_combine_both_sequences() {
        let eve = EveState {
            measurement_log: alloc::vec![
                EveRecord {
                    index: 3,
                    sequence: Transmission::First,
                    observation: Observation::Z(Bit::One)
                },
                EveRecord {
                    index: 1,
                    sequence: Transmission::First,
                    observation: Observation::Z(Bit::Zero)
                },
                EveRecord {
                    index: 3,
                    sequence: Transmission::Second,
                    observation: Observation::Z(Bit::One)
                },
            ],
            ..EveState::default()
        };
        assert_eq!(eve.guesses(), alloc::vec![(1, 4), (3, 3)]);
    }
}
