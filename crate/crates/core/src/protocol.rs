//! Pair bookkeeping and the individual protocol steps.
//!
//! A [`PairLedger`] tracks every prepared pair from preparation to its final
//! disposition. The step functions advance the ledger through a fixed phase
//! order and refuse to run out of order. "Sender" and "receiver" are Alice and
//! Bob on the first hop; on a relay hop Bob sends and Clare receives.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::adversary::AdversaryChannel;
use crate::error::{ConfigError, ProtocolError};
use crate::quantum::{
    make_bell_state, measure_bell_basis, measure_qubit_z, BellLabel, Bit, Parity, Qubit,
    TwoQubitState,
};
use crate::rng::RandomSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Party {
    Alice = 0,
    Bob = 1,
    Clare = 2,
    Eve = 3,
}

impl Party {
    pub const fn name(self) -> &'static str {
        match self {
            Party::Alice => "alice",
            Party::Bob => "bob",
            Party::Clare => "clare",
            Party::Eve => "eve",
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Who currently holds one particle of a genuine pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Holder {
    Sender,
    Receiver,
    Eve,
    Destroyed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Custody {
    pub first: Holder,
    pub second: Holder,
}

impl Custody {
    pub fn is_destroyed(&self) -> bool {
        self.first == Holder::Destroyed || self.second == Holder::Destroyed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Prepared,
    /// Second half sent; the first half is still with the sender.
    InFlight1,
    Checked1,
    /// Both halves sent.
    InFlight2,
    Decoded,
    Checked2,
    Key,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transmission {
    First,
    Second,
}

impl Transmission {
    pub const fn number(self) -> u8 {
        match self {
            Transmission::First => 1,
            Transmission::Second => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckId {
    First,
    Second,
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckId::First => "first",
            CheckId::Second => "second",
        })
    }
}

/// The physical side of one pair: the genuine carrier, who holds its halves,
/// and an optional substitute pair an adversary slipped to the receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Particles {
    pub carrier: TwoQubitState,
    pub custody: Custody,
    /// When present, the receiver's particles belong to this pair instead of
    /// the genuine carrier.
    pub substitute: Option<TwoQubitState>,
}

impl Particles {
    fn receiver_has(&self, half: Qubit) -> bool {
        if self.substitute.is_some() {
            return true;
        }
        let holder = match half {
            Qubit::First => self.custody.first,
            Qubit::Second => self.custody.second,
        };
        holder == Holder::Receiver
    }

    /// The joint state the receiver would Bell-measure, if it holds both
    /// particles.
    fn receiver_pair_mut(&mut self) -> Option<&mut TwoQubitState> {
        match self.substitute {
            Some(ref mut s) => Some(s),
            None if self.custody.first == Holder::Receiver
                && self.custody.second == Holder::Receiver =>
            {
                Some(&mut self.carrier)
            }
            None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    index: usize,
    pub(crate) prepared: BellLabel,
    particles: Particles,
    disposition: Disposition,
    /// (sender bit, receiver bit) if the pair was used by the first check.
    check_bits: Option<(Bit, Bit)>,
    outcome: Option<BellLabel>,
}

impl PairRecord {
    pub fn index(&self) -> usize {
        self.index
    }

    /// The sender's secret label.
    pub fn prepared(&self) -> BellLabel {
        self.prepared
    }

    pub fn particles(&self) -> &Particles {
        &self.particles
    }

    pub fn carrier(&self) -> &TwoQubitState {
        &self.particles.carrier
    }

    pub fn custody(&self) -> Custody {
        self.particles.custody
    }

    pub fn disposition(&self) -> Disposition {
        self.disposition
    }

    pub fn check_bits(&self) -> Option<(Bit, Bit)> {
        self.check_bits
    }

    /// The receiver's Bell-measurement result, once decoded.
    pub fn outcome(&self) -> Option<BellLabel> {
        self.outcome
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Prepared,
    FirstSent,
    FirstChecked,
    SecondSent,
    Decoded,
    SecondChecked,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispositionTally {
    pub prepared: usize,
    pub in_flight_1: usize,
    pub checked_1: usize,
    pub in_flight_2: usize,
    pub decoded: usize,
    pub checked_2: usize,
    pub key: usize,
    pub dropped: usize,
}

impl DispositionTally {
    pub fn total(&self) -> usize {
        self.prepared
            + self.in_flight_1
            + self.checked_1
            + self.in_flight_2
            + self.decoded
            + self.checked_2
            + self.key
            + self.dropped
    }

    /// Pairs that reached an end state.
    pub fn settled(&self) -> usize {
        self.checked_1 + self.checked_2 + self.key + self.dropped
    }
}

/// Prepared-label × observed-label counts, indexed by key code.
pub type CountTable = [[u64; 4]; 4];

/// Ordered record of all N pairs of one hop.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLedger {
    records: Vec<PairRecord>,
    phase: Phase,
    first_passed: Option<bool>,
    second_passed: Option<bool>,
    continuation: bool,
}

impl PairLedger {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PairRecord] {
        &self.records
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn first_passed(&self) -> Option<bool> {
        self.first_passed
    }

    pub fn second_passed(&self) -> Option<bool> {
        self.second_passed
    }

    /// Lets the run proceed past a failed first check so that later-stage
    /// statistics can be observed. Keys are never extracted in this mode
    /// once a check has failed.
    pub fn enable_continuation(&mut self) {
        self.continuation = true;
    }

    pub fn tally(&self) -> DispositionTally {
        let mut t = DispositionTally::default();
        for r in &self.records {
            match r.disposition {
                Disposition::Prepared => t.prepared += 1,
                Disposition::InFlight1 => t.in_flight_1 += 1,
                Disposition::Checked1 => t.checked_1 += 1,
                Disposition::InFlight2 => t.in_flight_2 += 1,
                Disposition::Decoded => t.decoded += 1,
                Disposition::Checked2 => t.checked_2 += 1,
                Disposition::Key => t.key += 1,
                Disposition::Dropped => t.dropped += 1,
            }
        }
        t
    }

    /// Prepared label against the receiver's Bell outcome, over every decoded
    /// pair (checked or kept).
    pub fn sender_receiver_counts(&self) -> CountTable {
        let mut table = [[0u64; 4]; 4];
        for r in &self.records {
            if let Some(seen) = r.outcome {
                table[r.prepared.index()][seen.index()] += 1;
            }
        }
        table
    }

    /// Particles currently crossing the channel in `sequence`, by ordinal.
    /// This is the only view an adversary gets: prepared labels stay hidden.
    pub(crate) fn in_transit_mut(
        &mut self,
        sequence: Transmission,
    ) -> impl Iterator<Item = (usize, &mut Particles)> + '_ {
        let wanted = match sequence {
            Transmission::First => Disposition::InFlight1,
            Transmission::Second => Disposition::InFlight2,
        };
        self.records
            .iter_mut()
            .filter(move |r| r.disposition == wanted)
            .map(|r| (r.index, &mut r.particles))
    }

    #[cfg(test)]
    pub(crate) fn records_mut(&mut self) -> &mut [PairRecord] {
        &mut self.records
    }

    fn expect_phase(&self, phase: Phase, what: &'static str) -> Result<(), ProtocolError> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(ProtocolError::OrderViolation(what))
        }
    }
}

/// How a check picks its sample and judges the result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckPolicy {
    /// Share of the eligible pairs to sample, in (0, 1).
    pub fraction: f64,
    /// Lower bound on the absolute sample size (capped at the eligible count).
    pub min_sample: usize,
    /// Largest error rate that still passes, in [0, 1].
    pub threshold: f64,
}

impl Default for CheckPolicy {
    fn default() -> Self {
        CheckPolicy {
            fraction: 0.25,
            min_sample: 16,
            threshold: 0.02,
        }
    }
}

impl CheckPolicy {
    pub fn sample_size(&self, eligible: usize) -> usize {
        let by_fraction = libm::ceil(self.fraction * eligible as f64) as usize;
        by_fraction.max(self.min_sample).min(eligible)
    }

    pub fn validate(&self, name: &'static str) -> Result<(), ConfigError> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(ConfigError::Fraction {
                name,
                value: self.fraction,
            });
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ConfigError::Proportion {
                name,
                value: self.threshold,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: CheckId,
    /// Publicly announced ordinals, ascending.
    pub sample_indices: Vec<usize>,
    pub mismatches: usize,
    /// Mismatches where the observed parity class differs from the prepared
    /// one. Every first-check mismatch is of this kind.
    pub cross_class: usize,
    pub error_rate: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckReport {
    fn new(
        check: CheckId,
        sample_indices: Vec<usize>,
        mismatches: usize,
        cross_class: usize,
        threshold: f64,
    ) -> Self {
        let error_rate = mismatches as f64 / sample_indices.len() as f64;
        CheckReport {
            check,
            sample_indices,
            mismatches,
            cross_class,
            error_rate,
            threshold,
            passed: error_rate <= threshold,
        }
    }

    pub fn sample_size(&self) -> usize {
        self.sample_indices.len()
    }
}

/// Counts for one transmission of a particle sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionReceipt {
    pub sequence: Transmission,
    pub sent: usize,
    pub received: usize,
}

impl TransmissionReceipt {
    pub fn fraction(&self) -> f64 {
        if self.sent == 0 {
            1.0
        } else {
            self.received as f64 / self.sent as f64
        }
    }
}

/// An ordered raw key: two bits per contributing pair.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeyMaterial {
    bits: Vec<Bit>,
    source_indices: Vec<usize>,
}

impl KeyMaterial {
    pub fn from_labels(entries: impl IntoIterator<Item = (usize, BellLabel)>) -> Self {
        let mut key = KeyMaterial::default();
        for (index, label) in entries {
            let (hi, lo) = label.bits();
            key.bits.push(hi);
            key.bits.push(lo);
            key.source_indices.push(index);
        }
        key
    }

    pub fn bits(&self) -> &[Bit] {
        &self.bits
    }

    pub fn source_indices(&self) -> &[usize] {
        &self.source_indices
    }

    pub fn len_bits(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// The 2-bit codes back as labels, in key order.
    pub fn labels(&self) -> impl Iterator<Item = BellLabel> + '_ {
        self.bits
            .chunks_exact(2)
            .map(|c| BellLabel::from_bits(c[0], c[1]))
    }

    pub fn to_bit_string(&self) -> String {
        self.bits
            .iter()
            .map(|b| if *b == Bit::One { '1' } else { '0' })
            .collect()
    }
}

/// Both ends' view of the raw key of one hop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawKeys {
    pub sender: KeyMaterial,
    pub receiver: KeyMaterial,
}

impl RawKeys {
    pub fn agree(&self) -> bool {
        self.sender == self.receiver
    }
}

/// Step 1: `n` pairs, each in a uniformly drawn Bell state.
pub fn prepare_pairs(n: usize, rng: &mut RandomSource) -> Result<PairLedger, ProtocolError> {
    if n == 0 {
        return Err(ConfigError::NoPairs.into());
    }
    let labels: Vec<BellLabel> = (0..n).map(|_| BellLabel::ALL[rng.below(4)]).collect();
    prepare_labels(&labels)
}

/// Step 1 with the labels fixed in advance, as when a relay re-encodes its
/// raw key.
pub fn prepare_labels(labels: &[BellLabel]) -> Result<PairLedger, ProtocolError> {
    if labels.is_empty() {
        return Err(ConfigError::NoPairs.into());
    }
    let records = labels
        .iter()
        .enumerate()
        .map(|(index, &prepared)| PairRecord {
            index,
            prepared,
            particles: Particles {
                carrier: make_bell_state(prepared),
                custody: Custody {
                    first: Holder::Sender,
                    second: Holder::Sender,
                },
                substitute: None,
            },
            disposition: Disposition::Prepared,
            check_bits: None,
            outcome: None,
        })
        .collect();
    Ok(PairLedger {
        records,
        phase: Phase::Prepared,
        first_passed: None,
        second_passed: None,
        continuation: false,
    })
}

/// Step 2: the second half of every pair crosses the channel.
pub fn transmit_first_sequence(
    ledger: &mut PairLedger,
    channel: &mut AdversaryChannel,
) -> Result<TransmissionReceipt, ProtocolError> {
    ledger.expect_phase(Phase::Prepared, "first sequence already sent")?;
    for r in &mut ledger.records {
        r.particles.custody.second = Holder::Receiver;
        r.disposition = Disposition::InFlight1;
    }
    let sent = ledger.records.len();
    channel.interpose(Transmission::First, ledger)?;
    let mut received = 0;
    for r in &mut ledger.records {
        if r.particles.custody.is_destroyed() {
            r.disposition = Disposition::Dropped;
        } else if r.particles.receiver_has(Qubit::Second) {
            received += 1;
        }
    }
    ledger.phase = Phase::FirstSent;
    Ok(TransmissionReceipt {
        sequence: Transmission::First,
        sent,
        received,
    })
}

/// Steps 3 and 4: the receiver Z-measures a random subset of its halves,
/// announces the positions, the sender measures the partners and both
/// compare parities against the prepared labels.
pub fn first_check(
    ledger: &mut PairLedger,
    policy: &CheckPolicy,
    receiver_rng: &mut RandomSource,
    sender_rng: &mut RandomSource,
) -> Result<CheckReport, ProtocolError> {
    ledger.expect_phase(
        Phase::FirstSent,
        "first check needs the first sequence delivered",
    )?;
    let eligible: Vec<usize> = ledger
        .records
        .iter()
        .filter(|r| r.disposition == Disposition::InFlight1)
        .map(|r| r.index)
        .collect();
    let k = policy.sample_size(eligible.len());
    if k == 0 {
        return Err(ProtocolError::EmptySample(CheckId::First));
    }
    let sample: Vec<usize> = receiver_rng
        .sample_positions(eligible.len(), k)
        .into_iter()
        .map(|p| eligible[p])
        .collect();

    let mut receiver_bits = Vec::with_capacity(k);
    for &i in &sample {
        let p = &mut ledger.records[i].particles;
        let target = match p.substitute {
            Some(ref mut s) => s,
            None if p.custody.second == Holder::Receiver => &mut p.carrier,
            None => {
                return Err(ProtocolError::OrderViolation(
                    "receiver lacks the second half",
                ))
            }
        };
        let (bit, post) = measure_qubit_z(target, Qubit::Second, receiver_rng)?;
        *target = post;
        receiver_bits.push(bit);
    }

    let mut mismatches = 0;
    for (&i, &theirs) in sample.iter().zip(&receiver_bits) {
        let r = &mut ledger.records[i];
        if r.particles.custody.first != Holder::Sender {
            return Err(ProtocolError::OrderViolation("sender lacks the first half"));
        }
        let (mine, post) = measure_qubit_z(&r.particles.carrier, Qubit::First, sender_rng)?;
        r.particles.carrier = post;
        r.check_bits = Some((mine, theirs));
        r.disposition = Disposition::Checked1;
        if Parity::of(mine, theirs) != r.prepared.parity() {
            mismatches += 1;
        }
    }

    let report = CheckReport::new(
        CheckId::First,
        sample,
        mismatches,
        mismatches,
        policy.threshold,
    );
    ledger.first_passed = Some(report.passed);
    ledger.phase = Phase::FirstChecked;
    Ok(report)
}

/// Step 5: the sender releases the first halves of the unchecked pairs.
pub fn transmit_second_sequence(
    ledger: &mut PairLedger,
    channel: &mut AdversaryChannel,
) -> Result<TransmissionReceipt, ProtocolError> {
    ledger.expect_phase(
        Phase::FirstChecked,
        "second sequence requires a completed first check",
    )?;
    if ledger.first_passed != Some(true) && !ledger.continuation {
        return Err(ProtocolError::OrderViolation("first check failed"));
    }
    let mut sent = 0;
    for r in &mut ledger.records {
        if r.disposition == Disposition::InFlight1 {
            r.particles.custody.first = Holder::Receiver;
            r.disposition = Disposition::InFlight2;
            sent += 1;
        }
    }
    channel.interpose(Transmission::Second, ledger)?;
    let mut received = 0;
    for r in &mut ledger.records {
        if r.disposition != Disposition::InFlight2 {
            continue;
        }
        if r.particles.custody.is_destroyed() {
            r.disposition = Disposition::Dropped;
        } else if r.particles.receiver_has(Qubit::First) {
            received += 1;
        }
    }
    ledger.phase = Phase::SecondSent;
    Ok(TransmissionReceipt {
        sequence: Transmission::Second,
        sent,
        received,
    })
}

/// Step 6: Bell-basis measurement of every pair the receiver now holds.
pub fn decode_pairs(ledger: &mut PairLedger, rng: &mut RandomSource) -> Result<(), ProtocolError> {
    ledger.expect_phase(Phase::SecondSent, "decoding requires the second sequence")?;
    for r in &mut ledger.records {
        if r.disposition != Disposition::InFlight2 {
            continue;
        }
        let pair = r
            .particles
            .receiver_pair_mut()
            .ok_or(ProtocolError::OrderViolation(
                "receiver does not hold both halves",
            ))?;
        let (label, post) = measure_bell_basis(pair, rng);
        *pair = post;
        r.outcome = Some(label);
        r.disposition = Disposition::Decoded;
    }
    ledger.phase = Phase::Decoded;
    Ok(())
}

/// Step 7: a random subset of decoded results is compared in public. On a
/// pass the remaining decoded pairs become key.
pub fn second_check(
    ledger: &mut PairLedger,
    policy: &CheckPolicy,
    rng: &mut RandomSource,
) -> Result<CheckReport, ProtocolError> {
    ledger.expect_phase(Phase::Decoded, "second check requires decoding")?;
    let eligible: Vec<usize> = ledger
        .records
        .iter()
        .filter(|r| r.disposition == Disposition::Decoded)
        .map(|r| r.index)
        .collect();
    let k = policy.sample_size(eligible.len());
    if k == 0 {
        return Err(ProtocolError::EmptySample(CheckId::Second));
    }
    let sample: Vec<usize> = rng
        .sample_positions(eligible.len(), k)
        .into_iter()
        .map(|p| eligible[p])
        .collect();

    let mut mismatches = 0;
    let mut cross_class = 0;
    for &i in &sample {
        let r = &mut ledger.records[i];
        let seen = r
            .outcome
            .ok_or(ProtocolError::OrderViolation("pair was not decoded"))?;
        if seen != r.prepared {
            mismatches += 1;
            if seen.parity() != r.prepared.parity() {
                cross_class += 1;
            }
        }
        r.disposition = Disposition::Checked2;
    }
    let report = CheckReport::new(
        CheckId::Second,
        sample,
        mismatches,
        cross_class,
        policy.threshold,
    );
    if report.passed {
        for r in &mut ledger.records {
            if r.disposition == Disposition::Decoded {
                r.disposition = Disposition::Key;
            }
        }
    }
    ledger.second_passed = Some(report.passed);
    ledger.phase = Phase::SecondChecked;
    Ok(report)
}

/// Raw keys from every pair marked as key, in ledger order.
pub fn extract_key(ledger: &PairLedger) -> Result<RawKeys, ProtocolError> {
    ledger.expect_phase(Phase::SecondChecked, "key extraction requires both checks")?;
    if ledger.first_passed != Some(true) || ledger.second_passed != Some(true) {
        return Err(ProtocolError::OrderViolation("a check failed"));
    }
    let kept = || {
        ledger
            .records
            .iter()
            .filter(|r| r.disposition == Disposition::Key)
    };
    let sender = KeyMaterial::from_labels(kept().map(|r| (r.index, r.prepared)));
    let receiver = KeyMaterial::from_labels(
        kept().map(|r| (r.index, r.outcome.expect("key pairs are decoded"))),
    );
    Ok(RawKeys { sender, receiver })
}
