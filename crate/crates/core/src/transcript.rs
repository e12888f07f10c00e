//! Ordered event log of one trial.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::adversary::AttackStrategy;
use crate::protocol::{CheckId, CheckReport, Party, Transmission};
use crate::quantum::{BellLabel, Bit};
use crate::session::AbortReason;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Z,
    Bell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event", content = "payload")]
pub enum EventKind {
    /// Pair sequence created; `codes` holds the secret 2-bit labels in order.
    Prepared {
        pairs: usize,
        codes: String,
    },
    /// A relay hop's ledger position `i` stands for upstream ordinal `ordinals[i]`.
    Relayed {
        ordinals: Vec<usize>,
    },
    Sent {
        sequence: Transmission,
        sent: usize,
    },
    Intercepted {
        sequence: Transmission,
        attack: String,
        captured: usize,
        measured: usize,
        destroyed: usize,
    },
    Received {
        sequence: Transmission,
        received: usize,
    },
    /// Public announcement of which positions a check samples.
    Announced {
        check: CheckId,
        indices: Vec<usize>,
    },
    Measured {
        basis: Basis,
        indices: Vec<usize>,
        outcomes: String,
    },
    CheckCompleted {
        check: CheckId,
        sample_size: usize,
        mismatches: usize,
        error_rate: f64,
        threshold: f64,
        passed: bool,
    },
    Stalled {
        sequence: Transmission,
        sent: usize,
        received: usize,
        loss_tolerance: f64,
    },
    Aborted {
        reason: AbortReason,
    },
    Committed {
        key_pairs: usize,
        key_bits: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub hop: u8,
    pub step: u8,
    pub actor: Party,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    events: Vec<Event>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, hop: u8, step: u8, actor: Party, kind: EventKind) {
        self.events.push(Event {
            hop,
            step,
            actor,
            kind,
        });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn extend(&mut self, other: Transcript) {
        self.events.extend(other.events);
    }
}

pub(crate) fn bit_string(bits: impl IntoIterator<Item = Bit>) -> String {
    bits.into_iter()
        .map(|b| if b == Bit::One { '1' } else { '0' })
        .collect()
}

pub(crate) fn code_string(labels: impl IntoIterator<Item = BellLabel>) -> String {
    let mut s = String::new();
    for l in labels {
        let (hi, lo) = l.bits();
        s.push(if hi == Bit::One { '1' } else { '0' });
        s.push(if lo == Bit::One { '1' } else { '0' });
    }
    s
}

pub(crate) fn check_completed(report: &CheckReport) -> EventKind {
    EventKind::CheckCompleted {
        check: report.check,
        sample_size: report.sample_size(),
        mismatches: report.mismatches,
        error_rate: report.error_rate,
        threshold: report.threshold,
        passed: report.passed,
    }
}

pub(crate) fn attack_name(strategy: &AttackStrategy) -> String {
    String::from(strategy.name())
}
