//! Simulation core for two-step EPR-pair quantum key distribution.
//!
//! The sender prepares N Bell pairs, each encoding two key bits, and ships
//! the pairs in two halves. After the first half-sequence arrives the
//! receiver Z-measures a random subset to test correlations against the
//! sender; only then is the second half-sequence released and every pair
//! Bell-measured. A second check on decoded pairs guards the key.
//!
//! - [`quantum`]: exact two-qubit states and measurements.
//! - [`protocol`]: the pair ledger and the individual steps.
//! - [`adversary`]: identity channel, measure-resend, fake-pair and opaque attacks.
//! - [`analysis`]: entropy, mutual information, error rates, efficiency.
//! - [`session`]: whole trials, including a three-party relay chain.
//!
//! The crate is `no_std` and needs only `alloc`.
#![no_std]

extern crate alloc;

pub mod adversary;
pub mod analysis;
pub mod error;
pub mod protocol;
pub mod quantum;
pub mod rng;
pub mod session;
pub mod transcript;

pub use adversary::{AttackStrategy, EveState, FakePairPolicy};
pub use error::{ConfigError, ProtocolError};
pub use protocol::{CheckPolicy, CheckReport, KeyMaterial, PairLedger, Party};
pub use quantum::{BellLabel, Bit, Qubit, TwoQubitState};
pub use rng::{RandomSource, StreamId};
pub use session::{
    run_multiparty, run_protocol, run_trial, AbortReason, HopReport, ProtocolConfig, TrialRun,
};
pub use transcript::{Event, EventKind, Transcript};
