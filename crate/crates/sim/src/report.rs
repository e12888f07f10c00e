//! Report schema and the aggregation fold.
//!
//! Aggregates are a pure function of the per-trial records, folded in trial
//! order, so a report can be re-verified from its own rows.

use eprqkd_core::adversary::EveCountTable;
use eprqkd_core::analysis::{
    efficiency, mutual_information, reference_bb84, Bb84Reference, EfficiencyInputs, ErrorCount,
    JointDistribution, RateEstimate,
};
use eprqkd_core::protocol::{CheckReport, CountTable, DispositionTally};
use eprqkd_core::session::{AbortReason, HopReport, TrialRun};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::SimError;

pub const SCHEMA_VERSION: &str = "eprqkd-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub sample_size: usize,
    pub mismatches: usize,
    pub cross_class: usize,
    pub error_rate: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl From<&CheckReport> for CheckSummary {
    fn from(r: &CheckReport) -> Self {
        CheckSummary {
            sample_size: r.sample_size(),
            mismatches: r.mismatches,
            cross_class: r.cross_class,
            error_rate: r.error_rate,
            threshold: r.threshold,
            passed: r.passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopRecord {
    pub hop: u8,
    pub sent_1: Option<usize>,
    pub received_1: Option<usize>,
    pub sent_2: Option<usize>,
    pub received_2: Option<usize>,
    pub first_check: Option<CheckSummary>,
    pub second_check: Option<CheckSummary>,
    pub abort: Option<AbortReason>,
    pub key_pairs: usize,
    pub dispositions: DispositionTally,
    /// Prepared code × receiver's Bell outcome.
    pub sender_receiver: CountTable,
    /// Prepared code × Eve's guess symbol.
    pub sender_eve: EveCountTable,
}

impl From<&HopReport> for HopRecord {
    fn from(h: &HopReport) -> Self {
        HopRecord {
            hop: h.hop,
            sent_1: h.first_transmission.map(|t| t.sent),
            received_1: h.first_transmission.map(|t| t.received),
            sent_2: h.second_transmission.map(|t| t.sent),
            received_2: h.second_transmission.map(|t| t.received),
            first_check: h.first_check.as_ref().map(Into::into),
            second_check: h.second_check.as_ref().map(Into::into),
            abort: h.abort,
            key_pairs: h
                .keys
                .as_ref()
                .map_or(0, |k| k.sender.source_indices().len()),
            dispositions: h.tally,
            sender_receiver: h.sender_receiver,
            sender_eve: h.sender_eve,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbortInfo {
    pub hop: u8,
    pub reason: AbortReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub committed: bool,
    pub abort: Option<AbortInfo>,
    /// Length of the key common to every party.
    pub key_bits: usize,
    /// Whether every party's key is identical; absent without a key.
    pub keys_agree: Option<bool>,
    pub hops: Vec<HopRecord>,
}

impl TrialRecord {
    pub fn from_run(trial: u64, seed: u64, run: &TrialRun) -> Self {
        TrialRecord {
            trial,
            seed,
            committed: run.keys.is_some(),
            abort: run.aborted().map(|(hop, reason)| AbortInfo { hop, reason }),
            key_bits: run
                .keys
                .as_ref()
                .and_then(|k| k.first())
                .map_or(0, |k| k.key.len_bits()),
            keys_agree: run.keys_agree(),
            hops: run.hops.iter().map(HopRecord::from).collect(),
        }
    }
}

/// Mean across trials with the standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub standard_error: f64,
    pub count: u64,
}

impl Summary {
    fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let standard_error = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Some(Summary {
            mean,
            standard_error,
            count: values.len() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub trials: u64,
    pub committed: u64,
    /// Share of trials that aborted for any reason.
    pub detection_rate: f64,
    pub first_check_detection_rate: f64,
    pub second_check_detection_rate: f64,
    pub stall_rate: f64,
    /// Share of committed trials in which all parties hold the same key.
    pub key_agreement_rate: Option<f64>,
    pub mean_key_bits: f64,
    /// Per-trial error rates of each check, averaged over trials and hops.
    pub first_error_rate: Option<Summary>,
    pub second_error_rate: Option<Summary>,
    /// Pooled mismatch counts with binomial standard errors.
    pub first_error_pooled: Option<RateEstimate>,
    pub second_error_pooled: Option<RateEstimate>,
    pub receipt_fraction_1: Option<Summary>,
    pub receipt_fraction_2: Option<Summary>,
    /// Bits per pair, sender vs receiver, from pooled decoded pairs.
    pub i_ab: Option<f64>,
    /// Bits per pair, sender vs Eve; zero when Eve observed nothing.
    pub i_ae: f64,
    /// Secret bits over (qubits + non-check classical bits) for kept pairs.
    pub efficiency: Option<f64>,
}

/// Constants the simulated numbers are read against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub bb84: Bb84Reference,
    pub efficiency_bb84: f64,
    pub efficiency_epr: f64,
    pub efficiency_two_step: f64,
}

impl References {
    pub fn compute() -> Self {
        References {
            bb84: reference_bb84(),
            efficiency_bb84: efficiency(&EfficiencyInputs::BB84).expect("positive denominator"),
            efficiency_epr: efficiency(&EfficiencyInputs::EPR).expect("positive denominator"),
            efficiency_two_step: efficiency(&EfficiencyInputs::TWO_STEP)
                .expect("positive denominator"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub config: RunConfig,
    pub references: References,
    pub trials: Vec<TrialRecord>,
    pub aggregate: Aggregates,
}

impl RunReport {
    pub fn new(config: RunConfig, trials: Vec<TrialRecord>) -> Self {
        let aggregate = aggregate(&trials);
        RunReport {
            schema: SCHEMA_VERSION.to_string(),
            config,
            references: References::compute(),
            trials,
            aggregate,
        }
    }
}

fn rate(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

/// Folds per-trial records, in the order given, into aggregates.
pub fn aggregate(records: &[TrialRecord]) -> Aggregates {
    let n = records.len();
    let aborted_with = |pred: fn(&AbortReason) -> bool| {
        records
            .iter()
            .filter(|r| r.abort.as_ref().is_some_and(|a| pred(&a.reason)))
            .count()
    };
    let committed: Vec<&TrialRecord> = records.iter().filter(|r| r.committed).collect();
    let agreeing = committed
        .iter()
        .filter(|r| r.keys_agree == Some(true))
        .count();

    let hops = || records.iter().flat_map(|r| r.hops.iter());
    let rates = |pick: fn(&HopRecord) -> Option<&CheckSummary>| {
        hops()
            .filter_map(pick)
            .map(|c| c.error_rate)
            .collect::<Vec<_>>()
    };
    let pooled = |pick: fn(&HopRecord) -> Option<&CheckSummary>| {
        let mut count = ErrorCount::default();
        for c in hops().filter_map(pick) {
            count.add(ErrorCount {
                mismatches: c.mismatches as u64,
                samples: c.sample_size as u64,
            });
        }
        RateEstimate::try_from(count).ok()
    };
    let receipts = |pick: fn(&HopRecord) -> Option<(usize, usize)>| {
        hops()
            .filter_map(pick)
            .filter(|(sent, _)| *sent > 0)
            .map(|(sent, received)| received as f64 / sent as f64)
            .collect::<Vec<_>>()
    };

    let mut ab: CountTable = [[0; 4]; 4];
    let mut ae: EveCountTable = Default::default();
    let mut key_pairs = 0usize;
    for h in hops() {
        for (dst, src) in ab
            .iter_mut()
            .flatten()
            .zip(h.sender_receiver.iter().flatten())
        {
            *dst += src;
        }
        for (dst, src) in ae.iter_mut().flatten().zip(h.sender_eve.iter().flatten()) {
            *dst += src;
        }
        key_pairs += h.key_pairs;
    }

    Aggregates {
        trials: n as u64,
        committed: committed.len() as u64,
        detection_rate: rate(records.iter().filter(|r| r.abort.is_some()).count(), n),
        first_check_detection_rate: rate(
            aborted_with(|r| matches!(r, AbortReason::FirstCheckFailed)),
            n,
        ),
        second_check_detection_rate: rate(
            aborted_with(|r| matches!(r, AbortReason::SecondCheckFailed)),
            n,
        ),
        stall_rate: rate(
            aborted_with(|r| matches!(r, AbortReason::Stalled { .. })),
            n,
        ),
        key_agreement_rate: (!committed.is_empty()).then(|| rate(agreeing, committed.len())),
        mean_key_bits: if n == 0 {
            0.0
        } else {
            records.iter().map(|r| r.key_bits as f64).sum::<f64>() / n as f64
        },
        first_error_rate: Summary::of(&rates(|h| h.first_check.as_ref())),
        second_error_rate: Summary::of(&rates(|h| h.second_check.as_ref())),
        first_error_pooled: pooled(|h| h.first_check.as_ref()),
        second_error_pooled: pooled(|h| h.second_check.as_ref()),
        receipt_fraction_1: Summary::of(&receipts(|h| h.sent_1.zip(h.received_1))),
        receipt_fraction_2: Summary::of(&receipts(|h| h.sent_2.zip(h.received_2))),
        i_ab: JointDistribution::from_count_table(&ab)
            .ok()
            .map(|j| mutual_information(&j)),
        i_ae: JointDistribution::from_count_table(&ae).map_or(0.0, |j| mutual_information(&j)),
        efficiency: EfficiencyInputs::for_key_pairs(key_pairs)
            .ok()
            .and_then(|e| efficiency(&e).ok()),
    }
}

/// Recomputes the aggregates of `report` from its own trial rows.
pub fn verify(report: &RunReport) -> Result<(), SimError> {
    if report.schema != SCHEMA_VERSION {
        return Err(SimError::Verify(format!(
            "schema {} is not {SCHEMA_VERSION}",
            report.schema
        )));
    }
    if report.trials.len() as u64 != report.config.trials {
        return Err(SimError::Verify(format!(
            "{} trial rows for {} configured trials",
            report.trials.len(),
            report.config.trials
        )));
    }
    for (i, t) in report.trials.iter().enumerate() {
        if t.trial != i as u64 || t.seed != report.config.trial_seed(i as u64) {
            return Err(SimError::Verify(format!("trial row {i} is out of order")));
        }
    }
    let recomputed = aggregate(&report.trials);
    if recomputed != report.aggregate {
        return Err(SimError::Verify(format!(
            "aggregates differ: stored {:?}, recomputed {:?}",
            report.aggregate, recomputed
        )));
    }
    Ok(())
}
