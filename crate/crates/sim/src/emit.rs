//! Report and transcript encodings.
//!
//! - structured: one pretty-printed JSON document (config echo, references,
//!   per-trial array, aggregates).
//! - tabular: CSV, one row per trial and hop, columns fixed by
//!   [`SCHEMA_VERSION`].
//! - transcript: JSON lines, one event per line, keys
//!   `trial, hop, step, actor, event, payload`.
//!
//! Output depends only on report content, so identical runs give identical
//! bytes.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use eprqkd_core::{Event, Transcript};
use serde::Serialize;

use crate::report::{RunReport, SCHEMA_VERSION};
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Structured,
    Tabular,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "structured" => Ok(Format::Structured),
            "tabular" => Ok(Format::Tabular),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

pub fn structured(report: &RunReport) -> Result<Vec<u8>, SimError> {
    let mut out = serde_json::to_vec_pretty(report)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Serialize)]
struct Row<'a> {
    schema: &'a str,
    trial: u64,
    seed: u64,
    hop: u8,
    attack: &'a str,
    committed: bool,
    abort_hop: Option<u8>,
    abort_reason: Option<String>,
    key_bits: usize,
    keys_agree: Option<bool>,
    sent_1: Option<usize>,
    received_1: Option<usize>,
    sent_2: Option<usize>,
    received_2: Option<usize>,
    check1_sample: Option<usize>,
    check1_mismatches: Option<usize>,
    check1_error_rate: Option<f64>,
    check1_passed: Option<bool>,
    check2_sample: Option<usize>,
    check2_mismatches: Option<usize>,
    check2_cross_class: Option<usize>,
    check2_error_rate: Option<f64>,
    check2_passed: Option<bool>,
    hop_abort: Option<String>,
    key_pairs: usize,
    checked_1: usize,
    checked_2: usize,
    dropped: usize,
}

pub fn tabular(report: &RunReport) -> Result<Vec<u8>, SimError> {
    let protocol = &report.config.protocol;
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in &report.trials {
        for h in &t.hops {
            let attacked = protocol.attack_hop.is_none_or(|hop| hop == h.hop);
            w.serialize(Row {
                schema: SCHEMA_VERSION,
                trial: t.trial,
                seed: t.seed,
                hop: h.hop,
                attack: if attacked {
                    protocol.attack.name()
                } else {
                    "none"
                },
                committed: t.committed,
                abort_hop: t.abort.map(|a| a.hop),
                abort_reason: t.abort.map(|a| a.reason.to_string()),
                key_bits: t.key_bits,
                keys_agree: t.keys_agree,
                sent_1: h.sent_1,
                received_1: h.received_1,
                sent_2: h.sent_2,
                received_2: h.received_2,
                check1_sample: h.first_check.as_ref().map(|c| c.sample_size),
                check1_mismatches: h.first_check.as_ref().map(|c| c.mismatches),
                check1_error_rate: h.first_check.as_ref().map(|c| c.error_rate),
                check1_passed: h.first_check.as_ref().map(|c| c.passed),
                check2_sample: h.second_check.as_ref().map(|c| c.sample_size),
                check2_mismatches: h.second_check.as_ref().map(|c| c.mismatches),
                check2_cross_class: h.second_check.as_ref().map(|c| c.cross_class),
                check2_error_rate: h.second_check.as_ref().map(|c| c.error_rate),
                check2_passed: h.second_check.as_ref().map(|c| c.passed),
                hop_abort: h.abort.map(|a| a.to_string()),
                key_pairs: h.key_pairs,
                checked_1: h.dispositions.checked_1,
                checked_2: h.dispositions.checked_2,
                dropped: h.dispositions.dropped,
            })?;
        }
    }
    w.into_inner().map_err(|e| SimError::Io {
        path: "<csv buffer>".into(),
        source: e.into_error(),
    })
}

#[derive(Serialize)]
struct Line<'a> {
    trial: u64,
    #[serde(flatten)]
    event: &'a Event,
}

pub fn transcript_lines(transcripts: &[(u64, Transcript)]) -> Result<Vec<u8>, SimError> {
    let mut out = Vec::new();
    for (trial, t) in transcripts {
        for event in t.events() {
            serde_json::to_writer(
                &mut out,
                &Line {
                    trial: *trial,
                    event,
                },
            )?;
            out.push(b'\n');
        }
    }
    Ok(out)
}

pub fn render(report: &RunReport, format: Format) -> Result<Vec<u8>, SimError> {
    match format {
        Format::Structured => structured(report),
        Format::Tabular => tabular(report),
    }
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), SimError> {
    fs::write(path, bytes).map_err(|e| SimError::io(path, e))
}

/// Where the transcript of a report written to `out` goes.
pub fn transcript_path(out: &Path) -> std::path::PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".transcript.jsonl");
    name.into()
}
